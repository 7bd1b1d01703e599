"""Exception types raised by the solver stack."""


class InfGMRESError(Exception):
    """Base class for all errors raised by :mod:`infgmres`."""


class StructureError(InfGMRESError, ValueError):
    """Block sizes or dimensions do not match the problem."""


class ProblemDefinitionError(InfGMRESError):
    """A problem cannot provide the requested data (singular A(0), missing
    derivative order, malformed manifest, ...)."""


class ProblemFileError(ProblemDefinitionError):
    """A file referenced by a problem definition is missing or unreadable."""


class EmptyKrylovError(InfGMRESError):
    """The starting vector A(0)^{-1} b vanishes, so there is nothing to span."""


class SizeGuardError(InfGMRESError):
    """A dense reference computation was requested beyond its hard size limit."""


class UndefinedFactorError(InfGMRESError, ValueError):
    """No usable residual ratios remain after discarding stagnated iterations."""


class RankDeficientWarning(UserWarning):
    """The shifted least-squares matrix was numerically rank deficient."""

"""Infinite GMRES: solve A(mu) x = b for many mu from one Krylov basis."""

from .convergence import (
    BoundPrediction,
    SpectrumEstimate,
    gelfand_limit_check,
    observed_factor,
    predict_bound,
    spectrum_dense,
    spectrum_ritz,
)
from .exceptions import (
    EmptyKrylovError,
    InfGMRESError,
    ProblemDefinitionError,
    ProblemFileError,
    RankDeficientWarning,
    SizeGuardError,
    StructureError,
    UndefinedFactorError,
)
from .krylov import ArnoldiFactorization, OrthoPolicy, arnoldi_build, basis_first_block, gram_schmidt
from .linearization import (
    BlockVector,
    LowRankTaylorProblem,
    TaylorProblem,
    companion_apply,
    companion_apply_lowrank,
    residual_true,
)
from .problems import (
    DelayProblem,
    GenericLowRankProblem,
    GenericProblem,
    Helmholtz1DProblem,
    build_delay,
    build_helmholtz1d,
    load_generic,
)
from .solver import ParamSolution, SweepResult, evaluate, sweep

__version__ = "0.1.0"

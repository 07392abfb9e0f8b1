from .config import SolverConfig, ObbtConfig, ReducedCostMode, Settings, get_settings
from .exceptions import (
    BatchLpException,
    InvalidMatrix,
    DimensionMismatch,
    ZeroMatrix,
    InvalidProblem,
    InvalidOverride,
    InvalidRequest,
    StepSizeError,
    MpsFormatError,
    OracleTooLarge,
)
from .sparse import SparseMatrix, build_csr, from_dense, spmm, spmv, spectral_norm
from .bounds import BoundsInterval, project_box, support_function
from .model import (
    LpProblem,
    BatchProblem,
    ColumnOverride,
    OverrideKind,
    ObjectiveMode,
    Presolved,
    SolveStatus,
    validate,
    resolve_column,
)
from .pdhg import SolveResult, StepParams, solve
from .batch import BatchSolveResult, BatchWorkspace, solve_batch
from .strong_branching import FsbRequest, FsbOutcome, build_fsb_batch, run_fsb, score_branching
from .obbt import ObbtOutcome, build_obbt_batch, run_obbt, domain_reduction_stats
from .tuner import TuneReport, measure_spmm, choose_batch_size, tune
from .oracle import OracleResult, OracleStatus, oracle_solve

"""Power-flow infeasibility localization on equivalent-circuit models."""
from .errors import (
    InfeasLocError,
    InvalidAlpha,
    InvalidTopology,
    KTooLarge,
    MalformedCase,
    SingularMatrix,
    VoltageCollapse,
)
from .localizer import (
    EnforcerVector,
    SparsityConfig,
    assign_enforcers,
    calibrate_uniform,
    init_bounds,
    localize,
    localize_k_sparse,
    solve_sparse,
    sparsity_count,
    verify_kkt,
)
from .network import Network, load_case, parse_matpower, scale_loading, validate
from .pfcore import InfeasibilitySolution, SolverOptions, Status, solve_l2, solve_powerflow

__version__ = "0.1.0"

"""ace-lab: adaptively compressed exchange eigensolver and verification toolkit.

Solves Hermitian eigenvalue problems (A + B) v = lambda v with an expensive
operator B by iterating the density-matrix map of A plus a rank-n adaptive
compression of B, and makes the method's provable properties executable:
consistency, operator sandwich bounds, eigenvalue monotonicity, exact local
rates from Jacobian spectra, sub-projector convergence, and the fixed-point
landscape.
"""

from .errors import (
    AceError,
    AssumptionViolated,
    DegenerateGap,
    DimensionMismatch,
    EnumerationCapExceeded,
    InsufficientTrace,
    InvalidParameter,
    NotFixed,
    NotTangent,
    RankOutOfRange,
    ShiftInsufficient,
    UnknownName,
)
from .linalg import (
    Frame,
    HermitianOperator,
    Spectrum,
    density_matrix,
    eigh,
    norm2,
    qr_completion,
    sub_frame,
    subspace_distance,
)
from .compression import CompressedOperator, MatvecCounter, apply, compress, materialize, schur_complement
from .iteration import (
    IterationTrace,
    Problem,
    RateFit,
    TraceStep,
    auto_shift,
    estimate_rate,
    fit_geometric_rate,
    fixed_point_map,
    run,
    run_summary,
    trace_to_csv,
)
from .problems import (
    EnsembleSpec,
    counterexample,
    load_problem,
    model_1d_exchange,
    problem_from_spectrum,
    random_problem,
    save_problem,
)
from .analysis import (
    FixedPointReport,
    JacobianBlocks,
    chart_direction,
    dBtilde_dP,
    dF_dP,
    dP_dH,
    enumerate_invariant_projectors,
    functional_F,
    gamma_bound,
    genericity_check,
    jacobian_blocks,
    nearest_invariant_projector,
    saddle_curvature,
    tangent_chart,
)

__version__ = "0.1.0"

__all__ = [
    "AceError",
    "AssumptionViolated",
    "DegenerateGap",
    "DimensionMismatch",
    "EnumerationCapExceeded",
    "InsufficientTrace",
    "InvalidParameter",
    "NotFixed",
    "NotTangent",
    "RankOutOfRange",
    "ShiftInsufficient",
    "UnknownName",
    "Frame",
    "HermitianOperator",
    "Spectrum",
    "density_matrix",
    "eigh",
    "norm2",
    "qr_completion",
    "sub_frame",
    "subspace_distance",
    "CompressedOperator",
    "MatvecCounter",
    "apply",
    "compress",
    "materialize",
    "schur_complement",
    "IterationTrace",
    "Problem",
    "RateFit",
    "TraceStep",
    "auto_shift",
    "estimate_rate",
    "fit_geometric_rate",
    "fixed_point_map",
    "run",
    "run_summary",
    "trace_to_csv",
    "EnsembleSpec",
    "counterexample",
    "load_problem",
    "model_1d_exchange",
    "problem_from_spectrum",
    "random_problem",
    "save_problem",
    "FixedPointReport",
    "JacobianBlocks",
    "chart_direction",
    "dBtilde_dP",
    "dF_dP",
    "dP_dH",
    "enumerate_invariant_projectors",
    "functional_F",
    "gamma_bound",
    "genericity_check",
    "jacobian_blocks",
    "nearest_invariant_projector",
    "saddle_curvature",
    "tangent_chart",
    "__version__",
]

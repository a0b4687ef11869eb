"""Quantum Bhattacharyya-type variance bounds on truncated Fock spaces."""

__version__ = "0.1.0"

from .bhattacharyya import (  # noqa: E402
    BoundResult,
    InconsistentInputsError,
    InfoMatrix,
    bound,
    bound_l,
    bound_monotonicity_report,
    bound_r,
    bound_s,
    gaussian_j_closed_form,
    information_matrix,
    j_matrix,
)
from .estimators import (  # noqa: E402
    Estimator,
    VerificationReport,
    counting,
    optimal_candidate,
    squeeze_decomposition_check,
    theorem3_cubic_local,
    theorem3_square_estimator,
    theorem4_antiholomorphic,
    theorem4_holomorphic,
    theorem4_realvalued,
    verify,
)
from .fock import (  # noqa: E402
    DensityOperator,
    FockOperator,
    TruncationError,
    annihilation,
    creation,
    displaced_thermal,
)
from .gfunc import GFunction, SpecError, parse_g, parse_operator  # noqa: E402
from .logderiv import LogDerivVector, gaussian_log_derivatives, solve  # noqa: E402
from .model import (  # noqa: E402
    DerivativeStack,
    ParamKind,
    ParametricModel,
    gaussian_derivative_stack,
    gaussian_model,
    real_derivatives,
    wirtinger_derivatives,
)
from .poly import NormalOrderedPoly  # noqa: E402

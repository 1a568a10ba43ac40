"""Broadcast-price dual descent for capacity-constrained resource allocation."""

from .analysis import (
    DisconnectedReport,
    PriceInterval,
    RateCertificate,
    annotate,
    certify_linear,
    certify_sublinear,
    check_assumption5,
    check_connectivity,
    check_n_independence,
    check_prop6_condition,
)
from .dual import (
    DualState,
    ProblemInstance,
    StepSizePolicy,
    StoppingConfig,
    dual_component,
    dual_gradient,
    dual_value,
    max_feasible_step,
    price_step,
)
from .oracle import OracleSolution, brute_force_primal, solve
from .protocol import (
    IterationRecord,
    Supplier,
    Trajectory,
    UserAgent,
    feasibility_certificate,
    replay_aggregate,
    run,
)
from .utility import (
    GenericUtility,
    LogUtility,
    UserProfile,
    UtilityModel,
    breakpoints,
    curvature_on_interval,
    demand,
)

__version__ = "0.1.0"

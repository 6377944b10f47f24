"""Robust information design for Bayesian congestion games on parallel networks."""

from .design import RobustSolveReport, nominal_design, robust_design
from .equilibrium import nash_flow, nash_policy, verify_nash
from .errors import (
    EmptySupport,
    InputError,
    MissingNashProfile,
    NondifferentiablePoint,
    NotOptimal,
    NumericalFailure,
    ObedienceLabError,
    RankDeficientActiveSet,
    UnsupportedNorm,
)
from .lp import LinearProgram, LpSolution, Status, solve_lp
from .model import (
    DeviationPair,
    GameInstance,
    RecommendationSet,
    SignalingPolicy,
    SupportPattern,
    delta,
    deviation_pairs,
    deviation_vector,
    expected_cost,
    latency,
    obedience_slack,
    recommendation_masses,
    social_cost_profile,
)
from .reduction import caratheodory_reduce
from .robustness import (
    Mode,
    NormChoice,
    certified_radius,
    certified_radius_star,
    is_obedient,
    is_robust_obedient,
    robust_radius,
    worst_case_slack,
)
from .sensitivity import active_set, projected_jacobian, slope_bound, value_sweep

__version__ = "0.1.0"

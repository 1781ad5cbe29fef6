"""Fair risk minimization under subpopulation shift: geometry, training and experiments."""

from .core import (
    EmptyCellError,
    FairKind,
    FairSubspace,
    GroupMarginal,
    GroupSpace,
    RiskProfile,
    ShapeError,
    empirical_risk_profile,
    fairness_gap,
    overall_risk,
    project_fair,
    project_fair_perp,
)
from .geometry import (
    AssumptionError,
    InfeasibleFairError,
    RecoveryVerdict,
    RiskPolytope,
    ThresholdResult,
    bayes_fair_check,
    decompose_bias,
    minimize_linear,
    minimize_linear_fair,
    normal_cone_member,
    orthogonality_check,
    recovery_condition,
    rp_threshold,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionError", "EmptyCellError", "FairKind", "FairSubspace", "GroupMarginal",
    "GroupSpace", "InfeasibleFairError", "RecoveryVerdict", "RiskPolytope", "RiskProfile",
    "ShapeError", "ThresholdResult", "bayes_fair_check", "decompose_bias",
    "empirical_risk_profile", "fairness_gap", "minimize_linear", "minimize_linear_fair",
    "normal_cone_member", "orthogonality_check", "overall_risk", "project_fair",
    "project_fair_perp", "recovery_condition", "rp_threshold",
]

import enum


class SkedasisFamily(str, enum.Enum):
    """Closed-form skedasis families (normalisation and C(x) are exact)."""
    CONSTANT = "constant"
    AFFINE = "affine"
    LOG_AFFINE = "log_affine"
    # piecewise constant in the first coordinate
    STEP = "step"


class CovariateKind(str, enum.Enum):
    UNIFORM = "uniform"
    DISCRETE = "discrete"


class TailFamily(str, enum.Enum):
    """
    Baseline tail above y0.

    - EXACT_PARETO: F̄(y) = y^-α
    - HALL: F̄(y) = y^-α (1 + c y^-β) / (1 + c)
    """
    EXACT_PARETO = "exact_pareto"
    HALL = "hall"


class ThresholdMode(str, enum.Enum):
    FIXED = "fixed"
    TOP_K = "top_k"


class ExperimentKind(str, enum.Enum):
    """
    Monte Carlo experiments.

    The first four standardise the estimators of the extreme value index,
    integrated skedasis, skedasis and conditional quantile. The others are
    variants: unconditional Weissman, delta-method ratio form, and the joint
    (γ̂, Ĉ_n) independence check.
    """
    GAMMA = "gamma"
    INTEGRATED_C = "integratedC"
    SKEDASIS = "skedasis"
    QUANTILE = "quantile"
    WEISSMAN = "weissman"
    QUANTILE_RATIO = "quantile_ratio"
    JOINT = "joint"


# kinds that need a kernel window
KERNEL_KINDS = {ExperimentKind.SKEDASIS, ExperimentKind.QUANTILE, ExperimentKind.QUANTILE_RATIO}
# kinds that need an extrapolation level
QUANTILE_KINDS = {ExperimentKind.QUANTILE, ExperimentKind.QUANTILE_RATIO, ExperimentKind.WEISSMAN}


class Command(str, enum.Enum):
    GENERATE = "generate"
    ESTIMATE = "estimate"
    COUPLING = "coupling"
    VALIDATE = "validate"

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator
from pathlib import Path
from typing import Dict, List, Optional, Tuple
import hashlib
import math
import numpy as np
from proptail.models.enums import (
    Command, CovariateKind, ExperimentKind, SkedasisFamily, TailFamily, ThresholdMode,
)

Point = Tuple[float, ...]

PROB_TOL = 1e-12


# Model schemas
class SkedasisSpec(BaseModel):
    """
    Skedasis family and its normalisation.

    σ(x) = σ_raw(x) / normalization. A spec with normalization None is raw and
    must go through normalize_skedasis before it can be evaluated.

    Parameter layout per family:
        constant:   [level]
        affine:     [a, b_1, ..., b_d]          σ_raw = a + Σ b_j x_j
        log_affine: [a, b_1, ..., b_d]          σ_raw = exp(a + Σ b_j x_j)
        step:       [v_1, t_1, v_2, ..., t_{m-1}, v_m] levels v_i on [t_{i-1}, t_i) of x_1
    """
    model_config = ConfigDict(frozen=True)

    family: SkedasisFamily
    params: List[float] = Field(default_factory=lambda: [1.0])
    normalization: Optional[float] = Field(default=None, gt=0)
    sup_bound: Optional[float] = None
    inf_bound: Optional[float] = None

    @field_validator('params')
    @classmethod
    def validate_params(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError('skedasis params must not be empty')
        if not all(math.isfinite(p) for p in v):
            raise ValueError('skedasis params must be finite')
        return v

    @model_validator(mode='after')
    def validate_layout(self) -> 'SkedasisSpec':
        if self.family == SkedasisFamily.CONSTANT and len(self.params) != 1:
            raise ValueError('constant skedasis takes exactly one parameter')
        if self.family == SkedasisFamily.STEP:
            if len(self.params) % 2 != 1:
                raise ValueError('step skedasis params must alternate level, breakpoint, ..., level')
            breaks = self.params[1::2]
            if any(b2 <= b1 for b1, b2 in zip(breaks, breaks[1:])):
                raise ValueError('step breakpoints must be strictly increasing')
        return self

    @property
    def is_normalized(self) -> bool:
        return self.normalization is not None


class CovariateSpec(BaseModel):
    """Covariate law: uniform on [0,1]^d or finitely many weighted atoms."""
    model_config = ConfigDict(frozen=True)

    kind: CovariateKind = CovariateKind.UNIFORM
    dim: int = Field(default=1, gt=0)
    points: Optional[List[Point]] = None
    probs: Optional[List[float]] = None

    @model_validator(mode='after')
    def validate_support(self) -> 'CovariateSpec':
        if self.kind == CovariateKind.UNIFORM:
            if self.points is not None or self.probs is not None:
                raise ValueError('uniform covariates take no support points')
            return self
        if not self.points or not self.probs:
            raise ValueError('discrete covariates need points and probs')
        if len(self.points) != len(self.probs):
            raise ValueError('points and probs must have the same length')
        if any(len(p) != self.dim for p in self.points):
            raise ValueError(f'every support point must have dimension {self.dim}')
        if len(set(self.points)) != len(self.points):
            raise ValueError('support points must be distinct')
        if any(p < 0 for p in self.probs):
            raise ValueError('probs must be nonnegative')
        if abs(math.fsum(self.probs) - 1.0) > PROB_TOL:
            raise ValueError('probs must sum to 1')
        return self


class TailModel(BaseModel):
    """
    Proportional-tail data-generating process.

    Above y0 the conditional tail is F̄_x(y) = σ(x) F̄_base(y), or with the
    skedasis-side perturbation F̄_base(y) (σ(x) + δ (1 - σ(x)) y^-β). Below y0
    the response is uniform on [0, y0) with the remaining mass.
    """
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(gt=0)
    y0: float = Field(default=1.0, ge=1)
    tail: TailFamily = TailFamily.EXACT_PARETO
    beta: float = Field(default=1.0, gt=0)
    c: float = Field(default=0.0, ge=0, lt=1)
    delta: float = Field(default=0.0, ge=0, lt=1)
    skedasis: SkedasisSpec
    covariates: CovariateSpec = Field(default_factory=CovariateSpec)

    @computed_field
    @property
    def alpha(self) -> float:
        return 1.0 / self.gamma

    @model_validator(mode='after')
    def validate_tail(self) -> 'TailModel':
        if not math.isfinite(self.gamma):
            raise ValueError('gamma must be finite')
        if not self.skedasis.is_normalized:
            raise ValueError('skedasis must be normalized against the covariate law')
        if self.tail == TailFamily.EXACT_PARETO and (self.c > 0 or self.delta > 0):
            raise ValueError('exact_pareto takes no perturbation (c and delta must be 0)')
        if self.skedasis.sup_bound * float(self.base_tail(self.y0)) > 1.0 + PROB_TOL:
            raise ValueError(
                f'sup sigma * base tail at y0 = {self.skedasis.sup_bound * float(self.base_tail(self.y0))!r} '
                f'exceeds 1; raise y0'
            )
        if self.delta > 0:
            if not self.skedasis.inf_bound or self.skedasis.inf_bound <= 0:
                raise ValueError('delta > 0 needs a skedasis bounded away from 0')
            limit = self.alpha * self.y0 ** self.beta / (self.alpha + self.beta)
            if self.delta > limit:
                raise ValueError(f'delta must be at most {limit!r} to keep the tail monotone')
        return self

    def base_tail(self, y):
        """F̄_base(y) for y >= 1 (vectorised)."""
        y = np.asarray(y, dtype=float)
        tail = y ** (-self.alpha)
        if self.tail == TailFamily.HALL:
            tail = tail * (1.0 + self.c * y ** (-self.beta)) / (1.0 + self.c)
        return tail

    @property
    def dim(self) -> int:
        return self.covariates.dim

    @property
    def model_id(self) -> str:
        """Short content hash identifying the model specification."""
        canonical = self.model_dump_json(exclude={'alpha'})
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]


class SampleSet(BaseModel):
    """n observations (x_i, y_i); arrays are read-only after validation."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True, protected_namespaces=())

    x: np.ndarray
    y: np.ndarray
    seed: Optional[int] = None
    model_id: Optional[str] = None

    @field_validator('x', mode='before')
    @classmethod
    def coerce_x(cls, v) -> np.ndarray:
        arr = np.array(v, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ValueError('covariates must be an (n, d) matrix')
        if not np.all(np.isfinite(arr)):
            raise ValueError('covariates must be finite')
        arr.setflags(write=False)
        return arr

    @field_validator('y', mode='before')
    @classmethod
    def coerce_y(cls, v) -> np.ndarray:
        arr = np.array(v, dtype=float).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise ValueError('responses must be finite')
        arr.setflags(write=False)
        return arr

    @model_validator(mode='after')
    def validate_rows(self) -> 'SampleSet':
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError(f'{self.x.shape[0]} covariate rows but {self.y.shape[0]} responses')
        return self

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def dim(self) -> int:
        return int(self.x.shape[1])


# Estimator schemas
class ThresholdSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: ThresholdMode
    level: Optional[float] = None
    k: Optional[int] = Field(default=None, gt=0)

    @model_validator(mode='after')
    def validate_mode(self) -> 'ThresholdSpec':
        if self.mode == ThresholdMode.FIXED:
            if self.level is None or not math.isfinite(self.level):
                raise ValueError('fixed threshold needs a finite level')
        elif self.k is None:
            raise ValueError('top_k threshold needs k')
        return self

    @classmethod
    def fixed(cls, level: float) -> 'ThresholdSpec':
        return cls(mode=ThresholdMode.FIXED, level=level)

    @classmethod
    def top_k(cls, k: int) -> 'ThresholdSpec':
        return cls(mode=ThresholdMode.TOP_K, k=k)


class ThresholdResolution(BaseModel):
    """Resolved threshold y_n with N_n = #{Y_i > y_n} and p̂ = N_n / n."""
    model_config = ConfigDict(frozen=True)

    y_n: float
    n_exceed: int = Field(ge=0)
    n: int = Field(gt=0)
    p_hat: float = Field(ge=0, le=1)
    mode: ThresholdMode
    k: Optional[int] = None
    # top-k only: ties at the order statistic left fewer than k exceedances
    ties: bool = False

    @property
    def degenerate(self) -> bool:
        return self.n_exceed == 0


class QuantileEstimate(BaseModel):
    alpha: float
    x: Point
    q_hat: float


class EstimateReport(BaseModel):
    gamma_hat: float
    points: List[Point]
    sigma_hat: List[float]
    c_hat: List[float]
    quantiles: List[QuantileEstimate] = []
    threshold: ThresholdResolution
    bandwidth: float

    @model_validator(mode='after')
    def validate_finite(self) -> 'EstimateReport':
        values = [self.gamma_hat, *self.sigma_hat, *self.c_hat, *(q.q_hat for q in self.quantiles)]
        if not all(math.isfinite(v) for v in values):
            raise ValueError('all estimates must be finite')
        return self


# Coupling schemas
class DiscreteDistribution(BaseModel):
    model_config = ConfigDict(frozen=True)

    support: List[Point]
    probs: List[float]

    @model_validator(mode='after')
    def validate_probs(self) -> 'DiscreteDistribution':
        if len(self.support) != len(self.probs):
            raise ValueError('support and probs must have the same length')
        if not self.probs:
            raise ValueError('distribution must have at least one atom')
        if any(p < 0 for p in self.probs):
            raise ValueError('probs must be nonnegative')
        if abs(math.fsum(self.probs) - 1.0) > PROB_TOL:
            raise ValueError('probs must sum to 1')
        return self


class CouplingDraw(BaseModel):
    """One row (E, X̃, Ỹ, X*, Y*, Z) of the coupling construction."""
    exceed: bool
    x_tilde: Point
    y_tilde: float
    x_star: Point
    y_star: float
    z: float = Field(ge=1)


class CouplingSample(BaseModel):
    """
    Columnar storage for n coupling rows.

    Covariates are stored as indices into `support`; `draw(i)` and `draws()`
    materialise CouplingDraw objects.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    y_n: float
    support: np.ndarray
    exceed: np.ndarray
    tilde_idx: np.ndarray
    y_tilde: np.ndarray
    star_idx: np.ndarray
    y_star: np.ndarray
    z: np.ndarray
    seed: Optional[int] = None

    @property
    def n(self) -> int:
        return int(self.exceed.shape[0])

    def draw(self, i: int) -> CouplingDraw:
        return CouplingDraw(
            exceed=bool(self.exceed[i]),
            x_tilde=tuple(float(v) for v in self.support[self.tilde_idx[i]]),
            y_tilde=float(self.y_tilde[i]),
            x_star=tuple(float(v) for v in self.support[self.star_idx[i]]),
            y_star=float(self.y_star[i]),
            z=float(self.z[i]),
        )

    def draws(self):
        for i in range(self.n):
            yield self.draw(i)


class CouplingReport(BaseModel):
    n: int
    y_n: float
    p_n: float
    a_n: float
    n_exceed: int
    mismatch_rate: float = Field(ge=0, le=1)
    max_ratio_deviation: float = Field(ge=0)
    tv_exact: float = Field(ge=0, le=1)
    bound_constant: float
    ratio_constant_fit: float
    mismatch_constant_fit: float
    y_star_ks_stat: float
    y_star_ks_pvalue: float
    x_star_chi2_stat: float
    x_star_chi2_pvalue: float
    independence_stat: float
    independence_pvalue: float
    thinning_stat: Optional[float] = None
    thinning_pvalue: Optional[float] = None
    ratio_violation: bool = False
    mismatch_violation: bool = False

    @property
    def violation(self) -> bool:
        return self.ratio_violation or self.mismatch_violation


class ThinningResult(BaseModel):
    statistic: float = Field(ge=0, le=1)
    pvalue: float = Field(ge=0, le=1)
    n: int
    p: float
    reps: int
    exact: bool = False


class ScalingRow(BaseModel):
    n: int
    p_n: float
    y_n: float
    a_n: float
    n_exceed: int
    max_ratio_deviation: float
    mismatch_rate: float
    tv_exact: float
    ratio_constant: float
    mismatch_constant: float
    tv_constant: float


class ScalingReport(BaseModel):
    exponent: float
    rows: List[ScalingRow]
    ratio_slope: float
    theoretical_slope: float

    @property
    def ratio_constant_spread(self) -> float:
        values = [r.ratio_constant for r in self.rows]
        return max(values) / min(values)


# Monte Carlo schemas
class McConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: TailModel
    n: int = Field(gt=0)
    threshold: ThresholdSpec
    bandwidth: Optional[float] = Field(default=None, gt=0)
    alpha_n: Optional[float] = Field(default=None, gt=0, lt=1)
    points: List[Point] = []
    replications: int = Field(ge=2)
    seed: int = 0
    workers: int = Field(default=1, ge=1)

    @model_validator(mode='after')
    def validate_points(self) -> 'McConfig':
        if any(len(p) != self.model.dim for p in self.points):
            raise ValueError(f'evaluation points must have dimension {self.model.dim}')
        return self


class McReport(BaseModel):
    kind: ExperimentKind
    point: Optional[Point] = None
    statistics: List[float]
    replications: int
    n_failed: int
    failure_rate: float
    mean: float
    variance: float
    skewness: float
    ks_distance: float
    ks_pvalue: float
    target_variance: float = 1.0
    criteria: Dict[str, bool] = {}
    passed: bool = False
    preconditions: Dict[str, float] = {}
    extra: Dict[str, float] = {}


# CLI schema
class CliConfig(BaseModel):
    command: Command
    config_path: Path
    out_dir: Path
    seed: Optional[int] = None
    verbosity: int = Field(default=0, ge=0)

    @field_validator('config_path')
    @classmethod
    def validate_config_path(cls, v: Path) -> Path:
        if not v.is_file():
            raise ValueError(f'config file {v} does not exist')
        return v

"""
Proportional-tail data-generating processes and their exact oracles.

Every quantity of a conditional law depends on x only through σ(x), so the
vectorised helpers below take σ values directly; the public functions accept a
covariate point and check it against the covariate support.
"""
from typing import Sequence, Tuple, Union
import itertools
import logging
import math
import numpy as np
from proptail.models.enums import CovariateKind, SkedasisFamily, TailFamily
from proptail.models.schemas import CovariateSpec, SampleSet, SkedasisSpec, TailModel
from proptail.utils.errors import ModelSpecError, OutsideSupportError
from proptail.utils.rng import make_rng, uniform_open_zero

logger = logging.getLogger(__name__)

PointLike = Union[float, Sequence[float], np.ndarray]

SUPPORT_ATOL = 1e-12
BISECTION_XTOL = 1e-12
BISECTION_MAXITER = 200
MAX_DOUBLINGS = 2000


def as_point(x: PointLike, dim: int) -> np.ndarray:
    """Coerce a scalar or sequence to a covariate point of dimension `dim`."""
    point = np.atleast_1d(np.asarray(x, dtype=float))
    if point.shape != (dim,):
        raise ValueError(f'expected a point of dimension {dim}, got shape {point.shape}')
    return point


# Skedasis
def _split_affine(params: Sequence[float], dim: int) -> Tuple[float, np.ndarray]:
    if len(params) != dim + 1:
        raise ModelSpecError(f'affine families need {dim + 1} params (intercept + {dim} slopes), got {len(params)}')
    return float(params[0]), np.asarray(params[1:], dtype=float)


def _step_parts(params: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    return np.asarray(params[0::2], dtype=float), np.asarray(params[1::2], dtype=float)


def _step_integral(params: Sequence[float], upper: float) -> float:
    """∫_0^upper of the step function (upper clipped to [0, 1])."""
    levels, breaks = _step_parts(params)
    edges = np.concatenate(([-np.inf], breaks, [np.inf]))
    lo = np.maximum(edges[:-1], 0.0)
    hi = np.minimum(edges[1:], upper)
    return float(np.sum(levels * np.clip(hi - lo, 0.0, None)))


def raw_skedasis(spec: SkedasisSpec, x) -> np.ndarray:
    """Unnormalised family value σ_raw at each row of x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    family = spec.family
    if family == SkedasisFamily.CONSTANT:
        return np.full(x.shape[0], spec.params[0])
    if family == SkedasisFamily.AFFINE:
        a, b = _split_affine(spec.params, x.shape[1])
        return a + x @ b
    if family == SkedasisFamily.LOG_AFFINE:
        a, b = _split_affine(spec.params, x.shape[1])
        return np.exp(a + x @ b)
    levels, breaks = _step_parts(spec.params)
    return levels[np.searchsorted(breaks, x[:, 0], side='right')]


def skedasis_value(spec: SkedasisSpec, x) -> np.ndarray:
    """σ(x) at each row of x."""
    if not spec.is_normalized:
        raise ModelSpecError('skedasis spec has not been normalized')
    return raw_skedasis(spec, x) / spec.normalization


def _uniform_extremes(spec: SkedasisSpec, dim: int):
    """(inf, argmin, sup) of σ_raw over [0,1]^d."""
    family = spec.family
    if family == SkedasisFamily.CONSTANT:
        level = spec.params[0]
        return level, tuple([0.0] * dim), level
    if family in (SkedasisFamily.AFFINE, SkedasisFamily.LOG_AFFINE):
        a, b = _split_affine(spec.params, dim)
        low = a + np.minimum(b, 0).sum()
        high = a + np.maximum(b, 0).sum()
        argmin = tuple(float(v) for v in np.where(b >= 0, 0.0, 1.0))
        if family == SkedasisFamily.LOG_AFFINE:
            return math.exp(low), argmin, math.exp(high)
        return low, argmin, high
    levels, breaks = _step_parts(spec.params)
    edges = np.concatenate(([-np.inf], breaks, [np.inf]))
    touching = (edges[:-1] <= 1.0) & (edges[1:] > 0.0)
    lengths = np.minimum(edges[1:], 1.0) - np.maximum(edges[:-1], 0.0)
    for level, start, length in zip(levels[touching], edges[:-1][touching], lengths[touching]):
        if level <= 0 and length > 0:
            point = tuple([max(float(start), 0.0)] + [0.0] * (dim - 1))
            return float(level), point, float(levels[touching].max())
    present = levels[touching]
    i_min = int(np.argmin(present))
    start = max(float(edges[:-1][touching][i_min]), 0.0)
    return float(present.min()), tuple([start] + [0.0] * (dim - 1)), float(present.max())


def _uniform_mean(spec: SkedasisSpec, dim: int) -> float:
    family = spec.family
    if family == SkedasisFamily.CONSTANT:
        return spec.params[0]
    if family == SkedasisFamily.AFFINE:
        a, b = _split_affine(spec.params, dim)
        return a + b.sum() / 2.0
    if family == SkedasisFamily.LOG_AFFINE:
        a, b = _split_affine(spec.params, dim)
        return math.exp(a) * math.prod(_exp_integral(bj, 1.0) for bj in b)
    return _step_integral(spec.params, 1.0)


def _exp_integral(b: float, upper: float) -> float:
    """∫_0^upper exp(b u) du."""
    if b == 0:
        return upper
    return math.expm1(b * upper) / b


def normalize_skedasis(raw: SkedasisSpec, cov: CovariateSpec) -> SkedasisSpec:
    """
    Scale a raw skedasis family into a P_X-density.

    Args:
        raw: family and parameters (any normalization already present is ignored)
        cov: covariate law the density is taken against

    Returns:
        SkedasisSpec with normalization = ∫ σ_raw dP_X and sup/inf bounds of σ

    Raises:
        ModelSpecError: the family is negative somewhere on the support, or
            vanishes on a set of positive mass
    """
    if raw.family == SkedasisFamily.STEP and cov.dim > 1:
        logger.debug('step skedasis in dimension %d depends on x_1 only', cov.dim)

    if cov.kind == CovariateKind.DISCRETE:
        points = np.asarray(cov.points, dtype=float)
        probs = np.asarray(cov.probs, dtype=float)
        values = raw_skedasis(raw, points)
        charged = probs > 0
        bad = np.flatnonzero(charged & (values <= 0))
        if bad.size:
            raise ModelSpecError('skedasis must be positive on the support', point=tuple(points[bad[0]]))
        mean = math.fsum(probs * values)
        low, high = float(values[charged].min()), float(values[charged].max())
    else:
        low, argmin, high = _uniform_extremes(raw, cov.dim)
        if low < 0 or (low == 0 and raw.family != SkedasisFamily.AFFINE):
            raise ModelSpecError('skedasis must be positive on the support', point=argmin)
        mean = _uniform_mean(raw, cov.dim)

    if not mean > 0 or not math.isfinite(mean):
        raise ModelSpecError(f'skedasis integrates to {mean!r}; cannot normalize')

    return SkedasisSpec(
        family=raw.family,
        params=list(raw.params),
        normalization=mean,
        sup_bound=high / mean,
        inf_bound=low / mean,
    )


# Covariates
def covariate_density(cov: CovariateSpec, x: PointLike) -> float:
    """
    f(x): 1 inside [0,1]^d for uniform covariates. For discrete covariates
    this is the atom mass P(X = x), a probability rather than a density;
    kernel experiments reject discrete models.
    """
    point = as_point(x, cov.dim)
    if cov.kind == CovariateKind.UNIFORM:
        return 1.0 if np.all((point >= 0) & (point <= 1)) else 0.0
    for atom, prob in zip(cov.points, cov.probs):
        if np.allclose(point, atom, rtol=0, atol=SUPPORT_ATOL):
            return float(prob)
    return 0.0


def check_support(cov: CovariateSpec, x: PointLike) -> np.ndarray:
    point = as_point(x, cov.dim)
    if cov.kind == CovariateKind.UNIFORM:
        inside = bool(np.all((point >= 0) & (point <= 1)))
    else:
        inside = covariate_density(cov, point) > 0
    if not inside:
        raise OutsideSupportError(f'x={tuple(point)} is outside the covariate support')
    return point


def sample_covariates(cov: CovariateSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if cov.kind == CovariateKind.UNIFORM:
        return rng.random((n, cov.dim))
    idx = rng.choice(len(cov.probs), size=n, p=np.asarray(cov.probs))
    return np.asarray(cov.points, dtype=float)[idx]


# Conditional tails (vectorised over σ values)
def _sigma_factor(model: TailModel, sigma, y):
    """σ for the exact proportional tail; σ + δ(1-σ)y^-β with the skedasis-side perturbation."""
    if model.delta == 0:
        return sigma
    return sigma + model.delta * (1.0 - sigma) * y ** (-model.beta)


def tail_mass_at_y0(model: TailModel, sigma) -> np.ndarray:
    """F̄_x(y0): probability carried by the tail branch."""
    return np.asarray(_sigma_factor(model, sigma, model.y0) * model.base_tail(model.y0), dtype=float)


def tail_given_sigma(model: TailModel, sigma, y) -> np.ndarray:
    """F̄_x(y) where σ(x) = sigma (broadcasting)."""
    sigma, y = np.broadcast_arrays(np.asarray(sigma, dtype=float), np.asarray(y, dtype=float))
    y_tail = np.maximum(y, model.y0)
    upper = model.base_tail(y_tail) * _sigma_factor(model, sigma, y_tail)
    mass = tail_mass_at_y0(model, sigma)
    body = 1.0 - (1.0 - mass) * np.clip(y, 0.0, None) / model.y0
    return np.where(y >= model.y0, upper, np.where(y < 0, 1.0, body))


def _bisect_tail(model: TailModel, sigma: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Solve F̄_x(w) = s on [y0, ∞) by bracketing then bisection (tail decreasing)."""
    lo = np.full(s.shape, model.y0, dtype=float)
    hi = 2.0 * lo
    for _ in range(MAX_DOUBLINGS):
        short = tail_given_sigma(model, sigma, hi) > s
        if not short.any():
            break
        lo = np.where(short, hi, lo)
        hi = np.where(short, 2.0 * hi, hi)
    for _ in range(BISECTION_MAXITER):
        if np.all(hi - lo <= BISECTION_XTOL + 4 * np.finfo(float).eps * hi):
            break
        mid = 0.5 * (lo + hi)
        above = tail_given_sigma(model, sigma, mid) > s
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return 0.5 * (lo + hi)


def invert_tail(model: TailModel, sigma, s) -> np.ndarray:
    """
    w with F̄_x(w) = s for tail probabilities s in (0, 1].

    Tail branch (s <= F̄_x(y0)): closed form for exact_pareto, bisection
    otherwise. Body branch: linear inversion of the uniform body.
    """
    sigma, s = np.broadcast_arrays(np.asarray(sigma, dtype=float), np.asarray(s, dtype=float))
    sigma = sigma.astype(float, copy=True)
    s = s.astype(float, copy=True)
    mass = tail_mass_at_y0(model, sigma)
    in_tail = s <= mass
    out = np.empty(s.shape, dtype=float)

    body = ~in_tail
    if body.any():
        out[body] = model.y0 * (1.0 - s[body]) / (1.0 - mass[body])

    if in_tail.any():
        if model.tail == TailFamily.EXACT_PARETO:
            out[in_tail] = (sigma[in_tail] / s[in_tail]) ** model.gamma
        else:
            out[in_tail] = _bisect_tail(model, sigma[in_tail], s[in_tail])
    return out


# Public oracles
def sample_dataset(model: TailModel, n: int, seed) -> SampleSet:
    """
    Draw n i.i.d. observations from the model.

    X ~ P_X, then Y = F_x^←(1 - S) with S uniform on (0, 1], so that
    P(Y > y | X = x) = F̄_x(y) exactly. Deterministic for a fixed seed.
    """
    if n < 1:
        raise ValueError(f'n must be at least 1, got {n}')
    rng = make_rng(seed)
    x = sample_covariates(model.covariates, n, rng)
    sigma = skedasis_value(model.skedasis, x)
    y = invert_tail(model, sigma, uniform_open_zero(rng, n))
    logger.debug(f'Sampled n={n} observations from model {model.model_id}')
    return SampleSet(
        x=x,
        y=y,
        seed=seed if isinstance(seed, int) else None,
        model_id=model.model_id,
    )


def conditional_tail(model: TailModel, x: PointLike, y: float) -> float:
    """F̄_x(y) = P(Y > y | X = x)."""
    point = check_support(model.covariates, x)
    sigma = skedasis_value(model.skedasis, point)[0]
    return float(tail_given_sigma(model, sigma, y))


def minimal_tail_level(model: TailModel, x: PointLike) -> float:
    """Smallest t such that U_x(t) is on the tail branch: 1 / F̄_x(y0)."""
    point = check_support(model.covariates, x)
    sigma = skedasis_value(model.skedasis, point)[0]
    mass = float(tail_mass_at_y0(model, sigma))
    return math.inf if mass <= 0 else 1.0 / mass


def conditional_tail_quantile(model: TailModel, x: PointLike, t: float) -> float:
    """
    U_x(t) = F_x^←(1 - 1/t) on the tail branch.

    Raises:
        ValueError: t is below 1 / F̄_x(y0)
    """
    t_min = minimal_tail_level(model, x)
    if not t >= t_min:
        raise ValueError(f't={t!r} is below the tail branch; minimal admissible t is {t_min!r}')
    sigma = skedasis_value(model.skedasis, as_point(x, model.dim))[0]
    return float(invert_tail(model, sigma, 1.0 / t))


def second_order_rate(model: TailModel, t: float) -> float:
    """
    Rate A(t) bounding both second-order conditions.

    exact_pareto: A ≡ 0. hall: with y = U(t), t <= (1+c) y^α gives
    y^-β <= ((1+c)/t)^(β/α), and

        sup_{z>1/2} |F̄(zy)/(z^-α F̄(y)) - 1| <= c·max(2^β - 1, 1)·y^-β
        sup_x |F̄_x(y)/(σ(x)F̄(y)) - 1|     =  δ·sup|1/σ - 1|·y^-β

    so A(t) = max(c·max(2^β-1, 1), δ·sup|1/σ-1|)·(1+c)^(β/α)·t^(-β/α).
    """
    if not t > 1:
        raise ValueError(f't must exceed 1, got {t!r}')
    if model.tail == TailFamily.EXACT_PARETO:
        return 0.0
    regular_variation = model.c * max(2.0 ** model.beta - 1.0, 1.0)
    proportionality = 0.0
    if model.delta > 0:
        inf_s, sup_s = model.skedasis.inf_bound, model.skedasis.sup_bound
        proportionality = model.delta * max(abs(1.0 / inf_s - 1.0), abs(1.0 / sup_s - 1.0))
    kappa = max(regular_variation, proportionality) * (1.0 + model.c) ** (model.beta / model.alpha)
    return kappa * t ** (-model.beta / model.alpha)


def true_conditional_quantile(model: TailModel, x: PointLike, a: float) -> float:
    """q(a | x) = F_x^←(1 - a) for a in the tail regime a < F̄_x(y0)."""
    if not 0 < a < 1:
        raise ValueError(f'a must lie in (0, 1), got {a!r}')
    t_min = minimal_tail_level(model, x)
    if not a < 1.0 / t_min:
        raise ValueError(f'a={a!r} is in the body regime; need a < {1.0 / t_min!r}')
    return conditional_tail_quantile(model, x, 1.0 / a)


def true_integrated_skedasis(model: TailModel, x: PointLike) -> float:
    """C(x) = ∫_{u <= x} σ(u) P_X(du), componentwise comparison."""
    point = as_point(x, model.dim)
    spec, cov = model.skedasis, model.covariates
    if cov.kind == CovariateKind.DISCRETE:
        atoms = np.asarray(cov.points, dtype=float)
        below = np.all(atoms <= point, axis=1)
        weights = np.asarray(cov.probs) * skedasis_value(spec, atoms)
        return float(min(max(math.fsum(weights[below]), 0.0), 1.0))

    if np.any(point < 0):
        return 0.0
    upper = np.minimum(point, 1.0)
    volume = float(np.prod(upper))
    family = spec.family
    if family == SkedasisFamily.CONSTANT:
        raw = spec.params[0] * volume
    elif family == SkedasisFamily.AFFINE:
        a, b = _split_affine(spec.params, model.dim)
        raw = volume * (a + float(np.dot(b, upper)) / 2.0)
    elif family == SkedasisFamily.LOG_AFFINE:
        a, b = _split_affine(spec.params, model.dim)
        raw = math.exp(a) * math.prod(_exp_integral(bj, uj) for bj, uj in zip(b, upper))
    else:
        raw = _step_integral(spec.params, float(upper[0])) * float(np.prod(upper[1:]))
    return float(min(max(raw / spec.normalization, 0.0), 1.0))


# Unconditional law and helpers
def unconditional_tail(model: TailModel, y: float) -> float:
    """F̄(y) = ∫ F̄_x(y) P_X(dx); linear in σ, so it is the σ = 1 conditional tail."""
    return float(tail_given_sigma(model, 1.0, y))


def unconditional_tail_quantile(model: TailModel, t: float) -> float:
    """U(t) = F^←(1 - 1/t), t >= 1."""
    if not t >= 1:
        raise ValueError(f't must be at least 1, got {t!r}')
    return float(invert_tail(model, 1.0, 1.0 / t))


def conditional_quantile_function(model: TailModel, sigma, u) -> np.ndarray:
    """F_x^←(u) for u in [0, 1) where σ(x) = sigma, over body and tail."""
    return invert_tail(model, sigma, 1.0 - np.asarray(u, dtype=float))


def discretize_covariates(model: TailModel, bins: int) -> TailModel:
    """
    Replace uniform covariates by the grid of bin centres with equal masses.

    The raw skedasis family is re-normalised against the grid, so C and σ stay
    exact for the discretised model.
    """
    cov = model.covariates
    if cov.kind != CovariateKind.UNIFORM:
        raise ModelSpecError('only uniform covariates can be discretised')
    if bins < 1:
        raise ModelSpecError(f'bins must be positive, got {bins}')
    centres = [(i + 0.5) / bins for i in range(bins)]
    points = [tuple(p) for p in itertools.product(centres, repeat=cov.dim)]
    grid = CovariateSpec(
        kind=CovariateKind.DISCRETE,
        dim=cov.dim,
        points=points,
        probs=[1.0 / len(points)] * len(points),
    )
    raw = SkedasisSpec(family=model.skedasis.family, params=list(model.skedasis.params))
    fields = model.model_dump(exclude={'alpha', 'skedasis', 'covariates'})
    return TailModel(**fields, skedasis=normalize_skedasis(raw, grid), covariates=grid)

"""
Coupling between threshold exceedances and the proportional-tail limit model.

The limit model draws X* from σ(x)P_X and Y*/y_n from Pareto(α) independently.
Exceedances above y_n are built on the same Pareto(1) variate Z:

    Ỹ = U_X̃(Z / F̄_X̃(y_n)),    Y* = y_n Z^γ

and (X̃, X*) come from a maximal coupling of P_{X | Y > y_n} and σ(x)P_X, so
that P(X̃ ≠ X*) equals their total variation distance. Covariates must be
finite-discrete; a uniform model can be binned with discretize_covariates.

Example:
    model = discretize_covariates(hall_model, bins=10)
    draws = coupling_construction(model, n=10_000, y_n=5.0, seed=1)
    report = verify_coupling_report(draws, model, y_n=5.0)
"""
from typing import List, NamedTuple, Optional, Sequence, Tuple
import logging
import math
import numpy as np
from scipy import stats
from proptail.config import get_settings
from proptail.core.model import (
    second_order_rate, skedasis_value, tail_given_sigma, invert_tail,
    conditional_quantile_function, unconditional_tail, unconditional_tail_quantile,
)
from proptail.events.bus import event_bus
from proptail.models.enums import CovariateKind, TailFamily
from proptail.models.schemas import (
    CouplingReport, CouplingSample, DiscreteDistribution, Point, ScalingReport, ScalingRow,
    TailModel, ThinningResult,
)
from proptail.utils.errors import (
    InsufficientExceedancesError, MisalignedSupportError, ModelSpecError, PreconditionError,
    UnsupportedConfigurationError,
)
from proptail.utils.rng import child_seed_sequence, derive_seed, make_rng, pareto_one

logger = logging.getLogger(__name__)

# Rows are generated in fixed blocks, each from its own stream (seed, block).
CHUNK_SIZE = 65_536
# TV below this is treated as 0: laws equal up to rounding never mismatch.
TV_ATOL = 1e-12
SUPPORT_ATOL = 1e-12
MIN_THINNING_REPS = 100
CALIBRATION_STREAM = 1_000_003


# Discrete laws
def _aligned(p: DiscreteDistribution, q: DiscreteDistribution) -> bool:
    if len(p.support) != len(q.support):
        return False
    return all(
        len(a) == len(b) and all(abs(u - v) <= SUPPORT_ATOL for u, v in zip(a, b))
        for a, b in zip(p.support, q.support)
    )


def _require_aligned(p: DiscreteDistribution, q: DiscreteDistribution) -> None:
    if not _aligned(p, q):
        raise MisalignedSupportError(
            'distributions must share the same ordered support; merge them with align_supports first'
        )


def align_supports(p: DiscreteDistribution, q: DiscreteDistribution) -> Tuple[DiscreteDistribution, DiscreteDistribution]:
    """Re-express p and q on the union of their supports (first-seen order, zero mass where absent)."""
    union: List[Point] = []
    for point in list(p.support) + list(q.support):
        if not any(np.allclose(point, other, rtol=0, atol=SUPPORT_ATOL) for other in union):
            union.append(tuple(point))

    def spread(dist: DiscreteDistribution) -> List[float]:
        probs = [0.0] * len(union)
        for point, prob in zip(dist.support, dist.probs):
            for k, other in enumerate(union):
                if np.allclose(point, other, rtol=0, atol=SUPPORT_ATOL):
                    probs[k] += prob
                    break
        return probs

    return (
        DiscreteDistribution(support=union, probs=spread(p)),
        DiscreteDistribution(support=union, probs=spread(q)),
    )


def total_variation_discrete(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """
    ||p - q||_TV = (1/2) Σ |p_i - q_i|.

    Raises:
        MisalignedSupportError: supports differ
    """
    _require_aligned(p, q)
    diff = np.abs(np.asarray(p.probs) - np.asarray(q.probs))
    return float(min(max(0.5 * math.fsum(diff), 0.0), 1.0))


def _normalized(weights: np.ndarray) -> List[float]:
    weights = np.asarray(weights, dtype=float)
    probs = weights / weights.sum()
    # renormalise the largest atom so the list sums to 1 within rounding
    probs[np.argmax(probs)] += 1.0 - math.fsum(probs)
    return [float(v) for v in np.clip(probs, 0.0, None)]


def _require_discrete(model: TailModel) -> None:
    if model.covariates.kind != CovariateKind.DISCRETE:
        raise UnsupportedConfigurationError(
            'the coupling needs finite-discrete covariates; set covariate.bins to discretise '
            'a uniform model'
        )


def _atoms(model: TailModel) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Support points, masses and σ values of a discrete covariate law."""
    _require_discrete(model)
    points = np.asarray(model.covariates.points, dtype=float)
    probs = np.asarray(model.covariates.probs, dtype=float)
    return points, probs, skedasis_value(model.skedasis, points)


def conditional_exceedance_law(model: TailModel, y: float) -> DiscreteDistribution:
    """P_{X | Y > y}: weights P_X(x_k) F̄_{x_k}(y), normalised."""
    points, probs, sigma = _atoms(model)
    weights = probs * tail_given_sigma(model, sigma, y)
    if not weights.sum() > 0:
        raise InsufficientExceedancesError(f'no mass above y={y!r}')
    return DiscreteDistribution(support=[tuple(p) for p in points], probs=_normalized(weights))


def limit_covariate_law(model: TailModel) -> DiscreteDistribution:
    """σ(x)P_X on the covariate atoms."""
    points, probs, sigma = _atoms(model)
    return DiscreteDistribution(support=[tuple(p) for p in points], probs=_normalized(probs * sigma))


def _body_covariate_weights(model: TailModel, y: float) -> np.ndarray:
    """Unnormalised P_{X | Y <= y}: P_X(x_k) F_{x_k}(y)."""
    _, probs, sigma = _atoms(model)
    return probs * (1.0 - tail_given_sigma(model, sigma, y))


# Maximal coupling
def _maximal_coupling_indices(p: np.ndarray, q: np.ndarray, rng: np.random.Generator, size: int):
    """
    Index pairs (i, j) with i ~ p, j ~ q and P(i != j) = TV(p, q).

    With probability Σ min(p, q) both come from the normalised overlap;
    otherwise i and j come independently from the normalised positive and
    negative residuals, whose supports are disjoint.
    """
    overlap = np.minimum(p, q)
    overlap_mass = float(overlap.sum())
    pos = np.clip(p - q, 0.0, None)
    neg = np.clip(q - p, 0.0, None)
    tv = 0.5 * float(np.abs(p - q).sum())
    exact = tv <= TV_ATOL or not (pos.sum() > 0 and neg.sum() > 0)

    same = np.ones(size, dtype=bool) if exact else rng.random(size) < overlap_mass
    first = np.empty(size, dtype=np.int64)
    second = np.empty(size, dtype=np.int64)
    n_same = int(np.count_nonzero(same))
    if n_same:
        source = overlap if overlap_mass > 0 else p
        drawn = rng.choice(len(p), size=n_same, p=source / source.sum())
        first[same] = drawn
        second[same] = drawn
    n_diff = size - n_same
    if n_diff:
        first[~same] = rng.choice(len(p), size=n_diff, p=pos / pos.sum())
        second[~same] = rng.choice(len(q), size=n_diff, p=neg / neg.sum())
    return first, second


def maximal_coupling_draw(p: DiscreteDistribution, q: DiscreteDistribution, rng) -> Tuple[Point, Point]:
    """
    One draw (a, b) with a ~ p, b ~ q and P(a != b) = TV(p, q).

    Raises:
        MisalignedSupportError: supports differ
    """
    _require_aligned(p, q)
    i, j = _maximal_coupling_indices(np.asarray(p.probs), np.asarray(q.probs), make_rng(rng), 1)
    return tuple(p.support[i[0]]), tuple(q.support[j[0]])


def maximal_coupling_sample(p: DiscreteDistribution, q: DiscreteDistribution, size: int, rng) -> Tuple[np.ndarray, np.ndarray]:
    """`size` independent maximal-coupling draws, as index arrays into the shared support."""
    _require_aligned(p, q)
    return _maximal_coupling_indices(np.asarray(p.probs), np.asarray(q.probs), make_rng(rng), size)


# Construction
def coupling_construction(model: TailModel, n: int, y_n: float, seed) -> CouplingSample:
    """
    Build n rows (E, X̃, Ỹ, X*, Y*, Z).

    E ~ Bernoulli(F̄(y_n)). On E = 1, (X̃, X*) is maximally coupled and Ỹ, Y*
    share Z. On E = 0, (X̃, Ỹ) ~ P_{(X,Y) | Y <= y_n} with Ỹ = F_x^←(V F_x(y_n)),
    and X* ~ σP_X independently. Row block b is drawn from stream (seed, b).

    Raises:
        UnsupportedConfigurationError: covariates are not finite-discrete
        ModelSpecError: y_n below y0, or no mass left below y_n
    """
    _require_discrete(model)
    if n < 1:
        raise ValueError(f'n must be at least 1, got {n}')
    if not y_n >= model.y0:
        raise ModelSpecError(f'threshold y_n={y_n!r} must be at least y0={model.y0!r}')
    p_n = unconditional_tail(model, y_n)
    if not p_n < 1:
        raise ModelSpecError(f'threshold y_n={y_n!r} leaves no mass below it')
    seed = int(seed) if seed is not None else 0

    points, _, sigma = _atoms(model)
    exceed_law = np.asarray(conditional_exceedance_law(model, y_n).probs)
    limit_law = np.asarray(limit_covariate_law(model).probs)
    body = _body_covariate_weights(model, y_n)
    body = body / body.sum()
    tail_at_threshold = tail_given_sigma(model, sigma, y_n)

    exceed = np.empty(n, dtype=bool)
    tilde_idx = np.empty(n, dtype=np.int64)
    star_idx = np.empty(n, dtype=np.int64)
    y_tilde = np.empty(n, dtype=float)
    z = np.empty(n, dtype=float)

    for block, start in enumerate(range(0, n, CHUNK_SIZE)):
        stop = min(start + CHUNK_SIZE, n)
        m = stop - start
        rng = np.random.default_rng(child_seed_sequence(seed, block))
        e = rng.random(m) < p_n
        zz = pareto_one(rng, m)
        tilde, star = _maximal_coupling_indices(exceed_law, limit_law, rng, m)
        below = ~e
        n_below = int(np.count_nonzero(below))
        if n_below:
            tilde[below] = rng.choice(len(body), size=n_below, p=body)
            star[below] = rng.choice(len(limit_law), size=n_below, p=limit_law)

        yt = np.empty(m, dtype=float)
        if e.any():
            idx = tilde[e]
            yt[e] = invert_tail(model, sigma[idx], tail_at_threshold[idx] / zz[e])
        if n_below:
            idx = tilde[below]
            v = rng.random(n_below)
            yt[below] = conditional_quantile_function(model, sigma[idx], v * (1.0 - tail_at_threshold[idx]))

        exceed[start:stop] = e
        tilde_idx[start:stop] = tilde
        star_idx[start:stop] = star
        y_tilde[start:stop] = yt
        z[start:stop] = zz

    y_star = y_n * z ** model.gamma
    logger.debug(f'Coupling construction: n={n}, y_n={y_n!r}, {int(exceed.sum())} exceedances')
    return CouplingSample(
        y_n=y_n,
        support=points,
        exceed=exceed,
        tilde_idx=tilde_idx,
        y_tilde=y_tilde,
        star_idx=star_idx,
        y_star=y_star,
        z=z,
        seed=seed,
    )


# Reporting
class BoundCalibration(NamedTuple):
    fit: float
    constant: float


def _rate(model: TailModel, y_n: float) -> Tuple[float, float]:
    p_n = unconditional_tail(model, y_n)
    return p_n, second_order_rate(model, 1.0 / p_n)


def _deviations(draws: CouplingSample) -> Tuple[int, float, float]:
    """(N exceedances, max |Y*/Ỹ - 1|, mismatch rate) over E = 1."""
    mask = draws.exceed
    n_exceed = int(np.count_nonzero(mask))
    if n_exceed == 0:
        raise InsufficientExceedancesError(f'no exceedance among {draws.n} coupling draws')
    ratio = float(np.max(np.abs(draws.y_star[mask] / draws.y_tilde[mask] - 1.0)))
    mismatch = float(np.mean(draws.tilde_idx[mask] != draws.star_idx[mask]))
    return n_exceed, ratio, mismatch


def _fit(value: float, a_n: float) -> float:
    return value / a_n if a_n > 0 else 0.0


def calibrate_bound_constant(model: TailModel, n: int, y_n: float, seed) -> BoundCalibration:
    """
    Fitted bound constant from an independent calibration run.

    fit = max(max|Y*/Ỹ - 1|, mismatch rate) / A(1/p_n); the violation constant
    is coupling_bound_factor times the fit.
    """
    draws = coupling_construction(model, n, y_n, seed)
    _, ratio, mismatch = _deviations(draws)
    _, a_n = _rate(model, y_n)
    fit = max(_fit(ratio, a_n), _fit(mismatch, a_n))
    constant = get_settings().coupling_bound_factor * fit
    logger.info(f'Calibrated coupling bound constant: fit={fit:.4g}, M={constant:.4g}')
    return BoundCalibration(fit, constant)


def _pareto_quartile_codes(t: np.ndarray, alpha: float) -> np.ndarray:
    """Bin Pareto(α) values at their quartiles."""
    edges = np.array([4.0 / 3.0, 2.0, 4.0]) ** (1.0 / alpha)
    return np.searchsorted(edges, t, side='right')


def _independence_test(codes_y: np.ndarray, codes_x: np.ndarray) -> Tuple[float, float]:
    """Chi-square contingency test; empty rows and columns are dropped."""
    _, ry = np.unique(codes_y, return_inverse=True)
    _, rx = np.unique(codes_x, return_inverse=True)
    table = np.zeros((ry.max() + 1, rx.max() + 1))
    np.add.at(table, (ry, rx), 1)
    if min(table.shape) < 2:
        return 0.0, 1.0
    result = stats.chi2_contingency(table, correction=False)
    return float(result[0]), float(result[1])


def verify_coupling_report(
    draws: CouplingSample,
    model: TailModel,
    y_n: float,
    bound_constant: Optional[float] = None,
    thinning: Optional[ThinningResult] = None,
) -> CouplingReport:
    """
    Bounds and marginal diagnostics of a coupling run.

    Flags a violation when max|Y*/Ỹ - 1| or the mismatch rate among E = 1
    exceeds M·A(1/p_n). Without an explicit M, a calibration run on an
    independent stream supplies one.

    Raises:
        InsufficientExceedancesError: no draw with E = 1
    """
    if draws.n == 0:
        raise InsufficientExceedancesError('no coupling draws')
    settings = get_settings()
    n_exceed, ratio, mismatch = _deviations(draws)
    p_n, a_n = _rate(model, y_n)
    if bound_constant is None:
        bound_constant = calibrate_bound_constant(
            model, draws.n, y_n, derive_seed(draws.seed or 0, CALIBRATION_STREAM)
        ).constant

    tv = total_variation_discrete(conditional_exceedance_law(model, y_n), limit_covariate_law(model))

    scaled = draws.y_star / y_n
    ks = stats.kstest(scaled, stats.pareto(b=model.alpha).cdf)

    limit_law = np.asarray(limit_covariate_law(model).probs)
    counts = np.bincount(draws.star_idx, minlength=len(limit_law)).astype(float)
    charged = limit_law > 0
    expected = draws.n * limit_law[charged]
    if charged.sum() > 1:
        chi2 = stats.chisquare(counts[charged], expected * counts[charged].sum() / expected.sum())
        chi2_stat, chi2_p = float(chi2[0]), float(chi2[1])
    else:
        chi2_stat, chi2_p = 0.0, 1.0

    mask = draws.exceed
    k = len(draws.support)
    pair_codes = draws.tilde_idx[mask] * k + draws.star_idx[mask]
    indep_stat, indep_p = _independence_test(_pareto_quartile_codes(scaled[mask], model.alpha), pair_codes)

    bound = bound_constant * a_n
    report = CouplingReport(
        n=draws.n,
        y_n=y_n,
        p_n=p_n,
        a_n=a_n,
        n_exceed=n_exceed,
        mismatch_rate=mismatch,
        max_ratio_deviation=ratio,
        tv_exact=tv,
        bound_constant=bound_constant,
        ratio_constant_fit=_fit(ratio, a_n),
        mismatch_constant_fit=_fit(mismatch, a_n),
        y_star_ks_stat=float(ks.statistic),
        y_star_ks_pvalue=float(ks.pvalue),
        x_star_chi2_stat=chi2_stat,
        x_star_chi2_pvalue=chi2_p,
        independence_stat=indep_stat,
        independence_pvalue=indep_p,
        thinning_stat=thinning.statistic if thinning else None,
        thinning_pvalue=thinning.pvalue if thinning else None,
        ratio_violation=ratio > bound + settings.coupling_ratio_tolerance,
        mismatch_violation=mismatch > bound,
    )
    event_bus.emit('coupling.completed', {
        'n': report.n,
        'n_exceed': report.n_exceed,
        'mismatch_rate': report.mismatch_rate,
        'max_ratio_deviation': report.max_ratio_deviation,
        'violation': report.violation,
    })
    return report


def bound_scaling_experiment(model: TailModel, n_grid: Sequence[int], exponent: float, seed) -> ScalingReport:
    """
    Coupling deviations along an n grid with y_n = U(n^exponent), i.e. p_n = n^-exponent.

    The log-log slope of max|Y*/Ỹ - 1| against n is compared with the slope
    -(β/α)·exponent of A(1/p_n).

    Raises:
        ModelSpecError: the model has A ≡ 0, or the grid has fewer than two sizes
    """
    if model.tail == TailFamily.EXACT_PARETO:
        raise ModelSpecError('scaling needs a second-order tail; exact_pareto has A = 0')
    if len(n_grid) < 2:
        raise ModelSpecError('scaling needs at least two sample sizes')
    if not exponent > 0:
        raise ValueError(f'exponent must be positive, got {exponent!r}')

    rows = []
    for i, n in enumerate(n_grid):
        t = float(n) ** exponent
        y_n = unconditional_tail_quantile(model, t)
        if y_n < model.y0:
            raise PreconditionError('y_n >= y0', f'n={n} gives y_n={y_n!r} below y0={model.y0!r}')
        draws = coupling_construction(model, n, y_n, derive_seed(seed, i))
        n_exceed, ratio, mismatch = _deviations(draws)
        a_n = second_order_rate(model, t)
        tv = total_variation_discrete(conditional_exceedance_law(model, y_n), limit_covariate_law(model))
        rows.append(ScalingRow(
            n=n,
            p_n=1.0 / t,
            y_n=y_n,
            a_n=a_n,
            n_exceed=n_exceed,
            max_ratio_deviation=ratio,
            mismatch_rate=mismatch,
            tv_exact=tv,
            ratio_constant=_fit(ratio, a_n),
            mismatch_constant=_fit(mismatch, a_n),
            tv_constant=_fit(tv, a_n),
        ))
        logger.info(f'Scaling n={n}: A={a_n:.4g}, max ratio deviation={ratio:.4g}, mismatch={mismatch:.4g}')

    log_n = np.log([r.n for r in rows])
    log_dev = np.log([max(r.max_ratio_deviation, np.finfo(float).tiny) for r in rows])
    slope = float(np.polyfit(log_n, log_dev, 1)[0])
    return ScalingReport(
        exponent=exponent,
        rows=rows,
        ratio_slope=slope,
        theoretical_slope=-(model.beta / model.alpha) * exponent,
    )


# Thinning
def _retained_max(y: np.ndarray, keep: np.ndarray) -> float:
    return float(y[keep].max()) if keep.any() else -math.inf


def _marked_side(rng: np.random.Generator, n: int, p: float) -> float:
    """max of Y_i over indices kept by independent Bernoulli(p) marks."""
    y = rng.standard_normal(n)
    return _retained_max(y, rng.random(n) < p)


def _block_side(rng: np.random.Generator, n: int, p: float) -> float:
    """max of the first ν draws, ν ~ Binomial(n, p)."""
    y = rng.standard_normal(n)
    nu = int(rng.binomial(n, p))
    return float(y[:nu].max()) if nu else -math.inf


def thinning_equivalence_test(n: int, bernoulli_p: float, reps: int, seed) -> ThinningResult:
    """
    Compare max over Bernoulli-thinned indices with max over a Binomial-length block.

    Both sides have the same law; the empty maximum is -inf on both. For
    p in {0, 1} each replication reuses one stream on both sides and the
    results are compared exactly; otherwise the sides use independent
    streams and a two-sample KS test.

    Raises:
        PreconditionError: reps below the minimum
    """
    if reps < MIN_THINNING_REPS:
        raise PreconditionError('thinning.reps', f'need at least {MIN_THINNING_REPS} replications, got {reps}')
    if n < 1:
        raise ValueError(f'n must be at least 1, got {n}')
    if not 0 <= bernoulli_p <= 1:
        raise ValueError(f'bernoulli_p must lie in [0, 1], got {bernoulli_p!r}')
    seed = int(seed)

    marked = np.empty(reps)
    block = np.empty(reps)
    degenerate = bernoulli_p in (0.0, 1.0)
    for r in range(reps):
        if degenerate:
            marked[r] = _marked_side(np.random.default_rng(child_seed_sequence(seed, r)), n, bernoulli_p)
            block[r] = _block_side(np.random.default_rng(child_seed_sequence(seed, r)), n, bernoulli_p)
        else:
            marked[r] = _marked_side(np.random.default_rng(child_seed_sequence(seed, 2 * r)), n, bernoulli_p)
            block[r] = _block_side(np.random.default_rng(child_seed_sequence(seed, 2 * r + 1)), n, bernoulli_p)

    if degenerate:
        equal = bool(np.array_equal(marked, block))
        if not equal:
            logger.error(f'Degenerate thinning sides differ at p={bernoulli_p}')
        return ThinningResult(
            statistic=0.0 if equal else 1.0,
            pvalue=1.0 if equal else 0.0,
            n=n, p=bernoulli_p, reps=reps, exact=True,
        )

    result = stats.ks_2samp(marked, block)
    logger.info(f'Thinning test n={n}, p={bernoulli_p}: KS={result.statistic:.4f}, p={result.pvalue:.4f}')
    return ThinningResult(
        statistic=float(result.statistic),
        pvalue=float(result.pvalue),
        n=n, p=bernoulli_p, reps=reps,
    )

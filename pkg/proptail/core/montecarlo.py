"""
Replication engine for the standardised estimator errors.

Replication r of an experiment draws its sample from the stream
SeedSequence(seed, spawn_key=(r,)), so a report is identical whether the
replications run sequentially or across worker processes.

Example:
    cfg = McConfig(model=model, n=100_000, threshold=ThresholdSpec.fixed(10.0),
                   replications=400, seed=1)
    report = run_experiment(cfg, ExperimentKind.GAMMA)
    assert report.passed
"""
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple
import logging
import math
import numpy as np
from scipy import stats
from proptail.config import get_settings
from proptail.core.diagnostics import (
    NormalityDiagnostics, ks_pvalue, ks_statistic, normal_cdf, normality_diagnostics,
)
from proptail.core import estimators
from proptail.core.model import (
    covariate_density, minimal_tail_level, sample_dataset, skedasis_value, true_conditional_quantile,
    true_integrated_skedasis, unconditional_tail, unconditional_tail_quantile, as_point,
)
from proptail.events.bus import event_bus
from proptail.models.enums import CovariateKind, ExperimentKind, KERNEL_KINDS, QUANTILE_KINDS, ThresholdMode
from proptail.models.schemas import McConfig, McReport, Point, TailModel, ThresholdSpec
from proptail.utils.errors import EstimationError, NoExceedancesError, PreconditionError
from proptail.utils.rng import child_seed_sequence

logger = logging.getLogger(__name__)

__all__ = [
    'Criteria', 'CRITERIA', 'NormalityDiagnostics', 'check_preconditions', 'check_tail_regime',
    'consistency_curve', 'default_schedule', 'ks_pvalue', 'ks_statistic', 'normal_cdf',
    'normality_diagnostics', 'run_experiment',
]

# Default schedule
MIN_EXCEEDANCES_SCHEDULE = 100
MIN_WINDOW_EXCEEDANCES = 50
MAX_P = 0.5
MAX_BANDWIDTH = 0.5


class Criteria(NamedTuple):
    """Pass thresholds of an experiment kind."""
    max_abs_mean: float
    variance_range: Tuple[float, float]
    ks: bool


CRITERIA: Dict[ExperimentKind, Criteria] = {
    ExperimentKind.GAMMA: Criteria(0.1, (0.85, 1.15), True),
    ExperimentKind.INTEGRATED_C: Criteria(0.15, (0.8, 1.2), True),
    ExperimentKind.SKEDASIS: Criteria(0.15, (0.8, 1.2), True),
    ExperimentKind.QUANTILE: Criteria(0.15, (0.75, 1.25), False),
    ExperimentKind.WEISSMAN: Criteria(0.15, (0.75, 1.25), False),
    ExperimentKind.QUANTILE_RATIO: Criteria(0.15, (0.75, 1.25), False),
    ExperimentKind.JOINT: Criteria(0.1, (0.85, 1.15), True),
}

# experiments evaluated at a covariate point
POINT_KINDS = {
    ExperimentKind.INTEGRATED_C, ExperimentKind.SKEDASIS, ExperimentKind.QUANTILE,
    ExperimentKind.QUANTILE_RATIO, ExperimentKind.JOINT,
}


def default_schedule(n: int, d: int = 1) -> Tuple[float, float, float]:
    """
    (p_n, h_n, α_n) for sample size n in dimension d.

    p_n = n^-1/2 raised so that n·p_n >= 100; h_n = n^-1/5 raised so that
    n·p_n·(2h)^d >= 50; α_n = p_n². p_n and h_n are capped at 1/2.
    """
    if n < 1 or d < 1:
        raise ValueError(f'need n >= 1 and d >= 1, got n={n}, d={d}')
    p_n = min(max(n ** -0.5, MIN_EXCEEDANCES_SCHEDULE / n), MAX_P)
    h_n = max(n ** -0.2, 0.5 * (MIN_WINDOW_EXCEEDANCES / (n * p_n)) ** (1.0 / d))
    h_n = min(h_n, MAX_BANDWIDTH)
    return p_n, h_n, p_n ** 2


def _target_p(cfg: McConfig) -> float:
    """p_n implied by the threshold: F̄(level) for fixed levels, k/n for top-k."""
    if cfg.threshold.mode == ThresholdMode.TOP_K:
        return cfg.threshold.k / cfg.n
    return unconditional_tail(cfg.model, cfg.threshold.level)


def check_preconditions(cfg: McConfig, kind: ExperimentKind, enforce: bool = True) -> Dict[str, float]:
    """
    Rate sanity proxies of an experiment.

    Returns the proxy values: replications, n·p_n and, for kernel kinds,
    n·p_n·V_h with V_h = (2h)^d. Quantile kinds also need α_n < p_n and
    α_n in the tail regime at every configured point.

    Raises:
        PreconditionError: (when enforce) naming the first violated proxy
    """
    settings = get_settings()
    p_n = _target_p(cfg)
    proxies: Dict[str, float] = {
        'replications': float(cfg.replications),
        'n_p': cfg.n * p_n,
    }
    if kind in KERNEL_KINDS:
        if cfg.bandwidth is None:
            raise PreconditionError('bandwidth', f'{kind.value} experiments need a bandwidth')
        proxies['n_p_vh'] = cfg.n * p_n * (2.0 * cfg.bandwidth) ** cfg.model.dim
    if kind in QUANTILE_KINDS and cfg.alpha_n is None:
        raise PreconditionError('mc.alpha_n', f'{kind.value} experiments need an extrapolation level')

    if not enforce:
        return proxies
    if cfg.replications < settings.min_replications:
        raise PreconditionError(
            'replications', f'R={cfg.replications} is below the minimum {settings.min_replications}'
        )
    if proxies['n_p'] < settings.min_exceedances_proxy:
        raise PreconditionError(
            'n*p_n', f"{proxies['n_p']:.4g} is below {settings.min_exceedances_proxy:g}"
        )
    if 'n_p_vh' in proxies and proxies['n_p_vh'] < settings.min_exceedances_proxy:
        raise PreconditionError(
            'n*p_n*V_h', f"{proxies['n_p_vh']:.4g} is below {settings.min_exceedances_proxy:g}"
        )
    if kind in QUANTILE_KINDS:
        if not cfg.alpha_n < p_n:
            raise PreconditionError('mc.alpha_n', f'alpha_n={cfg.alpha_n!r} is not below p_n={p_n:.6g}')
        if kind in POINT_KINDS:
            for point in cfg.points:
                check_tail_regime(cfg.model, point, cfg.alpha_n)
    return proxies


def check_tail_regime(model: TailModel, point: Point, alpha_n: float) -> None:
    """
    Require α_n < F̄_x(y0), so that q(α_n | x) lies on the tail branch.

    Raises:
        PreconditionError: α_n is in the body regime at x
    """
    mass = 1.0 / minimal_tail_level(model, point)
    if not alpha_n < mass:
        raise PreconditionError(
            'mc.alpha_n', f'alpha_n={alpha_n!r} is not below P(Y > y0 | X = x) = {mass:.6g} at x={tuple(point)}'
        )


def _extrapolation_factor(res, alpha_n: float) -> float:
    """√(n p̂) / log(p̂ / α_n)."""
    log_ratio = math.log(res.p_hat / alpha_n)
    if not log_ratio > 0:
        raise EstimationError(f'extrapolation level {alpha_n!r} is not below p_hat={res.p_hat!r}')
    return math.sqrt(res.n * res.p_hat) / log_ratio


def replicate(cfg: McConfig, kind: ExperimentKind, point: Optional[Point], r: int) -> Tuple[float, float]:
    """
    Standardised statistic of replication r (plus the Ĉ statistic for joint, else nan).

    Raises:
        EstimationError: the estimators cannot be evaluated on this sample
    """
    model = cfg.model
    sample = sample_dataset(model, cfg.n, child_seed_sequence(cfg.seed, r))
    res = estimators.resolve_threshold(sample, cfg.threshold)
    if res.n_exceed == 0:
        raise NoExceedancesError(res.y_n)

    def integrated_c() -> float:
        c_true = true_integrated_skedasis(model, point)
        c_hat = estimators.integrated_skedasis_estimate(sample, res, point)
        return math.sqrt(res.n_exceed) * (c_hat - c_true) / math.sqrt(c_true * (1.0 - c_true))

    extra = math.nan
    if kind in (ExperimentKind.GAMMA, ExperimentKind.JOINT):
        gamma_hat = estimators.hill_estimate(sample, res)
        value = math.sqrt(res.n_exceed) * (gamma_hat - model.gamma) / model.gamma
        if kind == ExperimentKind.JOINT:
            extra = integrated_c()
    elif kind == ExperimentKind.INTEGRATED_C:
        value = integrated_c()
    elif kind == ExperimentKind.SKEDASIS:
        sigma = float(skedasis_value(model.skedasis, as_point(point, model.dim))[0])
        sigma_hat = estimators.kernel_skedasis_estimate(sample, res, point, cfg.bandwidth)
        volume = (2.0 * cfg.bandwidth) ** model.dim
        density = covariate_density(model.covariates, point)
        value = math.sqrt(res.n * res.p_hat * volume * density) * (sigma_hat - sigma) / math.sqrt(sigma)
    elif kind == ExperimentKind.WEISSMAN:
        gamma_hat = estimators.hill_estimate(sample, res)
        q_true = unconditional_tail_quantile(model, 1.0 / cfg.alpha_n)
        q_hat = estimators.weissman_quantile(res, gamma_hat, cfg.alpha_n)
        value = _extrapolation_factor(res, cfg.alpha_n) * math.log(q_hat / q_true) / model.gamma
    else:
        gamma_hat = estimators.hill_estimate(sample, res)
        sigma_hat = estimators.kernel_skedasis_estimate(sample, res, point, cfg.bandwidth)
        q_true = true_conditional_quantile(model, point, cfg.alpha_n)
        q_hat = estimators.conditional_extreme_quantile(res, gamma_hat, sigma_hat, cfg.alpha_n)
        factor = _extrapolation_factor(res, cfg.alpha_n)
        if kind == ExperimentKind.QUANTILE:
            value = factor * math.log(q_hat / q_true) / model.gamma
        else:
            value = factor * (q_hat / q_true - 1.0) / model.gamma

    if not math.isfinite(value):
        raise EstimationError(f'non-finite statistic in replication {r}')
    return value, extra


def _replicate_safely(args) -> Tuple[int, Optional[float], float, Optional[str]]:
    cfg, kind, point, r = args
    try:
        value, extra = replicate(cfg, kind, point, r)
        return r, value, extra, None
    except EstimationError as e:
        return r, None, math.nan, e.detail


def _run_replications(cfg: McConfig, kind: ExperimentKind, point: Optional[Point]):
    jobs = [(cfg, kind, point, r) for r in range(cfg.replications)]
    if cfg.workers > 1:
        chunksize = max(1, cfg.replications // (4 * cfg.workers))
        with ProcessPoolExecutor(max_workers=cfg.workers) as executor:
            return list(executor.map(_replicate_safely, jobs, chunksize=chunksize))
    return [_replicate_safely(job) for job in jobs]


def _resolve_point(cfg: McConfig, kind: ExperimentKind, point) -> Optional[Point]:
    if kind not in POINT_KINDS:
        return None
    if point is None:
        if not cfg.points:
            raise PreconditionError('points', f'{kind.value} experiments need an evaluation point')
        point = cfg.points[0]
    point = tuple(float(v) for v in as_point(point, cfg.model.dim))
    if kind in (ExperimentKind.INTEGRATED_C, ExperimentKind.JOINT):
        c_true = true_integrated_skedasis(cfg.model, point)
        if not 0 < c_true < 1:
            raise PreconditionError('C(x)', f'C(x)={c_true!r} at x={point}; need 0 < C(x) < 1')
    if kind in KERNEL_KINDS:
        if cfg.model.covariates.kind != CovariateKind.UNIFORM:
            raise PreconditionError('f(x)', f'{kind.value} experiments need uniform covariates with a density')
        if covariate_density(cfg.model.covariates, point) <= 0:
            raise PreconditionError('f(x)', f'covariate density vanishes at x={point}')
    if kind in QUANTILE_KINDS and cfg.alpha_n is not None:
        check_tail_regime(cfg.model, point, cfg.alpha_n)
    return point


def run_experiment(cfg: McConfig, kind: ExperimentKind, point: Optional[Point] = None) -> McReport:
    """
    Run cfg.replications replications of one experiment kind and diagnose normality.

    Replications whose estimators fail are skipped and counted; the
    experiment fails when more than the failure budget of them fail.
    Rate proxies are recorded, not enforced (see check_preconditions).

    Args:
        cfg: experiment configuration
        kind: which standardised statistic to replicate
        point: evaluation point for point-wise kinds (defaults to cfg.points[0])

    Returns:
        McReport with the per-replication statistics in replication order
    """
    kind = ExperimentKind(kind)
    settings = get_settings()
    point = _resolve_point(cfg, kind, point)
    preconditions = check_preconditions(cfg, kind, enforce=False)
    logger.info(
        f'Running {kind.value} experiment: n={cfg.n}, R={cfg.replications}, '
        f'workers={cfg.workers}, x={point}'
    )

    statistics: List[float] = []
    extras: List[float] = []
    n_failed = 0
    for r, value, extra, error in _run_replications(cfg, kind, point):
        if value is None:
            n_failed += 1
            event_bus.emit('replication.failed', {'kind': kind.value, 'replication': r, 'error': error})
            continue
        statistics.append(value)
        extras.append(extra)

    failure_rate = n_failed / cfg.replications
    if len(statistics) >= 2:
        diag = normality_diagnostics(statistics)
    else:
        diag = NormalityDiagnostics(math.nan, math.nan, math.nan, math.nan, math.nan)

    criteria_spec = CRITERIA[kind]
    low, high = criteria_spec.variance_range
    criteria: Dict[str, bool] = {
        'failure_budget': failure_rate <= settings.failure_budget,
        'mean': bool(abs(diag.mean) <= criteria_spec.max_abs_mean),
        'variance': bool(low <= diag.variance <= high),
    }
    if criteria_spec.ks:
        criteria['ks'] = bool(diag.ks_pvalue > settings.ks_pvalue_min)

    extra_metrics: Dict[str, float] = {}
    if kind == ExperimentKind.JOINT:
        if len(statistics) >= 3:
            correlation = float(stats.pearsonr(statistics, extras)[0])
        else:
            correlation = math.nan
        extra_metrics['correlation'] = correlation
        # asymptotic independence: |ρ̂| within 3 standard errors of 0
        criteria['correlation'] = bool(abs(correlation) <= 3.0 / math.sqrt(max(len(statistics), 1)))

    report = McReport(
        kind=kind,
        point=point,
        statistics=statistics,
        replications=cfg.replications,
        n_failed=n_failed,
        failure_rate=failure_rate,
        mean=diag.mean,
        variance=diag.variance,
        skewness=diag.skewness,
        ks_distance=diag.ks_distance,
        ks_pvalue=diag.ks_pvalue,
        criteria=criteria,
        passed=all(criteria.values()),
        preconditions=preconditions,
        extra=extra_metrics,
    )
    event_bus.emit('experiment.completed', {
        'kind': kind.value,
        'point': point,
        'replications': cfg.replications,
        'n_failed': n_failed,
        'passed': report.passed,
        'variance': report.variance,
        'ks_pvalue': report.ks_pvalue,
    })
    return report


def consistency_curve(cfg: McConfig, n_grid: Sequence[int], point: Optional[Point] = None) -> List[Tuple[int, float]]:
    """
    Median |q̂(α_n | x)/q(α_n | x) - 1| along an n grid.

    Each n uses default_schedule(n, d) for p_n, h_n and α_n, and
    cfg.replications samples drawn from streams (cfg.seed, i, r).
    """
    point = _resolve_point(cfg, ExperimentKind.QUANTILE, point)
    curve = []
    for i, n in enumerate(n_grid):
        p_n, h_n, alpha_n = default_schedule(n, cfg.model.dim)
        check_tail_regime(cfg.model, point, alpha_n)
        level = unconditional_tail_quantile(cfg.model, 1.0 / p_n)
        q_true = true_conditional_quantile(cfg.model, point, alpha_n)
        errors = []
        for r in range(cfg.replications):
            seed = np.random.SeedSequence(cfg.seed, spawn_key=(i, r))
            sample = sample_dataset(cfg.model, n, seed)
            try:
                res = estimators.resolve_threshold(sample, ThresholdSpec.fixed(level))
                gamma_hat = estimators.hill_estimate(sample, res)
                sigma_hat = estimators.kernel_skedasis_estimate(sample, res, point, h_n)
                q_hat = estimators.conditional_extreme_quantile(res, gamma_hat, sigma_hat, alpha_n)
            except EstimationError as e:
                logger.debug(f'consistency n={n} replication {r} skipped: {e.detail}')
                continue
            errors.append(abs(q_hat / q_true - 1.0))
        median = float(np.median(errors)) if errors else math.nan
        logger.info(f'Consistency n={n}: median relative error {median:.4g} over {len(errors)} replications')
        curve.append((int(n), median))
    return curve

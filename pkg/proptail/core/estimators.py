"""
Peaks-over-threshold estimators of the proportional tail model.

Exceedance always means the strict inequality Y_i > y_n, including for the
top-k threshold; ties at the order statistic can therefore leave N_n < k.
"""
from typing import List, Optional, Sequence
import logging
import warnings
import numpy as np
from proptail.models.enums import ThresholdMode
from proptail.models.schemas import (
    EstimateReport, QuantileEstimate, SampleSet, ThresholdResolution, ThresholdSpec,
)
from proptail.core.model import PointLike, as_point
from proptail.utils.errors import (
    DegenerateEstimateWarning, DegenerateSampleError, EmptyWindowError, EstimationError,
    NoExceedancesError,
)

logger = logging.getLogger(__name__)


def resolve_threshold(sample: SampleSet, spec: ThresholdSpec) -> ThresholdResolution:
    """
    Resolve y_n and count exceedances.

    fixed: y_n is the given level. top_k: y_n is the (k+1)-th largest
    response, so N_n = k when responses are distinct.

    Raises:
        DegenerateSampleError: empty sample, or k outside 1 <= k < n
    """
    n = sample.n
    if n == 0:
        raise DegenerateSampleError('sample is empty')

    if spec.mode == ThresholdMode.FIXED:
        y_n = float(spec.level)
    else:
        k = spec.k
        if not 1 <= k < n:
            raise DegenerateSampleError(f'top-k threshold needs 1 <= k < n, got k={k}, n={n}')
        # (k+1)-th largest = order statistic Y_{n-k:n}
        y_n = float(np.partition(sample.y, n - k - 1)[n - k - 1])

    n_exceed = int(np.count_nonzero(sample.y > y_n))
    ties = spec.mode == ThresholdMode.TOP_K and n_exceed != spec.k
    if ties:
        logger.info(f'Ties at the order statistic y_n={y_n!r}: N_n={n_exceed} < k={spec.k}')
    if n_exceed == 0:
        logger.warning(f'No exceedances above y_n={y_n!r}')

    return ThresholdResolution(
        y_n=y_n,
        n_exceed=n_exceed,
        n=n,
        p_hat=n_exceed / n,
        mode=spec.mode,
        k=spec.k,
        ties=ties,
    )


def _exceedances(sample: SampleSet, res: ThresholdResolution) -> np.ndarray:
    if res.n_exceed == 0:
        raise NoExceedancesError(res.y_n)
    return sample.y > res.y_n


def hill_estimate(sample: SampleSet, res: ThresholdResolution) -> float:
    """γ̂ = (1/N_n) Σ_{Y_i > y_n} log(Y_i / y_n)."""
    mask = _exceedances(sample, res)
    if res.y_n <= 0:
        raise EstimationError(f'Hill estimator needs a positive threshold, got y_n={res.y_n!r}')
    gamma_hat = float(np.mean(np.log(sample.y[mask] / res.y_n)))
    if gamma_hat == 0:
        logger.warning(f'Hill estimate is 0 at y_n={res.y_n!r}')
        warnings.warn('every exceedance equals the threshold; gamma_hat = 0', DegenerateEstimateWarning)
    return gamma_hat


def integrated_skedasis_estimate(sample: SampleSet, res: ThresholdResolution, x: PointLike) -> float:
    """Ĉ_n(x) = (1/N_n) Σ 1{Y_i > y_n, X_i <= x}."""
    mask = _exceedances(sample, res)
    point = as_point(x, sample.dim)
    below = np.all(sample.x <= point, axis=1)
    return np.count_nonzero(mask & below) / res.n_exceed


def kernel_skedasis_estimate(sample: SampleSet, res: ThresholdResolution, x: PointLike, h: float) -> float:
    """
    Box-kernel skedasis estimate at x.

    σ̂_n(x) = n Σ 1{|x - X_i|_∞ < h, Y_i > y_n} / (Σ 1{|x - X_i|_∞ < h} · N_n)

    Raises:
        NoExceedancesError: N_n = 0
        EmptyWindowError: no covariate strictly within distance h of x
    """
    if not h > 0:
        raise ValueError(f'bandwidth must be positive, got {h!r}')
    mask = _exceedances(sample, res)
    point = as_point(x, sample.dim)
    distance = np.max(np.abs(sample.x - point), axis=1)
    window = distance < h
    n_window = int(np.count_nonzero(window))
    if n_window == 0:
        raise EmptyWindowError(tuple(point), h, float(np.nextafter(distance.min(), np.inf)))
    return sample.n * np.count_nonzero(window & mask) / (n_window * res.n_exceed)


def weissman_quantile(res: ThresholdResolution, gamma_hat: float, alpha: float) -> float:
    """q̂(α) = y_n (p̂ / α)^γ̂."""
    if not 0 < alpha < 1:
        raise EstimationError(f'alpha must lie in (0, 1), got {alpha!r}')
    if res.p_hat == 0:
        raise NoExceedancesError(res.y_n)
    return res.y_n * (res.p_hat / alpha) ** gamma_hat


def conditional_extreme_quantile(res: ThresholdResolution, gamma_hat: float, sigma_hat: float, alpha: float) -> float:
    """q̂(α | x) = y_n (p̂ σ̂(x) / α)^γ̂, i.e. the Weissman quantile at α / σ̂(x)."""
    if not sigma_hat > 0:
        raise EstimationError(f'skedasis estimate must be positive, got {sigma_hat!r}')
    if not alpha > 0:
        raise EstimationError(f'alpha must be positive, got {alpha!r}')
    return weissman_quantile(res, gamma_hat, alpha / sigma_hat)


def estimate_report(
    sample: SampleSet,
    spec: ThresholdSpec,
    points: Sequence[PointLike],
    alphas: Sequence[float],
    h: float,
    res: Optional[ThresholdResolution] = None,
) -> EstimateReport:
    """Run every estimator at the query points and extrapolation levels."""
    res = res or resolve_threshold(sample, spec)
    gamma_hat = hill_estimate(sample, res)
    query: List[tuple] = [tuple(float(v) for v in as_point(x, sample.dim)) for x in points]
    sigma_hat = [kernel_skedasis_estimate(sample, res, x, h) for x in query]
    c_hat = [integrated_skedasis_estimate(sample, res, x) for x in query]
    quantiles = [
        QuantileEstimate(alpha=a, x=x, q_hat=conditional_extreme_quantile(res, gamma_hat, s, a))
        for a in alphas
        for x, s in zip(query, sigma_hat)
    ]
    logger.info(
        f'Estimated gamma_hat={gamma_hat:.6g} from N_n={res.n_exceed} exceedances '
        f'above y_n={res.y_n:.6g}'
    )
    return EstimateReport(
        gamma_hat=gamma_hat,
        points=query,
        sigma_hat=sigma_hat,
        c_hat=c_hat,
        quantiles=quantiles,
        threshold=res,
        bandwidth=h,
    )

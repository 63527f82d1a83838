"""
estimate: run the estimators on a sample CSV.

Without threshold keys the top-k threshold uses k = n·p_n of the default
schedule; bandwidth, points and alpha levels default to the same schedule.
"""
import logging
from proptail.commands.dependencies import format_point, load_config, output_dir, resolve_path
from proptail.config import FlatConfig, build_threshold_spec
from proptail.core.estimators import estimate_report, resolve_threshold
from proptail.core.montecarlo import default_schedule
from proptail.models.schemas import CliConfig, ThresholdSpec
from proptail.storage import ESTIMATE_FILE, read_sample, write_estimate_report
from proptail.utils.errors import ConfigError, ExitStatus, NoExceedancesError

logger = logging.getLogger(__name__)


def _threshold(flat: FlatConfig, n: int, p_default: float) -> ThresholdSpec:
    if 'threshold.level' in flat or 'threshold.k' in flat:
        return build_threshold_spec(flat)
    p = flat.get_float('threshold.p', p_default)
    if not 0 < p < 1:
        raise ConfigError('threshold.p', f'must lie in (0, 1), got {p!r}')
    return ThresholdSpec.top_k(max(1, min(n - 1, round(n * p))))


def cmd_estimate(cfg: CliConfig) -> int:
    flat = load_config(cfg)
    sample = read_sample(resolve_path(cfg, flat.require('input')))
    p_n, h_n, alpha_n = default_schedule(sample.n, sample.dim)

    spec = _threshold(flat, sample.n, p_n)
    res = resolve_threshold(sample, spec)
    if res.n_exceed == 0:
        print(f'resolved threshold y_n = {res.y_n:.6g}: no exceedances')
        raise NoExceedancesError(res.y_n)

    points = flat.get_points('points') or [tuple([0.5] * sample.dim)]
    if any(len(p) != sample.dim for p in points):
        raise ConfigError('points', f'points must have dimension {sample.dim}')
    alphas = flat.get_floats('alpha', [alpha_n])
    h = flat.get_float('bandwidth', h_n)
    if not h > 0:
        raise ConfigError('bandwidth', f'must be positive, got {h!r}')

    report = estimate_report(sample, spec, points, alphas, h, res=res)
    path = write_estimate_report(report, output_dir(cfg) / ESTIMATE_FILE)

    print(f'threshold y_n = {res.y_n:.6g}, N_n = {res.n_exceed}, p_hat = {res.p_hat:.6g}')
    print(f'gamma_hat = {report.gamma_hat:.6g}')
    for point, sigma_hat, c_hat in zip(report.points, report.sigma_hat, report.c_hat):
        print(f'x = {format_point(point)}: sigma_hat = {sigma_hat:.6g}, C_hat = {c_hat:.6g}')
    for q in report.quantiles:
        print(f'q_hat({q.alpha:g} | x = {format_point(q.x)}) = {q.q_hat:.6g}')
    logger.info(f'Estimate report written to {path}')
    return ExitStatus.OK

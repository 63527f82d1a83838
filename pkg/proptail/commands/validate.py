"""
validate: Monte Carlo and coupling checks with pass/fail thresholds.

Sections run when their keys are present:
    experiments          Monte Carlo kinds (comma list), at every `points` entry
    coupling.*           coupling bounds (see commands.coupling)
    thinning.*           thinning equivalence test
    scaling.n_grid       bound scaling along an n grid (scaling.exponent, default 1/3)
    consistency.n_grid   median relative quantile error along an n grid

Rate preconditions of every Monte Carlo experiment are checked before any
replication runs. Exit 0 iff every check passes, else 5.
"""
from typing import List, Tuple
import logging
from proptail.commands.coupling import (
    has_coupling, has_thinning, print_coupling_summary, run_coupling, run_thinning,
)
from proptail.commands.dependencies import format_point, load_config, output_dir, resolve_seed
from proptail.config import FlatConfig, build_experiment_kinds, build_mc_config, build_tail_model, get_settings
from proptail.core.coupling import bound_scaling_experiment
from proptail.core.montecarlo import POINT_KINDS, check_preconditions, consistency_curve, run_experiment
from proptail.models.schemas import CliConfig
from proptail.storage import (
    CONSISTENCY_FILE, COUPLING_REPORT_FILE, THINNING_REPORT_FILE, write_consistency_curve,
    write_coupling_report, write_mc_report, write_scaling_report, write_thinning_report,
)
from proptail.utils.errors import ConfigError, ExitStatus
from proptail.utils.rng import derive_seed

logger = logging.getLogger(__name__)

SCALING_STREAM = 3
# slope tolerance and constant stability of the bound scaling check
SLOPE_TOLERANCE = 0.15
MAX_CONSTANT_SPREAD = 2.0


def _monte_carlo(flat: FlatConfig, cfg: CliConfig, out) -> List[Tuple[str, bool]]:
    kinds = build_experiment_kinds(flat)
    if not kinds:
        return []
    mc = build_mc_config(flat, cfg.seed)
    for kind in kinds:
        check_preconditions(mc, kind)

    results = []
    for kind in kinds:
        points = mc.points if kind in POINT_KINDS else [None]
        for i, point in enumerate(points):
            report = run_experiment(mc, kind, point)
            write_mc_report(report, out, i if len(points) > 1 else None)
            status = 'PASS' if report.passed else 'FAIL'
            print(f'{kind.value} x = {format_point(report.point)}: mean = {report.mean:.4f}, '
                  f'variance = {report.variance:.4f}, KS p = {report.ks_pvalue:.4f}, '
                  f'failed = {report.n_failed}/{report.replications} [{status}]')
            results.append((f'{kind.value}{format_point(report.point)}', report.passed))
    return results


def _scaling(flat: FlatConfig, seed: int, out) -> List[Tuple[str, bool]]:
    n_grid = flat.get_ints('scaling.n_grid')
    if not n_grid:
        return []
    model = build_tail_model(flat)
    report = bound_scaling_experiment(
        model, n_grid, flat.get_float('scaling.exponent', 1.0 / 3.0), derive_seed(seed, SCALING_STREAM)
    )
    write_scaling_report(report, out)
    slope_ok = abs(report.ratio_slope - report.theoretical_slope) <= SLOPE_TOLERANCE
    spread_ok = report.ratio_constant_spread <= MAX_CONSTANT_SPREAD
    print(f'scaling slope = {report.ratio_slope:.4f} (theory {report.theoretical_slope:.4f}), '
          f'constant spread = {report.ratio_constant_spread:.3f}')
    return [('scaling.slope', slope_ok), ('scaling.constant', spread_ok)]


def _consistency(flat: FlatConfig, cfg: CliConfig, out) -> List[Tuple[str, bool]]:
    n_grid = flat.get_ints('consistency.n_grid')
    if not n_grid:
        return []
    mc = build_mc_config(flat, cfg.seed)
    curve = consistency_curve(mc, n_grid)
    write_consistency_curve(curve, out / CONSISTENCY_FILE)
    errors = [err for _, err in curve]
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    print('consistency: ' + ', '.join(f'n={n}: {err:.4g}' for n, err in curve))
    return [('consistency', decreasing)]


def cmd_validate(cfg: CliConfig) -> int:
    flat = load_config(cfg)
    seed = resolve_seed(cfg, flat)
    out = output_dir(cfg)

    results = _monte_carlo(flat, cfg, out)

    thinning = None
    if has_thinning(flat):
        thinning = run_thinning(flat, seed)
        write_thinning_report(thinning.model_dump(), out / THINNING_REPORT_FILE)
        passed = thinning.statistic == 0 if thinning.exact else thinning.pvalue > get_settings().ks_pvalue_min
        print(f'thinning n = {thinning.n}, p = {thinning.p}: KS = {thinning.statistic:.4f}, '
              f'p = {thinning.pvalue:.4f}')
        results.append(('thinning', passed))

    if has_coupling(flat):
        report, _ = run_coupling(flat, seed, thinning)
        write_coupling_report(report, out / COUPLING_REPORT_FILE)
        print_coupling_summary(report)
        results.append(('coupling', not report.violation))

    results += _scaling(flat, seed, out)
    results += _consistency(flat, cfg, out)

    if not results:
        raise ConfigError('experiments', 'nothing to validate; set experiments, coupling.*, thinning.*, '
                                         'scaling.n_grid or consistency.n_grid')
    failed = [name for name, ok in results if not ok]
    if failed:
        logger.warning(f'Validation failed: {", ".join(failed)}')
        print(f'FAILED: {", ".join(failed)}')
        return ExitStatus.VALIDATION_FAILED
    print(f'all {len(results)} checks passed')
    return ExitStatus.OK

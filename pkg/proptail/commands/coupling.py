"""
coupling: build the exceedance/limit-model coupling and report its bounds.

Keys: coupling.n (or n), coupling.y_n or coupling.p (default p_n of the
schedule), coupling.bound_constant, coupling.dump_draws and, optionally,
thinning.n / thinning.p / thinning.reps for the thinning check.
"""
from typing import Optional, Tuple
import logging
from proptail.commands.dependencies import load_config, output_dir, resolve_seed
from proptail.config import FlatConfig, build_tail_model
from proptail.core.coupling import (
    coupling_construction, thinning_equivalence_test, verify_coupling_report,
)
from proptail.core.model import unconditional_tail_quantile
from proptail.core.montecarlo import default_schedule
from proptail.models.schemas import CliConfig, CouplingReport, CouplingSample, ThinningResult
from proptail.storage import (
    COUPLING_DRAWS_FILE, COUPLING_REPORT_FILE, write_coupling_draws, write_coupling_report,
)
from proptail.utils.errors import ConfigError, ExitStatus
from proptail.utils.rng import derive_seed

logger = logging.getLogger(__name__)

THINNING_STREAM = 2


def has_coupling(flat: FlatConfig) -> bool:
    return any(key in flat for key in ('coupling.n', 'coupling.p', 'coupling.y_n'))


def has_thinning(flat: FlatConfig) -> bool:
    return 'thinning.p' in flat


def run_thinning(flat: FlatConfig, seed: int) -> ThinningResult:
    return thinning_equivalence_test(
        n=flat.get_int('thinning.n', 50),
        bernoulli_p=flat.get_float('thinning.p'),
        reps=flat.get_int('thinning.reps', 2000),
        seed=derive_seed(seed, THINNING_STREAM),
    )


def run_coupling(flat: FlatConfig, seed: int, thinning: Optional[ThinningResult] = None) -> Tuple[CouplingReport, CouplingSample]:
    model = build_tail_model(flat)
    n = flat.get_int('coupling.n', flat.get_int('n'))
    if n is None:
        raise ConfigError('coupling.n', 'required key is missing')
    if n < 1:
        raise ConfigError('coupling.n', f'must be positive, got {n}')

    y_n = flat.get_float('coupling.y_n')
    if y_n is None:
        p = flat.get_float('coupling.p', default_schedule(n, model.dim)[0])
        if not 0 < p < 1:
            raise ConfigError('coupling.p', f'must lie in (0, 1), got {p!r}')
        y_n = unconditional_tail_quantile(model, 1.0 / p)

    draws = coupling_construction(model, n, y_n, seed)
    report = verify_coupling_report(
        draws, model, y_n,
        bound_constant=flat.get_float('coupling.bound_constant'),
        thinning=thinning,
    )
    return report, draws


def print_coupling_summary(report: CouplingReport) -> None:
    print(f'coupling n = {report.n}, y_n = {report.y_n:.6g}, A_n = {report.a_n:.4g}, N = {report.n_exceed}')
    print(f'mismatch rate = {report.mismatch_rate:.6g} (exact TV {report.tv_exact:.6g})')
    print(f'max |Y*/Y~ - 1| = {report.max_ratio_deviation:.6g} (M = {report.bound_constant:.4g})')
    print(f'Y*/y_n KS p = {report.y_star_ks_pvalue:.4f}, X* chi2 p = {report.x_star_chi2_pvalue:.4f}, '
          f'independence p = {report.independence_pvalue:.4f}')
    if report.thinning_pvalue is not None:
        print(f'thinning KS = {report.thinning_stat:.4f}, p = {report.thinning_pvalue:.4f}')
    print('violation' if report.violation else 'bounds hold')


def cmd_coupling(cfg: CliConfig) -> int:
    flat = load_config(cfg)
    seed = resolve_seed(cfg, flat)
    thinning = run_thinning(flat, seed) if has_thinning(flat) else None
    report, draws = run_coupling(flat, seed, thinning)

    out = output_dir(cfg)
    write_coupling_report(report, out / COUPLING_REPORT_FILE)
    if flat.get_bool('coupling.dump_draws'):
        write_coupling_draws(draws, out / COUPLING_DRAWS_FILE)

    print_coupling_summary(report)
    if report.violation:
        logger.warning('Coupling bound violated')
        return ExitStatus.VALIDATION_FAILED
    return ExitStatus.OK

"""
Logging handlers for Monte Carlo and coupling events.

Events handled:
    - replication.failed:   {'kind', 'replication', 'error'}
    - experiment.completed: {'kind', 'point', 'replications', 'n_failed', 'passed', 'variance', 'ks_pvalue'}
    - coupling.completed:   {'n', 'n_exceed', 'mismatch_rate', 'max_ratio_deviation', 'violation'}
"""
from proptail.events.bus import event_bus
import logging

logger = logging.getLogger(__name__)


@event_bus.on('replication.failed')
def log_replication_failure(data: dict):
    """Replication-level estimator failures are expected at finite n; keep them visible."""
    logger.debug(
        f"{data.get('kind')} replication {data.get('replication')} skipped: {data.get('error')}"
    )


@event_bus.on('experiment.completed')
def log_experiment_summary(data: dict):
    status = 'PASS' if data.get('passed') else 'FAIL'
    logger.info(
        f"{data.get('kind')} at x={data.get('point')}: {status} "
        f"(R={data.get('replications')}, failed={data.get('n_failed')}, "
        f"variance={data.get('variance'):.4f}, KS p={data.get('ks_pvalue'):.4f})"
    )
    if data.get('n_failed'):
        logger.warning(f"{data.get('kind')}: {data.get('n_failed')} replication(s) failed")


@event_bus.on('coupling.completed')
def log_coupling_summary(data: dict):
    logger.info(
        f"Coupling n={data.get('n')}: {data.get('n_exceed')} exceedances, "
        f"mismatch={data.get('mismatch_rate'):.4g}, "
        f"max|Y*/Y~-1|={data.get('max_ratio_deviation'):.4g}"
    )
    if data.get('violation'):
        logger.warning('Coupling bound violated')

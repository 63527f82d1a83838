"""
CSV persistence for samples, estimate reports, coupling runs and Monte Carlo reports.

All writers produce byte-identical files for identical inputs: fixed column
order, "\\n" line endings and repr-exact float formatting.
"""
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Tuple
import logging
import numpy as np
import pandas as pd
from proptail.config import dump_flat_config
from proptail.models.schemas import (
    CouplingReport, CouplingSample, EstimateReport, McReport, SampleSet, ScalingReport,
)
from proptail.utils.errors import ConfigError, DegenerateSampleError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'

SAMPLE_FILE = 'sample.csv'
SAMPLE_META_FILE = 'sample.meta'
ESTIMATE_FILE = 'estimate.csv'
COUPLING_REPORT_FILE = 'coupling_report.csv'
COUPLING_DRAWS_FILE = 'coupling_draws.csv'
THINNING_REPORT_FILE = 'thinning_report.csv'
SCALING_FILE = 'scaling_report.csv'
SCALING_SUMMARY_FILE = 'scaling_summary.csv'
CONSISTENCY_FILE = 'consistency.csv'


def ensure_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError('--out', f'cannot create output directory {path}: {e}')
    return path


def _write(df: pd.DataFrame, path: Path) -> Path:
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logger.debug(f'Wrote {len(df)} rows to {path}')
    return path


# Samples
def write_sample(sample: SampleSet, path) -> Path:
    """Header x1..xd,y then one row per observation."""
    columns = {f'x{j + 1}': sample.x[:, j] for j in range(sample.dim)}
    columns['y'] = sample.y
    return _write(pd.DataFrame(columns), Path(path))


def read_sample(path) -> SampleSet:
    """
    Read a sample CSV: every column but `y` is a covariate, in header order.

    Raises:
        ConfigError: the file is missing, has no `y` column or non-numeric values
        DegenerateSampleError: the file has a header but no rows
    """
    path = Path(path)
    try:
        df = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError('input', f'cannot read sample {path}: {e}')
    if 'y' not in df.columns:
        raise ConfigError('input', f'{path} has no y column')
    covariates = [c for c in df.columns if c != 'y']
    if not covariates:
        raise ConfigError('input', f'{path} has no covariate column')
    if df.empty:
        raise DegenerateSampleError(f'sample {path} has no observations')
    try:
        x = df[covariates].to_numpy(dtype=float)
        y = df['y'].to_numpy(dtype=float)
        return SampleSet(x=x, y=y)
    except ValueError as e:
        raise ConfigError('input', f'{path}: {e}')


def write_metadata(meta: Mapping[str, object], path) -> Path:
    path = Path(path)
    with open(path, 'w', encoding='utf-8', newline='\n') as fh:
        fh.write(dump_flat_config(meta))
    return path


# Reports
def _metric_frame(rows: Iterable[Tuple[str, object]]) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=['metric', 'value'])


def write_estimate_report(report: EstimateReport, path) -> Path:
    """Rows `quantity,point,value`; points as `;`-joined coordinates, quantiles labelled q(alpha)."""
    def label(point) -> str:
        return ';'.join(repr(v) for v in point)

    rows = [
        ('gamma_hat', '', report.gamma_hat),
        ('y_n', '', report.threshold.y_n),
        ('n_exceed', '', report.threshold.n_exceed),
        ('p_hat', '', report.threshold.p_hat),
        ('bandwidth', '', report.bandwidth),
    ]
    for point, sigma_hat, c_hat in zip(report.points, report.sigma_hat, report.c_hat):
        rows.append(('sigma_hat', label(point), sigma_hat))
        rows.append(('c_hat', label(point), c_hat))
    for q in report.quantiles:
        rows.append((f'q_hat({q.alpha!r})', label(q.x), q.q_hat))
    return _write(pd.DataFrame(rows, columns=['quantity', 'point', 'value']), Path(path))


def coupling_report_rows(report: CouplingReport) -> Iterable[Tuple[str, object]]:
    data = report.model_dump()
    for key, value in data.items():
        if value is None:
            continue
        yield key, int(value) if isinstance(value, bool) else value
    yield 'violation', int(report.violation)


def write_coupling_report(report: CouplingReport, path) -> Path:
    return _write(_metric_frame(coupling_report_rows(report)), Path(path))


def write_coupling_draws(draws: CouplingSample, path) -> Path:
    """Columns E,xtilde,ytilde,xstar,ystar,z; multi-dimensional points joined with `;`."""
    labels = np.array([';'.join(repr(float(v)) for v in point) for point in draws.support], dtype=object)
    df = pd.DataFrame({
        'E': draws.exceed.astype(int),
        'xtilde': labels[draws.tilde_idx],
        'ytilde': draws.y_tilde,
        'xstar': labels[draws.star_idx],
        'ystar': draws.y_star,
        'z': draws.z,
    })
    return _write(df, Path(path))


def write_thinning_report(metrics: Dict[str, object], path) -> Path:
    rows = ((k, int(v) if isinstance(v, bool) else v) for k, v in metrics.items())
    return _write(_metric_frame(rows), Path(path))


def mc_file_stem(report: McReport, index: Optional[int] = None) -> str:
    stem = f'mc_{report.kind.value}'
    return stem if index is None else f'{stem}_{index}'


def write_mc_report(report: McReport, out_dir, index: Optional[int] = None) -> Tuple[Path, Path]:
    """Raw dump `replication,statistic` plus a `metric,value` summary."""
    out_dir = Path(out_dir)
    stem = mc_file_stem(report, index)
    raw = pd.DataFrame({
        'replication': np.arange(len(report.statistics)),
        'statistic': np.asarray(report.statistics, dtype=float),
    })
    raw_path = _write(raw, out_dir / f'{stem}.csv')

    rows = [
        ('kind', report.kind.value),
        ('point', '' if report.point is None else ';'.join(repr(v) for v in report.point)),
        ('replications', report.replications),
        ('n_failed', report.n_failed),
        ('failure_rate', report.failure_rate),
        ('mean', report.mean),
        ('variance', report.variance),
        ('skewness', report.skewness),
        ('ks_distance', report.ks_distance),
        ('ks_pvalue', report.ks_pvalue),
        ('target_variance', report.target_variance),
    ]
    rows += [(f'precondition.{k}', v) for k, v in report.preconditions.items()]
    rows += [(f'extra.{k}', v) for k, v in report.extra.items()]
    rows += [(f'pass.{k}', int(v)) for k, v in report.criteria.items()]
    rows.append(('passed', int(report.passed)))
    summary_path = _write(_metric_frame(rows), out_dir / f'{stem}_summary.csv')
    return raw_path, summary_path


def write_scaling_report(report: ScalingReport, out_dir) -> Tuple[Path, Path]:
    """Per-n rows plus a `metric,value` summary of the fitted slope."""
    out_dir = Path(out_dir)
    rows = pd.DataFrame([row.model_dump() for row in report.rows])
    rows_path = _write(rows, out_dir / SCALING_FILE)
    summary = _metric_frame([
        ('exponent', report.exponent),
        ('ratio_slope', report.ratio_slope),
        ('theoretical_slope', report.theoretical_slope),
        ('ratio_constant_spread', report.ratio_constant_spread),
    ])
    return rows_path, _write(summary, out_dir / SCALING_SUMMARY_FILE)


def write_consistency_curve(curve: Iterable[Tuple[int, float]], path) -> Path:
    return _write(pd.DataFrame(list(curve), columns=['n', 'median_relative_error']), Path(path))

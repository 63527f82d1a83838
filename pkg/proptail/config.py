"""
Runtime settings and the flat key=value experiment configuration.

Settings come from the environment (prefix PROPTAIL_) or a .env file.
Experiment and model descriptions come from a flat text file:

    # exact Pareto, affine skedasis
    gamma = 0.5
    skedasis.family = affine
    skedasis.params = 0, 2
    n = 1000
    seed = 7

Builders turn the parsed mapping into validated models; every malformed
value surfaces as a ConfigError naming its key.
"""
from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Mapping, Optional
import logging
from proptail.models.enums import (
    Command, CovariateKind, ExperimentKind, SkedasisFamily, TailFamily, ThresholdMode,
)
from proptail.models.schemas import (
    CliConfig, CovariateSpec, McConfig, Point, SkedasisSpec, TailModel, ThresholdSpec,
)
from proptail.utils.errors import ConfigError, ModelSpecError

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """
    Process-wide settings loaded from environment variables.

    Every value has a default; override with e.g. PROPTAIL_WORKERS=4.
    """
    model_config = SettingsConfigDict(env_prefix='PROPTAIL_', env_file='.env', case_sensitive=False, extra='ignore')

    log_level: str = 'INFO'
    workers: int = 1

    # Monte Carlo policy
    min_replications: int = 100
    failure_budget: float = 0.05
    min_exceedances_proxy: float = 50.0
    ks_pvalue_min: float = 0.01

    output_dir: str = 'out'

    # Coupling violation flags
    coupling_bound_factor: float = 3.0
    coupling_ratio_tolerance: float = 1e-10


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    try:
        return Settings()
    except Exception as e:
        logger.error(
            'Failed to load settings. Check PROPTAIL_LOG_LEVEL, PROPTAIL_WORKERS, '
            'PROPTAIL_MIN_REPLICATIONS, PROPTAIL_FAILURE_BUDGET, PROPTAIL_MIN_EXCEEDANCES_PROXY, '
            'PROPTAIL_KS_PVALUE_MIN, PROPTAIL_OUTPUT_DIR, PROPTAIL_COUPLING_BOUND_FACTOR, '
            f'PROPTAIL_COUPLING_RATIO_TOLERANCE: {e}'
        )
        raise


# Flat key=value files
def parse_flat_config(text: str) -> Dict[str, str]:
    """
    Parse `key = value` lines. Blank lines and `#` comments are skipped;
    a later duplicate key overrides an earlier one.
    """
    mapping: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f'line {lineno}', f'expected key = value, got {raw.strip()!r}')
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError(f'line {lineno}', 'empty key')
        mapping[key] = value
    return mapping


def load_flat_config(path) -> Dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigError('config', f'cannot read {path}: {e}')
    return parse_flat_config(text)


def dump_flat_config(mapping: Mapping[str, object]) -> str:
    """Deterministic key=value text (sorted keys) in the format parse_flat_config reads."""
    return ''.join(f'{key} = {mapping[key]}\n' for key in sorted(mapping))


# Typed accessors
class FlatConfig:
    """Typed read access to a parsed flat config."""

    def __init__(self, mapping: Mapping[str, str]):
        self._values = dict(mapping)

    def __contains__(self, key: str) -> bool:
        return key in self._values

    def raw(self) -> Dict[str, str]:
        return dict(self._values)

    def get_str(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self._values.get(key, default)

    def require(self, key: str) -> str:
        if key not in self._values:
            raise ConfigError(key, 'required key is missing')
        return self._values[key]

    def get_float(self, key: str, default: Optional[float] = None) -> Optional[float]:
        if key not in self._values:
            return default
        try:
            return float(self._values[key])
        except ValueError:
            raise ConfigError(key, f'expected a number, got {self._values[key]!r}')

    def get_int(self, key: str, default: Optional[int] = None) -> Optional[int]:
        if key not in self._values:
            return default
        text = self._values[key]
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(key, f'expected an integer, got {text!r}')
        if not value.is_integer():
            raise ConfigError(key, f'expected an integer, got {text!r}')
        return int(value)

    def get_bool(self, key: str, default: bool = False) -> bool:
        if key not in self._values:
            return default
        text = self._values[key].lower()
        if text in ('1', 'true', 'yes', 'on'):
            return True
        if text in ('0', 'false', 'no', 'off'):
            return False
        raise ConfigError(key, f'expected a boolean, got {self._values[key]!r}')

    def get_floats(self, key: str, default: Optional[List[float]] = None) -> Optional[List[float]]:
        if key not in self._values:
            return default
        try:
            return [float(v) for v in self._values[key].split(',') if v.strip()]
        except ValueError:
            raise ConfigError(key, f'expected a comma separated list of numbers, got {self._values[key]!r}')

    def get_ints(self, key: str, default: Optional[List[int]] = None) -> Optional[List[int]]:
        values = self.get_floats(key)
        if values is None:
            return default
        if not all(v.is_integer() for v in values):
            raise ConfigError(key, f'expected integers, got {self._values[key]!r}')
        return [int(v) for v in values]

    def get_points(self, key: str, default: Optional[List[Point]] = None) -> Optional[List[Point]]:
        """`;`-separated points, each a comma separated coordinate list."""
        if key not in self._values:
            return default
        points = []
        for chunk in self._values[key].split(';'):
            if not chunk.strip():
                continue
            try:
                points.append(tuple(float(v) for v in chunk.split(',')))
            except ValueError:
                raise ConfigError(key, f'malformed point {chunk.strip()!r}')
        return points

    def get_enum(self, key: str, enum_cls, default=None):
        if key not in self._values:
            return default
        try:
            return enum_cls(self._values[key])
        except ValueError:
            choices = '|'.join(member.value for member in enum_cls)
            raise ConfigError(key, f'expected one of {choices}, got {self._values[key]!r}')


def _field_key(error: dict, prefix: Dict[str, str]) -> str:
    loc = [str(part) for part in error.get('loc', ()) if not isinstance(part, int)]
    if not loc:
        return 'config'
    return prefix.get(loc[0], loc[0])


def _config_error_from(e: ValidationError, keys: Dict[str, str]) -> ConfigError:
    first = e.errors()[0]
    return ConfigError(_field_key(first, keys), first.get('msg', str(e)))


# Builders
_MODEL_KEYS = {
    'gamma': 'gamma', 'y0': 'y0', 'tail': 'tail.family', 'beta': 'tail.beta',
    'c': 'tail.c', 'delta': 'tail.delta', 'skedasis': 'skedasis.family',
    'covariates': 'covariate.kind', 'family': 'skedasis.family',
    'params': 'skedasis.params', 'kind': 'covariate.kind', 'dim': 'covariate.dim',
    'points': 'covariate.points', 'probs': 'covariate.probs',
}


def build_tail_model(cfg: FlatConfig) -> TailModel:
    """
    Build a TailModel; the raw skedasis family is normalised against the covariate law.

    Raises:
        ConfigError: a key is missing, malformed or out of range
    """
    from proptail.core.model import discretize_covariates, normalize_skedasis

    try:
        covariates = CovariateSpec(
            kind=cfg.get_enum('covariate.kind', CovariateKind, CovariateKind.UNIFORM),
            dim=cfg.get_int('covariate.dim', 1),
            points=cfg.get_points('covariate.points'),
            probs=cfg.get_floats('covariate.probs'),
        )
        raw = SkedasisSpec(
            family=cfg.get_enum('skedasis.family', SkedasisFamily, SkedasisFamily.CONSTANT),
            params=cfg.get_floats('skedasis.params', [1.0]),
        )
    except ValidationError as e:
        raise _config_error_from(e, _MODEL_KEYS)

    try:
        skedasis = normalize_skedasis(raw, covariates)
    except ModelSpecError as e:
        raise ConfigError('skedasis.params', e.detail)

    gamma = cfg.get_float('gamma')
    if gamma is None:
        raise ConfigError('gamma', 'required key is missing')
    try:
        model = TailModel(
            gamma=gamma,
            y0=cfg.get_float('y0', 1.0),
            tail=cfg.get_enum('tail.family', TailFamily, TailFamily.EXACT_PARETO),
            beta=cfg.get_float('tail.beta', 1.0),
            c=cfg.get_float('tail.c', 0.0),
            delta=cfg.get_float('tail.delta', 0.0),
            skedasis=skedasis,
            covariates=covariates,
        )
    except ValidationError as e:
        raise _config_error_from(e, _MODEL_KEYS)

    bins = cfg.get_int('covariate.bins')
    if bins is not None:
        try:
            model = discretize_covariates(model, bins)
        except (ModelSpecError, ValidationError) as e:
            raise ConfigError('covariate.bins', str(e))
    logger.debug(f'Built tail model {model.model_id} ({model.tail.value}, gamma={model.gamma})')
    return model


def build_threshold_spec(cfg: FlatConfig, model: Optional[TailModel] = None) -> ThresholdSpec:
    """
    Threshold from `threshold.mode` plus `threshold.level`, `threshold.k` or
    `threshold.p`. A `threshold.p` is turned into the fixed level U(1/p) of the model.
    """
    mode = cfg.get_enum('threshold.mode', ThresholdMode)
    if mode is None:
        mode = ThresholdMode.TOP_K if 'threshold.k' in cfg else ThresholdMode.FIXED

    if mode == ThresholdMode.TOP_K:
        k = cfg.get_int('threshold.k')
        if k is None:
            raise ConfigError('threshold.k', 'required for top_k thresholds')
        if k < 1:
            raise ConfigError('threshold.k', f'must be positive, got {k}')
        return ThresholdSpec.top_k(k)

    level = cfg.get_float('threshold.level')
    if level is None:
        p = cfg.get_float('threshold.p')
        if p is None:
            raise ConfigError('threshold.level', 'a fixed threshold needs threshold.level or threshold.p')
        if not 0 < p < 1:
            raise ConfigError('threshold.p', f'must lie in (0, 1), got {p!r}')
        if model is None:
            raise ConfigError('threshold.p', 'needs a model to translate p into a level')
        from proptail.core.model import unconditional_tail_quantile
        level = unconditional_tail_quantile(model, 1.0 / p)
    try:
        return ThresholdSpec.fixed(level)
    except ValidationError as e:
        raise ConfigError('threshold.level', e.errors()[0].get('msg', str(e)))


def build_experiment_kinds(cfg: FlatConfig) -> List[ExperimentKind]:
    kinds = []
    for name in (cfg.get_str('experiments') or '').split(','):
        name = name.strip()
        if not name:
            continue
        try:
            kinds.append(ExperimentKind(name))
        except ValueError:
            choices = '|'.join(k.value for k in ExperimentKind)
            raise ConfigError('experiments', f'unknown experiment {name!r}; expected {choices}')
    return kinds


def build_mc_config(cfg: FlatConfig, seed_override: Optional[int] = None) -> McConfig:
    """
    McConfig with the default schedule filling any rate left unset.

    `threshold.p`, `bandwidth` and `mc.alpha_n` default to p_n, h_n and α_n
    of default_schedule(n, d).
    """
    from proptail.core.montecarlo import default_schedule

    model = build_tail_model(cfg)
    n = cfg.get_int('n')
    if n is None:
        raise ConfigError('n', 'required key is missing')
    if n < 1:
        raise ConfigError('n', f'must be positive, got {n}')
    p_default, h_default, alpha_default = default_schedule(n, model.dim)

    if 'threshold.level' not in cfg and 'threshold.k' not in cfg and 'threshold.p' not in cfg:
        threshold = build_threshold_spec(FlatConfig({**cfg.raw(), 'threshold.p': repr(p_default)}), model)
    else:
        threshold = build_threshold_spec(cfg, model)

    points = cfg.get_points('points') or [tuple([0.5] * model.dim)]
    seed = seed_override if seed_override is not None else cfg.get_int('seed', 0)
    keys = {
        'n': 'n', 'bandwidth': 'bandwidth', 'alpha_n': 'mc.alpha_n', 'replications': 'replications',
        'seed': 'seed', 'workers': 'workers', 'points': 'points',
    }
    try:
        return McConfig(
            model=model,
            n=n,
            threshold=threshold,
            bandwidth=cfg.get_float('bandwidth', h_default),
            alpha_n=cfg.get_float('mc.alpha_n', alpha_default),
            points=points,
            replications=cfg.get_int('replications', get_settings().min_replications),
            seed=seed,
            workers=cfg.get_int('workers', get_settings().workers),
        )
    except ValidationError as e:
        raise _config_error_from(e, keys)


def build_cli_config(
    command: str,
    config_path,
    out_dir=None,
    seed: Optional[int] = None,
    verbosity: int = 0,
) -> CliConfig:
    try:
        return CliConfig(
            command=Command(command),
            config_path=Path(config_path),
            out_dir=Path(out_dir or get_settings().output_dir),
            seed=seed,
            verbosity=verbosity,
        )
    except ValidationError as e:
        raise _config_error_from(e, {'config_path': '--config', 'out_dir': '--out', 'seed': '--seed'})
    except ValueError as e:
        raise ConfigError('command', str(e))


def model_metadata(model: TailModel, seed: Optional[int], n: int) -> Dict[str, object]:
    """Key=value description of a generated sample, readable back by build_tail_model."""
    meta: Dict[str, object] = {
        'gamma': repr(model.gamma),
        'y0': repr(model.y0),
        'tail.family': model.tail.value,
        'tail.beta': repr(model.beta),
        'tail.c': repr(model.c),
        'tail.delta': repr(model.delta),
        'skedasis.family': model.skedasis.family.value,
        'skedasis.params': ', '.join(repr(p) for p in model.skedasis.params),
        'covariate.kind': model.covariates.kind.value,
        'covariate.dim': model.dim,
        'n': n,
        'model_id': model.model_id,
    }
    if model.covariates.kind == CovariateKind.DISCRETE:
        meta['covariate.points'] = '; '.join(
            ', '.join(repr(v) for v in point) for point in model.covariates.points
        )
        meta['covariate.probs'] = ', '.join(repr(p) for p in model.covariates.probs)
    if seed is not None:
        meta['seed'] = seed
    return meta


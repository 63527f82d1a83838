"""
generate: draw a sample from the configured tail model.

Writes sample.csv (header x1..xd,y) and the sample.meta sidecar.
"""
import logging
from proptail.commands.dependencies import load_config, output_dir, resolve_seed
from proptail.config import build_tail_model, model_metadata
from proptail.core.model import sample_dataset
from proptail.models.schemas import CliConfig
from proptail.storage import SAMPLE_FILE, SAMPLE_META_FILE, write_metadata, write_sample
from proptail.utils.errors import ConfigError, ExitStatus

logger = logging.getLogger(__name__)


def cmd_generate(cfg: CliConfig) -> int:
    flat = load_config(cfg)
    model = build_tail_model(flat)
    n = flat.get_int('n')
    if n is None:
        raise ConfigError('n', 'required key is missing')
    if n < 1:
        raise ConfigError('n', f'must be positive, got {n}')
    seed = resolve_seed(cfg, flat)

    sample = sample_dataset(model, n, seed)
    out = output_dir(cfg)
    sample_path = write_sample(sample, out / SAMPLE_FILE)
    write_metadata(model_metadata(model, seed, n), out / SAMPLE_META_FILE)

    logger.info(f'Generated {n} observations from model {model.model_id} with seed {seed}')
    print(f'wrote {n} rows to {sample_path}')
    return ExitStatus.OK

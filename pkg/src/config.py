"""
Configuration loader for DualPL.

Loads the environment (.env) and exposes:
- RunSettings: the pydantic-settings class for the output directory override
- Named constants shared by the trainer, the CLI and the reports
- Flat key=value run-file parsing
"""

from pathlib import Path
from typing import Dict, List, Union

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load .env file
load_dotenv()


class ConfigError(Exception):
    """Raised when configuration is missing or invalid"""
    pass


# ============================================================================
# PYDANTIC SETTINGS (environment overrides)
# ============================================================================

class RunSettings(BaseSettings):
    """Output location for runs. DUALPL_OUTPUT_DIR is the only env override."""

    model_config = SettingsConfigDict(
        env_prefix="DUALPL_",
        env_file=".env",
        extra="ignore"
    )

    output_dir: str = Field(default="runs", description="Root directory for run outputs")


def get_run_settings() -> RunSettings:
    """Build settings fresh so tests can monkeypatch the environment."""
    return RunSettings()


# ============================================================================
# APPLICATION
# ============================================================================
APP_NAME = "DualPL"
APP_VERSION = "0.1.0"

# ============================================================================
# METRICS LOG
# ============================================================================
METRICS_SCHEMA_VERSION = 1
METRICS_FILE_NAME = "metrics.jsonl"
MANIFEST_FILE_NAME = "manifest.json"
CHECKPOINT_FILE_NAME = "checkpoint.pt"
REPORT_FILE_NAME = "report.txt"
NONFINITE_DUMP_FILE_NAME = "nonfinite_dump.json"
RECORD_KIND_MANIFEST = "manifest"
RECORD_KIND_STEP = "step"
RECORD_KIND_EPOCH = "epoch"

# ============================================================================
# TRAINING DEFAULTS
# ============================================================================
DEFAULT_GAMMA = 0.1
DEFAULT_DELTA = 0.24
DEFAULT_ALPHA = 0.2
DEFAULT_BATCH_SIZE = 128
DEFAULT_LR = 0.01
DEFAULT_MOMENTUM = 0.9
DEFAULT_LR_DECAY_EPOCHS = [30, 50]
DEFAULT_LR_DECAY_FACTOR = 0.1
DESK_SCALE_EPOCHS = 40
DEFAULT_RAMP_FRACTION = 0.3
DEFAULT_RAMP_COEFFICIENT = 5.0
DEFAULT_FEATURE_DIM = 64
DEFAULT_SEEDS = [0, 1, 2, 3, 4]

# ============================================================================
# IMAGE PREPROCESSING (directory datasets)
# ============================================================================
DEFAULT_IMAGE_SIZE = 32
DEFAULT_CHANNEL_MEAN = (0.485, 0.456, 0.406)
DEFAULT_CHANNEL_STD = (0.229, 0.224, 0.225)
IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".bmp", ".gif", ".tif", ".tiff")

# ============================================================================
# RUN FILES
# ============================================================================
CONFIG_COMMENT_PREFIX = "#"
CONFIG_KEY_VALUE_SEPARATOR = "="
CONFIG_LIST_SEPARATOR = ","
CONFIG_PAIR_SEPARATOR = ":"
SYNTHETIC_KEY_PREFIX = "synthetic_"
DATASET_KEYS = ("dataset", "data_root", "labeled", "unlabeled", "target", "image_size")
SWEEP_KEYS = ("sweep_gamma_delta", "sweep_alpha", "seeds", "arms")

# ============================================================================
# MESSAGES
# ============================================================================
ERROR_MISSING_FIELD = "Missing required field: {field}"
ERROR_INVALID_FIELD = "Invalid value for {field}: {detail}"
ERROR_CONFIG_HASH_MISMATCH = (
    "Refusing to resume: checkpoint was written with config hash {stored}, "
    "current config hash is {current}. Changed hyper-parameters break the "
    "determinism of the resumed run."
)
ERROR_EMPTY_LABELED_DOMAIN = "The labeled source domain has no samples."
ERROR_EMPTY_DOMAIN = "Cannot evaluate on an empty domain."


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """
    Parse flat key=value text.

    Blank lines and lines starting with '#' are ignored; trailing comments
    after a value are stripped. Duplicate keys are an error.
    """
    values: Dict[str, str] = {}
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split(CONFIG_COMMENT_PREFIX, 1)[0].strip()
        if not line:
            continue
        if CONFIG_KEY_VALUE_SEPARATOR not in line:
            raise ConfigError(f"{source}:{line_number}: expected key=value, got '{raw_line.strip()}'")
        key, value = line.split(CONFIG_KEY_VALUE_SEPARATOR, 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{line_number}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{line_number}: duplicate key '{key}'")
        values[key] = value.strip()
    return values


def load_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Read and parse a flat key=value run file."""
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(ERROR_MISSING_FIELD.format(field=f"config file {config_path}"))
    return parse_config_text(config_path.read_text(encoding="utf-8"), source=str(config_path))


def split_list(raw: str) -> List[str]:
    """Split a comma-separated config value, dropping empty items."""
    return [item.strip() for item in raw.split(CONFIG_LIST_SEPARATOR) if item.strip()]

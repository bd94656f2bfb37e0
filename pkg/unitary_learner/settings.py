"""
Settings for the unitary learner

Environment variables are read after load_dotenv(), so a local .env file
can supply them. YAML configuration is merged over DEFAULTS.
"""

import copy
import logging
import os
from pathlib import Path

import yaml
from dotenv import load_dotenv

from . import UnitaryLearnerError

# Load environment variables
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

DEFAULT_CONFIG_PATH = BASE_DIR / "config" / "config.yaml"

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

DEFAULTS = {
    "seed": None,
    "dataset": {
        "count": 1000,
        "test_fraction": 0.2,
        "include_basis_states": False,
        "n_jobs": 1,
    },
    "training": {
        "learning_rate": 0.05,
        "epochs": 2000,
        "batch_size": 32,
        "mapping_step": 1,
        "init_mode": "block_rotation",
        "early_stop_mse": 1e-6,
        "shuffle": True,
        "project_weights": True,
        "log_every": 50,
    },
    "evaluation": {
        "accuracy_threshold": 0.99,
    },
    "synthesis": {
        "unitary_tolerance": 1e-6,
    },
    "verify": {
        "count": 200,
    },
    "logging": {
        "level": None,
    },
}


class ConfigError(UnitaryLearnerError, ValueError):
    """Invalid configuration file or value"""


def _merge(base, override, path=""):
    merged = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"Unknown configuration key: {where}")
        if isinstance(base[key], dict):
            if value is None:
                value = {}
            if not isinstance(value, dict):
                raise ConfigError(f"Configuration key {where} must be a mapping")
            merged[key] = _merge(base[key], value, where)
        else:
            merged[key] = value
    return merged


def resolve_config_path(path=None):
    """Explicit path, then UQNN_CONFIG, then config/config.yaml if present"""
    if path:
        return Path(path)
    env_path = os.getenv("UQNN_CONFIG")
    if env_path:
        return Path(env_path)
    if DEFAULT_CONFIG_PATH.exists():
        return DEFAULT_CONFIG_PATH
    return None


def load_config(path=None):
    """
    Load YAML configuration merged over DEFAULTS

    Args:
        path (str): Optional path to a YAML file

    Returns:
        dict: Complete configuration
    """
    config_path = resolve_config_path(path)
    if config_path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        with open(config_path, "r") as f:
            loaded = yaml.safe_load(f) or {}
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {config_path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in {config_path}: {e}")
    if not isinstance(loaded, dict):
        raise ConfigError(f"Config file {config_path} must contain a mapping")
    return _merge(DEFAULTS, loaded)


def env_seed():
    """Seed from UQNN_SEED, or None"""
    value = os.getenv("UQNN_SEED")
    if value is None or value.strip() == "":
        return None
    try:
        seed = int(value)
    except ValueError:
        raise ConfigError(f"UQNN_SEED must be an integer, got {value!r}")
    if seed < 0:
        raise ConfigError("UQNN_SEED must be non-negative")
    return seed


def configure_logging(level=None):
    """Send package logs to stderr at the requested level"""
    level = level or os.getenv("UQNN_LOG_LEVEL") or "INFO"
    numeric = logging.getLevelName(str(level).upper())
    if not isinstance(numeric, int):
        raise ConfigError(f"Unknown log level: {level}")
    logging.basicConfig(level=numeric, format=LOG_FORMAT, force=True)

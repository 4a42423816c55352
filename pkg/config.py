"""
Configuration for the query-driven trajectory simplification toolkit
"""

import os
from typing import Any, Dict, Optional

from dotenv import load_dotenv, dotenv_values

from errors import ConfigError

# Load environment variables from .env file
load_dotenv()

# Data file paths
DATA_DIR = os.getenv("QDTS_DATA_DIR", "data")
CHECKPOINT_DIR = os.getenv("QDTS_CHECKPOINT_DIR", os.path.join(DATA_DIR, "checkpoints"))
RESULTS_DB = os.getenv("QDTS_RESULTS_DB", "")  # Empty disables the SQLite run log

DAY_SECONDS = 86400.0

# Simplification driver (start level S, end level E, candidates K, reward batch delta)
DRIVER_SETTINGS = {
    "start_level": int(os.getenv("QDTS_START_LEVEL", "9")),
    "end_level": int(os.getenv("QDTS_END_LEVEL", "12")),
    "k": int(os.getenv("QDTS_K", "2")),
    "delta": int(os.getenv("QDTS_DELTA", "50")),
    "reward_queries": int(os.getenv("QDTS_REWARD_QUERIES", "100")),
    "train_budget_ratio": float(os.getenv("QDTS_TRAIN_BUDGET_RATIO", "0.01")),
    "episodes_per_database": int(os.getenv("QDTS_EPISODES", "5")),
    "cube_mode": "learned",
    "point_mode": "learned",
}

# Deep Q-learning
DQN_SETTINGS = {
    "gamma": 0.99,
    "learning_rate": float(os.getenv("QDTS_LEARNING_RATE", "0.01")),
    "epsilon_start": 1.0,
    "epsilon_min": 0.1,
    "epsilon_decay": 0.99,
    "batch_size": 32,
    "memory_capacity": 2000,
    "target_sync_interval": 100,
    "hidden_units": 25,
}

# Query evaluation defaults
QUERY_SETTINGS = {
    "edr_eps": 2000.0,  # meters
    "knn_k": 3,
    "window_seconds": 7 * DAY_SECONDS,
    "similarity_delta": 5000.0,  # meters
    "knn_queries": 20,
    "similarity_queries": 20,
}

# Range-query workload generation
WORKLOAD_SETTINGS = {
    "spatial_extent": 2000.0,  # meters, side length
    "temporal_extent": 7 * DAY_SECONDS,
    "distribution": os.getenv("QDTS_WORKLOAD_DISTRIBUTION", "data"),
    "mu": 0.5,
    "sigma": 0.25,
    "zipf_a": 4.0,
    "zipf_grid": 64,
}

# Benchmark harness
BENCH_SETTINGS = {
    "budget_ratios": [0.0025, 0.005, 0.01, 0.02],
    "tasks": ["range", "knn", "similarity"],
    "repetitions": 5,
    "workers": int(os.getenv("QDTS_WORKERS", "1")),
    "seed": int(os.getenv("QDTS_SEED", "0")),
    "range_queries": 100,
}

# Logging settings
LOGGING_SETTINGS = {
    "log_file": os.getenv("QDTS_LOG_FILE", "qdts.log"),
    "log_level": os.getenv("QDTS_LOG_LEVEL", "INFO"),
    "log_format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    "max_log_size_mb": 10,
    "backup_count": 5
}


def _coerce(raw: str, default: Any, key: str) -> Any:
    """Parse a raw string into the type of the default value"""
    try:
        if isinstance(default, bool):
            lowered = raw.strip().lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return lowered in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            items = [item.strip() for item in raw.split(",") if item.strip()]
            if default and isinstance(default[0], float):
                return [float(item) for item in items]
            return items
        return raw
    except ValueError:
        raise ConfigError(f"Invalid value for {key}: {raw!r}")


def merge_settings(defaults: Dict[str, Any], overrides: Dict[str, Optional[str]]) -> Dict[str, Any]:
    """
    Merge string overrides into a copy of a settings dict

    Args:
        defaults: Settings dict whose value types drive parsing
        overrides: Raw key=value pairs (keys are case-insensitive)

    Returns:
        New settings dict
    """
    merged = dict(defaults)
    for key, raw in overrides.items():
        name = key.strip().lower()
        if name not in defaults:
            raise ConfigError(f"Unknown setting: {key}")
        if raw is None:
            raise ConfigError(f"Setting {key} has no value")
        default = defaults[name]
        merged[name] = raw if default is None else _coerce(raw, default, key)
    return merged


def load_config_file(path: str) -> Dict[str, Optional[str]]:
    """
    Read an optional key=value experiment file

    Args:
        path: Path to the file

    Returns:
        Raw key/value pairs in file order
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return dict(dotenv_values(path))


SETTINGS_GROUPS = {
    "driver": DRIVER_SETTINGS,
    "dqn": DQN_SETTINGS,
    "query": QUERY_SETTINGS,
    "workload": WORKLOAD_SETTINGS,
    "bench": BENCH_SETTINGS,
}


def resolve_settings(overrides: Dict[str, Optional[str]]) -> Dict[str, Dict[str, Any]]:
    """
    Route flat key=value overrides to the settings group that owns each key

    Returns:
        Merged copies of every settings group, keyed by group name
    """
    grouped: Dict[str, Dict[str, Optional[str]]] = {name: {} for name in SETTINGS_GROUPS}
    for key, raw in overrides.items():
        name = key.strip().lower()
        owner = next((group for group, settings in SETTINGS_GROUPS.items() if name in settings), None)
        if owner is None:
            raise ConfigError(f"Unknown setting: {key}")
        grouped[owner][name] = raw
    return {group: merge_settings(SETTINGS_GROUPS[group], grouped[group]) for group in SETTINGS_GROUPS}

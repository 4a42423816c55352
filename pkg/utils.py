"""
Utility functions shared across the toolkit
"""

import hashlib
import logging
import os
from logging.handlers import RotatingFileHandler
from typing import Optional, Sequence

import numpy as np

from config import LOGGING_SETTINGS


def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """Set up logging configuration"""
    log_file = LOGGING_SETTINGS["log_file"] if log_file is None else log_file
    handlers = [logging.StreamHandler()]
    if log_file:
        directory = os.path.dirname(log_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        handlers.append(RotatingFileHandler(
            log_file,
            maxBytes=LOGGING_SETTINGS["max_log_size_mb"] * 1024 * 1024,
            backupCount=LOGGING_SETTINGS["backup_count"]
        ))

    logging.basicConfig(
        format=LOGGING_SETTINGS["log_format"],
        level=getattr(logging, (level or LOGGING_SETTINGS["log_level"]).upper(), logging.INFO),
        handlers=handlers,
        force=True
    )


def derive_seed(root_seed: int, *keys: object) -> int:
    """
    Derive an independent seed from a root seed and a tuple of keys

    The same (root, keys) always yields the same seed, so every cell of an
    experiment can be re-run on its own.

    Args:
        root_seed: Experiment root seed
        keys: Anything with a stable ``str`` (algorithm name, budget, repetition)

    Returns:
        Seed in [0, 2**32)
    """
    label = "|".join(str(key) for key in keys).encode("utf-8")
    digest = int.from_bytes(hashlib.sha256(label).digest()[:4], "little")
    return int(np.random.SeedSequence([int(root_seed), digest]).generate_state(1)[0])


def make_rng(root_seed: int, *keys: object) -> np.random.Generator:
    """Numpy generator seeded with ``derive_seed(root_seed, *keys)``"""
    return np.random.default_rng(derive_seed(root_seed, *keys))


def mean_std(values: Sequence[float]) -> tuple:
    """Mean and population standard deviation; (nan, nan) for no values"""
    if len(values) == 0:
        return float("nan"), float("nan")
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())

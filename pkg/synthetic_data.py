"""
Synthetic city-scale trajectory databases for desk-scale experiments
"""

import logging
import math
from typing import Tuple

import numpy as np

from config import DAY_SECONDS
from trajectory import Trajectory, TrajectoryDatabase

logger = logging.getLogger(__name__)


def random_walk(rng: np.random.Generator, n: int, extent: float, start_time: float) -> np.ndarray:
    """
    One trajectory of n points: persistent heading, variable speed, irregular sampling

    Positions reflect off the [0, extent] square boundary.
    """
    x, y = rng.uniform(0.0, extent, size=2)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    speed = rng.uniform(2.0, 15.0)
    t = start_time
    rows = np.empty((n, 3))
    for i in range(n):
        rows[i] = (x, y, t)
        dt = rng.uniform(5.0, 60.0)
        heading += rng.normal(0.0, 0.35)
        speed = float(np.clip(speed + rng.normal(0.0, 1.0), 0.5, 25.0))
        x += math.cos(heading) * speed * dt
        y += math.sin(heading) * speed * dt
        if not 0.0 <= x <= extent:
            x = -x if x < 0 else 2.0 * extent - x
            heading = math.pi - heading
        if not 0.0 <= y <= extent:
            y = -y if y < 0 else 2.0 * extent - y
            heading = -heading
        x = min(max(x, 0.0), extent)
        y = min(max(y, 0.0), extent)
        t += dt
    return rows


def generate_synthetic_database(count: int, points: Tuple[int, int] = (200, 460), seed: int = 0,
                                extent: float = 20000.0, days: float = 30.0) -> TrajectoryDatabase:
    """
    Random-walk trajectory database

    Args:
        count: Number of trajectories
        points: Inclusive (min, max) points per trajectory
        seed: Generator seed
        extent: Side of the square area in meters
        days: Span over which trajectory start times are spread

    Returns:
        TrajectoryDatabase with ids "T0", "T1", ...
    """
    rng = np.random.default_rng(seed)
    trajectories = []
    for i in range(count):
        n = int(rng.integers(points[0], points[1] + 1))
        start = rng.uniform(0.0, days * DAY_SECONDS)
        trajectories.append(Trajectory(f"T{i}", random_walk(rng, n, extent, start)))
    db = TrajectoryDatabase(trajectories)
    logger.info(f"Generated synthetic database: {db.M} trajectories, {db.N} points (seed {seed})")
    return db

"""
Shared fixtures: small synthetic databases and hand-built trajectories
"""

import numpy as np
import pytest

from query_engine import QueryWorkload
from synthetic_data import generate_synthetic_database
from trajectory import Trajectory, TrajectoryDatabase
from workload_generator import WorkloadSpec, generate


@pytest.fixture
def make_traj():
    """Factory for trajectories from (x, y, t) rows"""
    def _make(traj_id, rows):
        return Trajectory(traj_id, np.array(rows, dtype=float))
    return _make


@pytest.fixture
def random_traj():
    """Factory for random trajectories with strictly increasing timestamps"""
    def _make(rng, n, traj_id="R"):
        xy = rng.uniform(-100.0, 100.0, size=(n, 2))
        t = np.cumsum(rng.uniform(1.0, 10.0, size=n))
        return Trajectory(traj_id, np.column_stack([xy, t]))
    return _make


@pytest.fixture
def small_db() -> TrajectoryDatabase:
    return generate_synthetic_database(12, points=(20, 40), seed=7, extent=5000.0, days=1.0)


@pytest.fixture
def tiny_db() -> TrajectoryDatabase:
    return generate_synthetic_database(6, points=(10, 15), seed=3, extent=3000.0, days=0.5)


@pytest.fixture
def small_workload(small_db) -> QueryWorkload:
    return generate(small_db, WorkloadSpec(count=20, spatial_extent=1500.0, temporal_extent=6 * 3600.0, seed=11))

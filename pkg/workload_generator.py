"""
Range-query workload generation under data, Gaussian, Zipf and real center distributions
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from config import WORKLOAD_SETTINGS
from data_handler import load_centers
from errors import ConfigError
from query_engine import QueryWorkload, RangeQuery
from trajectory import TrajectoryDatabase

logger = logging.getLogger(__name__)

DISTRIBUTIONS = ("data", "gaussian", "zipf", "real")


@dataclass(frozen=True)
class WorkloadSpec:
    """How many range queries to draw and where their centers come from"""
    count: int = 100
    distribution: str = WORKLOAD_SETTINGS["distribution"]
    spatial_extent: float = WORKLOAD_SETTINGS["spatial_extent"]
    temporal_extent: float = WORKLOAD_SETTINGS["temporal_extent"]
    mu: float = WORKLOAD_SETTINGS["mu"]
    sigma: float = WORKLOAD_SETTINGS["sigma"]
    zipf_a: float = WORKLOAD_SETTINGS["zipf_a"]
    zipf_grid: int = WORKLOAD_SETTINGS["zipf_grid"]
    seed: int = 0
    centers_path: Optional[str] = None

    def __post_init__(self):
        if self.count < 0:
            raise ConfigError(f"Workload count must be >= 0, got {self.count}")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"Unknown distribution {self.distribution!r}; expected one of {DISTRIBUTIONS}")
        if self.spatial_extent <= 0 or self.temporal_extent <= 0:
            raise ConfigError("Query extents must be positive")
        if self.sigma <= 0:
            raise ConfigError("Gaussian sigma must be positive")
        if self.zipf_a <= 1:
            raise ConfigError("Zipf exponent must be > 1")

    def with_seed(self, seed: int) -> "WorkloadSpec":
        return replace(self, seed=int(seed))


def _zipf_centers(db: TrajectoryDatabase, spec: WorkloadSpec, rng: np.random.Generator,
                  lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Centers of grid cells drawn by Zipf rank, densest cell first"""
    grid = spec.zipf_grid
    span = np.where(hi > lo, hi - lo, 1.0)
    cells = np.clip(((db.points[:, :2] - lo[:2]) / span[:2] * grid).astype(np.int64), 0, grid - 1)
    flat = cells[:, 1] * grid + cells[:, 0]
    density = np.bincount(flat, minlength=grid * grid)
    # Densest first, row-major index breaks ties
    ranked = np.lexsort((np.arange(grid * grid), -density))
    ranks = np.empty(spec.count, dtype=np.int64)
    for i in range(spec.count):
        rank = rng.zipf(spec.zipf_a)
        while rank > grid * grid:
            rank = rng.zipf(spec.zipf_a)
        ranks[i] = rank - 1
    chosen = ranked[ranks]
    cx = lo[0] + (chosen % grid + 0.5) * span[0] / grid
    cy = lo[1] + (chosen // grid + 0.5) * span[1] / grid
    ct = rng.uniform(lo[2], hi[2], size=spec.count)
    return np.column_stack([cx, cy, ct])


def generate(db: TrajectoryDatabase, spec: WorkloadSpec, centers: Optional[np.ndarray] = None) -> QueryWorkload:
    """
    Draw a range-query workload over a database

    Args:
        db: Non-empty database
        spec: Workload parameters
        centers: (k, 3) array for the real distribution; read from spec.centers_path when omitted

    Returns:
        QueryWorkload of spec.count boxes
    """
    if db.N == 0:
        raise ConfigError("Cannot generate a workload for an empty database")
    rng = np.random.default_rng(spec.seed)
    lo, hi = db.bounds()

    if spec.count == 0:
        return QueryWorkload([])
    if spec.distribution == "data":
        chosen = db.points[rng.integers(0, db.N, size=spec.count)]
    elif spec.distribution == "gaussian":
        unit = np.clip(rng.normal(spec.mu, spec.sigma, size=(spec.count, 3)), 0.0, 1.0)
        chosen = lo + unit * (hi - lo)
    elif spec.distribution == "zipf":
        chosen = _zipf_centers(db, spec, rng, lo, hi)
    else:
        if centers is None:
            if not spec.centers_path:
                raise ConfigError("The real distribution needs a centers CSV")
            centers = load_centers(spec.centers_path)
        chosen = centers[rng.integers(0, len(centers), size=spec.count)]

    queries = [RangeQuery.around(x, y, t, spec.spatial_extent, spec.temporal_extent)
               for x, y, t in chosen.tolist()]
    logger.debug(f"Generated {len(queries)} {spec.distribution} queries (seed {spec.seed})")
    return QueryWorkload(queries)

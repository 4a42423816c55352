"""
Trajectory data model: points, trajectories, databases and simplified views
"""

import bisect
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from errors import (
    BudgetTooSmall,
    DuplicateTrajectoryId,
    NonIncreasingTimestamp,
    OutOfRangeCoordinate,
    TrajectoryTooShort,
)

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6371000.0


@dataclass(frozen=True)
class Point:
    """A located sample: planar meters and seconds"""
    x: float
    y: float
    t: float


def project_latlon(lat: float, lon: float, ref_lat: float, ref_lon: float) -> Tuple[float, float]:
    """
    Equirectangular projection of (lat, lon) about a reference point

    Args:
        lat, lon: Coordinates in degrees
        ref_lat, ref_lon: Projection origin in degrees

    Returns:
        (x, y) in meters
    """
    for value, limit, name in ((lat, 90.0, "lat"), (lon, 180.0, "lon"),
                               (ref_lat, 90.0, "ref_lat"), (ref_lon, 180.0, "ref_lon")):
        if not math.isfinite(value) or abs(value) > limit:
            raise OutOfRangeCoordinate(f"{name}={value} outside [-{limit}, {limit}]")
    x = EARTH_RADIUS_M * (lon - ref_lon) * math.cos(math.radians(ref_lat)) * math.pi / 180.0
    y = EARTH_RADIUS_M * (lat - ref_lat) * math.pi / 180.0
    return x, y


class Trajectory:
    """Time-ordered sequence of points belonging to one moving object"""

    __slots__ = ("id", "data", "coords")

    def __init__(self, traj_id: str, data: np.ndarray):
        data = np.ascontiguousarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != 3:
            raise ValueError(f"Trajectory {traj_id}: expected an (n, 3) array of x, y, t")
        if data.shape[0] < 2:
            raise TrajectoryTooShort(f"Trajectory {traj_id} has {data.shape[0]} point(s)")
        if not np.all(np.isfinite(data)):
            raise ValueError(f"Trajectory {traj_id} has non-finite coordinates")
        steps = np.diff(data[:, 2])
        if np.any(steps <= 0):
            bad = int(np.argmax(steps <= 0)) + 1
            raise NonIncreasingTimestamp(f"Trajectory {traj_id}: timestamp at index {bad} does not increase")
        data.setflags(write=False)
        self.id = str(traj_id)
        self.data = data
        # Plain-float rows for the scalar error kernels
        self.coords: List[Tuple[float, float, float]] = [tuple(row) for row in data.tolist()]

    @classmethod
    def from_points(cls, traj_id: str, points: Iterable[Point]) -> "Trajectory":
        return cls(traj_id, np.array([(p.x, p.y, p.t) for p in points], dtype=float))

    def __len__(self) -> int:
        return len(self.coords)

    def point(self, i: int) -> Point:
        x, y, t = self.coords[i]
        return Point(x, y, t)

    @property
    def start_time(self) -> float:
        return self.coords[0][2]

    @property
    def end_time(self) -> float:
        return self.coords[-1][2]

    def __repr__(self) -> str:
        return f"Trajectory(id={self.id!r}, n={len(self)})"


class TrajectoryDatabase:
    """Immutable collection of trajectories with global point numbering"""

    def __init__(self, trajectories: Sequence[Trajectory]):
        self.trajectories: List[Trajectory] = list(trajectories)
        self._position: Dict[str, int] = {}
        for pos, traj in enumerate(self.trajectories):
            if traj.id in self._position:
                raise DuplicateTrajectoryId(f"Duplicate trajectory id: {traj.id}")
            self._position[traj.id] = pos

        lengths = np.array([len(traj) for traj in self.trajectories], dtype=np.int64)
        # offsets[pos] is the global id of the first point of trajectory pos
        self.offsets = np.concatenate(([0], np.cumsum(lengths)))[:-1] if len(lengths) else np.zeros(0, np.int64)
        self.lengths = lengths
        if self.trajectories:
            self.points = np.vstack([traj.data for traj in self.trajectories])
        else:
            self.points = np.zeros((0, 3))
        self.owner = np.repeat(np.arange(len(self.trajectories)), lengths)
        self.points.setflags(write=False)

    @property
    def M(self) -> int:
        return len(self.trajectories)

    @property
    def N(self) -> int:
        return int(self.points.shape[0])

    def __len__(self) -> int:
        return self.M

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    def __getitem__(self, pos: int) -> Trajectory:
        return self.trajectories[pos]

    def position(self, traj_id: str) -> int:
        return self._position[traj_id]

    def get(self, traj_id: str) -> Trajectory:
        return self.trajectories[self._position[traj_id]]

    @property
    def ids(self) -> List[str]:
        return [traj.id for traj in self.trajectories]

    def global_id(self, pos: int, index: int) -> int:
        return int(self.offsets[pos]) + index

    def locate_global(self, gid: int) -> Tuple[int, int]:
        """Map a global point id back to (trajectory position, point index)"""
        pos = int(self.owner[gid])
        return pos, gid - int(self.offsets[pos])

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Tight (min, max) corners over x, y, t"""
        return self.points.min(axis=0), self.points.max(axis=0)

    def subset(self, positions: Sequence[int]) -> "TrajectoryDatabase":
        return TrajectoryDatabase([self.trajectories[pos] for pos in positions])


def anchor_segment(kept: Sequence[int], i: int) -> Tuple[int, int]:
    """
    Consecutive kept indices (s_j, s_j+1) with s_j <= i < s_j+1

    The last point maps to the last segment.

    Args:
        kept: Sorted kept indices containing 0 and n - 1
        i: Point index

    Returns:
        The anchor segment as a pair of point indices
    """
    j = bisect.bisect_right(kept, i) - 1
    if j >= len(kept) - 1:
        j = len(kept) - 2
    return kept[j], kept[j + 1]


class SimplifiedDatabase:
    """
    Simplified view over a TrajectoryDatabase

    Stores only sorted kept-index lists per trajectory plus a global kept mask;
    no point is copied. Every trajectory always keeps its first and last point.
    """

    def __init__(self, db: TrajectoryDatabase, budget: int, kept: Optional[Dict[int, Sequence[int]]] = None):
        self.db = db
        self.budget = int(budget)
        self.mask = np.zeros(db.N, dtype=bool)
        self.kept: List[List[int]] = []
        for pos, traj in enumerate(db.trajectories):
            indices = sorted(set(kept[pos])) if kept is not None else [0, len(traj) - 1]
            self.kept.append(indices)
            self.mask[db.offsets[pos] + np.asarray(indices, dtype=np.int64)] = True
        self.total = sum(len(indices) for indices in self.kept)
        self._check_invariants()

    @classmethod
    def endpoints_only(cls, db: TrajectoryDatabase, budget: int) -> "SimplifiedDatabase":
        if budget < 2 * db.M:
            raise BudgetTooSmall(f"Budget {budget} < 2M = {2 * db.M}")
        return cls(db, budget)

    @classmethod
    def full(cls, db: TrajectoryDatabase) -> "SimplifiedDatabase":
        return cls(db, db.N, {pos: range(len(traj)) for pos, traj in enumerate(db.trajectories)})

    def _check_invariants(self) -> None:
        for pos, indices in enumerate(self.kept):
            n = len(self.db.trajectories[pos])
            assert indices[0] == 0 and indices[-1] == n - 1, f"Trajectory {pos} lost an endpoint"
        assert self.total <= max(self.budget, 2 * self.db.M), f"Kept {self.total} points over budget {self.budget}"

    def is_kept(self, pos: int, index: int) -> bool:
        return bool(self.mask[self.db.offsets[pos] + index])

    def insert(self, pos: int, index: int) -> bool:
        """
        Insert a point into the view

        Returns:
            False if the point was already kept
        """
        gid = int(self.db.offsets[pos]) + index
        if self.mask[gid]:
            return False
        if self.total >= self.budget:
            raise BudgetTooSmall(f"Budget {self.budget} already used")
        bisect.insort(self.kept[pos], index)
        self.mask[gid] = True
        self.total += 1
        assert self.kept[pos][0] == 0 and self.kept[pos][-1] == len(self.db.trajectories[pos]) - 1
        return True

    def anchor(self, pos: int, index: int) -> Tuple[int, int]:
        return anchor_segment(self.kept[pos], index)

    def kept_points(self, pos: int) -> np.ndarray:
        return self.db.trajectories[pos].data[self.kept[pos]]

    def kept_global_ids(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def copy(self) -> "SimplifiedDatabase":
        return SimplifiedDatabase(self.db, self.budget, {pos: list(k) for pos, k in enumerate(self.kept)})

    def __len__(self) -> int:
        return self.total

    def __repr__(self) -> str:
        return f"SimplifiedDatabase(M={self.db.M}, kept={self.total}, budget={self.budget})"

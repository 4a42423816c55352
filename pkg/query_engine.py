"""
Range, kNN (EDR) and similarity queries over original or simplified databases
"""

import logging
from dataclasses import dataclass
from typing import FrozenSet, Iterable, Iterator, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from error_measures import ErrorMeasure, trajectory_error
from errors import EmptyWorkload, InsufficientCandidates
from trajectory import SimplifiedDatabase, Trajectory, TrajectoryDatabase

logger = logging.getLogger(__name__)

QueryResult = FrozenSet[str]
View = Union[TrajectoryDatabase, SimplifiedDatabase]


@dataclass(frozen=True)
class RangeQuery:
    """Closed spatio-temporal box"""
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    t_min: float
    t_max: float

    def __post_init__(self):
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max and self.t_min <= self.t_max):
            raise ValueError(f"Range query has min > max: {self}")

    @classmethod
    def around(cls, x: float, y: float, t: float, spatial_extent: float, temporal_extent: float) -> "RangeQuery":
        hs, ht = spatial_extent / 2.0, temporal_extent / 2.0
        return cls(x - hs, x + hs, y - hs, y + hs, t - ht, t + ht)

    @property
    def lo(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.t_min])

    @property
    def hi(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.t_max])

    def as_row(self) -> Tuple[float, ...]:
        return (self.x_min, self.x_max, self.y_min, self.y_max, self.t_min, self.t_max)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of (k, 3) points inside the box"""
        return ((points[:, 0] >= self.x_min) & (points[:, 0] <= self.x_max)
                & (points[:, 1] >= self.y_min) & (points[:, 1] <= self.y_max)
                & (points[:, 2] >= self.t_min) & (points[:, 2] <= self.t_max))


class QueryWorkload:
    """Ordered list of range queries"""

    def __init__(self, queries: Iterable[RangeQuery]):
        self.queries: List[RangeQuery] = list(queries)
        if self.queries:
            self.lo = np.array([q.lo for q in self.queries])
            self.hi = np.array([q.hi for q in self.queries])
        else:
            self.lo = np.zeros((0, 3))
            self.hi = np.zeros((0, 3))

    def __len__(self) -> int:
        return len(self.queries)

    def __iter__(self) -> Iterator[RangeQuery]:
        return iter(self.queries)

    def __getitem__(self, i: int) -> RangeQuery:
        return self.queries[i]

    def as_rows(self) -> List[Tuple[float, ...]]:
        return [q.as_row() for q in self.queries]

    def containing(self, point: np.ndarray) -> np.ndarray:
        """Indices of the queries whose box contains the point"""
        inside = np.all((self.lo <= point) & (point <= self.hi), axis=1)
        return np.flatnonzero(inside)


def _db_of(view: View) -> TrajectoryDatabase:
    return view.db if isinstance(view, SimplifiedDatabase) else view


def _visible(view: View) -> Tuple[np.ndarray, np.ndarray]:
    """(points, owner positions) visible through the view"""
    db = _db_of(view)
    if isinstance(view, SimplifiedDatabase):
        return db.points[view.mask], db.owner[view.mask]
    return db.points, db.owner


def _trajectory_points(view: View, pos: int) -> np.ndarray:
    if isinstance(view, SimplifiedDatabase):
        return view.kept_points(pos)
    return view.trajectories[pos].data


def range_query(view: View, q: RangeQuery) -> QueryResult:
    """Ids of trajectories with at least one visible point inside the box"""
    db = _db_of(view)
    points, owner = _visible(view)
    hits = np.unique(owner[q.contains(points)])
    return frozenset(db.trajectories[pos].id for pos in hits)


def edr(a: np.ndarray, b: np.ndarray, eps: float) -> int:
    """
    Edit distance on real sequences over the x, y columns

    A pair matches at cost 0 when both |dx| and |dy| are within eps; every
    substitution, insertion or deletion costs 1.
    """
    if eps <= 0:
        raise ValueError("EDR threshold must be positive")
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return n + m
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mismatch = ((np.abs(a[:, None, 0] - b[None, :, 0]) > eps)
                | (np.abs(a[:, None, 1] - b[None, :, 1]) > eps)).astype(np.int64)
    steps = np.arange(m + 1, dtype=np.int64)
    prev = steps.copy()
    for i in range(1, n + 1):
        # Diagonal and vertical moves, then the horizontal chain as a running minimum
        cand = np.empty(m + 1, dtype=np.int64)
        cand[0] = i
        cand[1:] = np.minimum(prev[:-1] + mismatch[i - 1], prev[1:] + 1)
        prev = np.minimum.accumulate(cand - steps) + steps
    return int(prev[m])


def _in_window(points: np.ndarray, window: Tuple[float, float]) -> np.ndarray:
    return points[(points[:, 2] >= window[0]) & (points[:, 2] <= window[1])]


def knn_query(view: View, tq: Trajectory, window: Tuple[float, float], k: int, eps: float = 2000.0,
              exclude: Optional[str] = None) -> QueryResult:
    """
    The k trajectories closest to tq under EDR inside a time window

    Args:
        view: Database or simplified view
        tq: Query trajectory (used as given)
        window: (t_start, t_end), closed
        k: Result size
        eps: EDR match threshold in meters
        exclude: Optional trajectory id left out of the candidates

    Returns:
        Set of k ids; ties broken by ascending id
    """
    db = _db_of(view)
    query_part = _in_window(tq.data, window)
    scored = []
    for pos, traj in enumerate(db.trajectories):
        if traj.id == exclude:
            continue
        part = _in_window(_trajectory_points(view, pos), window)
        if len(part) == 0:
            continue
        scored.append((edr(query_part, part, eps), traj.id))
    if len(scored) < k:
        raise InsufficientCandidates(f"{len(scored)} candidates in window, k={k}")
    scored.sort()
    return frozenset(traj_id for _, traj_id in scored[:k])


def similarity_query(view: View, tq: Trajectory, window: Tuple[float, float], delta: float = 5000.0,
                     exclude: Optional[str] = None) -> QueryResult:
    """
    Trajectories staying within delta of tq at every tq timestamp in the window

    Positions are linearly interpolated over the visible points; trajectories
    whose time span does not cover the sampled timestamps are excluded.
    """
    if delta <= 0:
        raise ValueError("Similarity threshold must be positive")
    db = _db_of(view)
    samples = _in_window(tq.data, window)
    if len(samples) == 0:
        return frozenset()
    t_lo, t_hi = samples[0, 2], samples[-1, 2]
    result = set()
    for pos, traj in enumerate(db.trajectories):
        if traj.id == exclude:
            continue
        points = _trajectory_points(view, pos)
        if points[0, 2] > t_lo or points[-1, 2] < t_hi:
            continue
        xs = np.interp(samples[:, 2], points[:, 2], points[:, 0])
        ys = np.interp(samples[:, 2], points[:, 2], points[:, 1])
        if np.all(np.hypot(xs - samples[:, 0], ys - samples[:, 1]) <= delta):
            result.add(traj.id)
    return frozenset(result)


def f1(original: Set[str], simplified: Set[str]) -> Tuple[float, float, float]:
    """
    Precision, recall and F1 of a simplified result against the original one

    Both empty counts as a perfect answer; F1 is 0 when P + R = 0.
    """
    if not original and not simplified:
        return 1.0, 1.0, 1.0
    common = len(original & simplified)
    precision = common / len(simplified) if simplified else 0.0
    recall = common / len(original) if original else 1.0
    if precision == recall:
        return precision, recall, precision
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def knn_f1(original: Set[str], simplified: Set[str]) -> float:
    """F1 of a kNN answer; both answers have size k so P = R = F1"""
    precision, recall, score = f1(original, simplified)
    assert precision == recall == score, f"kNN metric mismatch: P={precision} R={recall} F1={score}"
    return score


def workload_f1(db: TrajectoryDatabase, view: View, workload: QueryWorkload) -> List[float]:
    return [f1(range_query(db, q), range_query(view, q))[2] for q in workload]


def workload_diff(db: TrajectoryDatabase, view: View, workload: QueryWorkload) -> float:
    """1 - mean F1 of the range workload on the view against the database"""
    if len(workload) == 0:
        raise EmptyWorkload("Workload has no queries")
    return 1.0 - float(np.mean(workload_f1(db, view, workload)))


class RangeQueryTracker:
    """
    Incrementally maintained range-query results on a simplified view

    Each inserted point only touches the queries whose box contains it, so the
    workload diff after a batch of insertions costs O(affected queries).
    """

    def __init__(self, db: TrajectoryDatabase, workload: QueryWorkload, view: SimplifiedDatabase):
        if len(workload) == 0:
            raise EmptyWorkload("Workload has no queries")
        self.db = db
        self.workload = workload
        self.original = [range_query(db, q) for q in workload]
        self.hits = np.zeros((len(workload), db.M), dtype=np.int64)
        self.results: List[Set[str]] = [set() for _ in workload]
        kept_points, kept_owner = _visible(view)
        for qi, q in enumerate(workload):
            counts = np.bincount(kept_owner[q.contains(kept_points)], minlength=db.M)
            self.hits[qi] = counts
            self.results[qi] = {db.trajectories[pos].id for pos in np.flatnonzero(counts)}
        self.scores = np.array([f1(o, r)[2] for o, r in zip(self.original, self.results)])

    def insert(self, pos: int, index: int) -> None:
        point = self.db.points[self.db.global_id(pos, index)]
        for qi in self.workload.containing(point):
            self.hits[qi, pos] += 1
            if self.hits[qi, pos] == 1:
                self.results[qi].add(self.db.trajectories[pos].id)
                self.scores[qi] = f1(self.original[qi], self.results[qi])[2]

    def mean_f1(self) -> float:
        return float(np.mean(self.scores.tolist()))

    def diff(self) -> float:
        return 1.0 - self.mean_f1()


def deformation(db: TrajectoryDatabase, view: SimplifiedDatabase, workload: QueryWorkload,
                measure: ErrorMeasure = ErrorMeasure.SED) -> float:
    """
    Mean simplification error of the trajectories each range query returns

    Averaged per query, then over queries with a nonempty original answer.
    """
    errors = {}
    per_query = []
    for q in workload:
        returned = range_query(db, q)
        if not returned:
            continue
        values = []
        for traj_id in returned:
            if traj_id not in errors:
                pos = db.position(traj_id)
                errors[traj_id] = trajectory_error(measure, db[pos], view.kept[pos])
            values.append(errors[traj_id])
        per_query.append(float(np.mean(values)))
    return float(np.mean(per_query)) if per_query else 0.0

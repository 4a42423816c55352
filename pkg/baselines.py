"""
Error-driven baselines: Top-Down and Bottom-Up simplification under a point budget,
applied per trajectory (E) or to the whole database (W)
"""

import heapq
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List

import numpy as np

from error_measures import ErrorMeasure, max_error_point, point_error
from errors import BudgetTooSmall
from trajectory import SimplifiedDatabase, Trajectory, TrajectoryDatabase

logger = logging.getLogger(__name__)


class Algorithm(str, Enum):
    TOP_DOWN = "topdown"
    BOTTOM_UP = "bottomup"


class Adaptation(str, Enum):
    E = "e"
    W = "w"


@dataclass(frozen=True)
class BaselineSpec:
    """One of the 16 (algorithm, measure, adaptation) combinations"""
    algorithm: Algorithm
    measure: ErrorMeasure
    adaptation: Adaptation

    @property
    def name(self) -> str:
        return f"{self.algorithm.value}-{self.adaptation.value}-{self.measure.value}"

    @classmethod
    def parse(cls, algo: str, measure: str) -> "BaselineSpec":
        """From CLI names such as ("topdown-e", "sed")"""
        try:
            algorithm, adaptation = algo.strip().lower().split("-")
            return cls(Algorithm(algorithm), ErrorMeasure.parse(measure), Adaptation(adaptation))
        except ValueError:
            raise ValueError(f"Unknown baseline {algo!r}; expected topdown-e, topdown-w, bottomup-e or bottomup-w")

    def run(self, db: TrajectoryDatabase, budget: int) -> SimplifiedDatabase:
        algorithm = top_down_trajectory if self.algorithm is Algorithm.TOP_DOWN else bottom_up_trajectory
        if self.adaptation is Adaptation.E:
            return adapt_e(db, budget, algorithm, self.measure)
        return adapt_w(db, budget, self.algorithm, self.measure)


def all_baselines() -> List[BaselineSpec]:
    return [BaselineSpec(a, m, d) for a in Algorithm for d in Adaptation for m in ErrorMeasure]


def _drop_error(measure: ErrorMeasure, traj: Trajectory, prev: int, i: int, nxt: int) -> float:
    """Error of interior point i against the segment joining its kept neighbours"""
    coords = traj.coords
    return point_error(measure, coords[prev], coords[nxt], coords[i], coords[i + 1])


def top_down_trajectory(traj: Trajectory, budget: int, measure: ErrorMeasure) -> List[int]:
    """
    Budgeted Douglas-Peucker

    Starting from both endpoints, repeatedly insert the interior point with the
    largest error against its current anchor segment; ties by smallest index.
    """
    if budget < 2:
        raise BudgetTooSmall(f"Per-trajectory budget {budget} < 2")
    n = len(traj)
    target = min(budget, n)
    kept = [0, n - 1]
    heap = []
    error, index = max_error_point(measure, traj, 0, n - 1)
    if index is not None:
        heap.append((-error, index, 0, n - 1))
    while len(kept) < target and heap:
        _, index, start, end = heapq.heappop(heap)
        kept.append(index)
        for s, e in ((start, index), (index, end)):
            error, best = max_error_point(measure, traj, s, e)
            if best is not None:
                heapq.heappush(heap, (-error, best, s, e))
    return sorted(kept)


def bottom_up_trajectory(traj: Trajectory, budget: int, measure: ErrorMeasure) -> List[int]:
    """
    Bottom-Up merging

    Starting from every point, repeatedly drop the interior point whose error
    against the segment joining its kept neighbours is smallest; ties by
    smallest index. Stale heap entries are skipped by version.
    """
    if budget < 2:
        raise BudgetTooSmall(f"Per-trajectory budget {budget} < 2")
    n = len(traj)
    target = max(budget, 2)
    prev = list(range(-1, n - 1))
    nxt = list(range(1, n + 1))
    alive = [True] * n
    version = [0] * n
    heap = [(_drop_error(measure, traj, i - 1, i, i + 1), i, 0) for i in range(1, n - 1)]
    heapq.heapify(heap)
    count = n
    while count > target and heap:
        _, i, ver = heapq.heappop(heap)
        if not alive[i] or ver != version[i]:
            continue
        alive[i] = False
        count -= 1
        p, q = prev[i], nxt[i]
        nxt[p], prev[q] = q, p
        for j in (p, q):
            if 0 < j < n - 1:
                version[j] += 1
                heapq.heappush(heap, (_drop_error(measure, traj, prev[j], j, nxt[j]), j, version[j]))
    return [i for i in range(n) if alive[i]]


def proportional_budgets(db: TrajectoryDatabase, budget: int) -> List[int]:
    """Per-trajectory budgets max(2, floor(r * |T|)) with r = W / N"""
    ratio = budget / db.N
    return [max(2, int(np.floor(ratio * len(traj)))) for traj in db]


def e_budgets(db: TrajectoryDatabase, budget: int) -> List[int]:
    """
    Proportional per-trajectory budgets that sum to at most W

    When raising small budgets to 2 overshoots W, the largest budgets are
    trimmed (ties by position) until the total fits.
    """
    if budget < 2 * db.M:
        raise BudgetTooSmall(f"Budget {budget} < 2M = {2 * db.M}")
    budgets = proportional_budgets(db, budget)
    excess = sum(budgets) - budget
    if excess > 0:
        heap = [(-b, pos) for pos, b in enumerate(budgets) if b > 2]
        heapq.heapify(heap)
        while excess > 0 and heap:
            neg, pos = heapq.heappop(heap)
            budgets[pos] -= 1
            excess -= 1
            if budgets[pos] > 2:
                heapq.heappush(heap, (neg + 1, pos))
    return budgets


def adapt_e(db: TrajectoryDatabase, budget: int, algorithm, measure: ErrorMeasure) -> SimplifiedDatabase:
    """Simplify each trajectory on its own with a proportional share of the budget"""
    budgets = e_budgets(db, budget)
    kept: Dict[int, List[int]] = {pos: algorithm(traj, b, measure) for pos, (traj, b) in enumerate(zip(db, budgets))}
    view = SimplifiedDatabase(db, budget, kept)
    logger.debug(f"{algorithm.__name__} (E, {measure.value}): kept {view.total}/{budget}")
    return view


def _top_down_w(db: TrajectoryDatabase, budget: int, measure: ErrorMeasure) -> SimplifiedDatabase:
    view = SimplifiedDatabase.endpoints_only(db, budget)
    target = min(budget, db.N)
    heap = []
    for pos, traj in enumerate(db):
        error, index = max_error_point(measure, traj, 0, len(traj) - 1)
        if index is not None:
            heap.append((-error, pos, index, 0, len(traj) - 1))
    heapq.heapify(heap)
    while view.total < target and heap:
        _, pos, index, start, end = heapq.heappop(heap)
        view.insert(pos, index)
        traj = db[pos]
        for s, e in ((start, index), (index, end)):
            error, best = max_error_point(measure, traj, s, e)
            if best is not None:
                heapq.heappush(heap, (-error, pos, best, s, e))
    return view


def _bottom_up_w(db: TrajectoryDatabase, budget: int, measure: ErrorMeasure) -> SimplifiedDatabase:
    target = min(budget, db.N)
    state = []
    heap = []
    for pos, traj in enumerate(db):
        n = len(traj)
        state.append({"prev": list(range(-1, n - 1)), "next": list(range(1, n + 1)),
                      "alive": [True] * n, "version": [0] * n})
        for i in range(1, n - 1):
            heap.append((_drop_error(measure, traj, i - 1, i, i + 1), pos, i, 0))
    heapq.heapify(heap)
    count = db.N
    while count > target and heap:
        _, pos, i, ver = heapq.heappop(heap)
        s = state[pos]
        if not s["alive"][i] or ver != s["version"][i]:
            continue
        s["alive"][i] = False
        count -= 1
        p, q = s["prev"][i], s["next"][i]
        s["next"][p], s["prev"][q] = q, p
        traj = db[pos]
        for j in (p, q):
            if 0 < j < len(traj) - 1:
                s["version"][j] += 1
                error = _drop_error(measure, traj, s["prev"][j], j, s["next"][j])
                heapq.heappush(heap, (error, pos, j, s["version"][j]))
    kept = {pos: [i for i, alive in enumerate(s["alive"]) if alive] for pos, s in enumerate(state)}
    return SimplifiedDatabase(db, budget, kept)


def adapt_w(db: TrajectoryDatabase, budget: int, algorithm: Algorithm, measure: ErrorMeasure) -> SimplifiedDatabase:
    """Simplify the database as a whole with one global priority queue"""
    if budget < 2 * db.M:
        raise BudgetTooSmall(f"Budget {budget} < 2M = {2 * db.M}")
    if Algorithm(algorithm) is Algorithm.TOP_DOWN:
        view = _top_down_w(db, budget, measure)
    else:
        view = _bottom_up_w(db, budget, measure)
    logger.debug(f"{Algorithm(algorithm).value} (W, {measure.value}): kept {view.total}/{budget}")
    return view

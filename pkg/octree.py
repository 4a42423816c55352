"""
Spatio-temporal octree over a trajectory database with per-cube trajectory,
point and query statistics
"""

import logging
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from errors import Exhausted
from query_engine import QueryWorkload, RangeQuery
from trajectory import SimplifiedDatabase, TrajectoryDatabase

logger = logging.getLogger(__name__)

OCTANTS = range(1, 9)


class CubeId(NamedTuple):
    """Cube B_level along a path of octant indices in [1, 8]; the root has an empty path"""
    level: int
    path: Tuple[int, ...]

    def child(self, octant: int) -> "CubeId":
        return CubeId(self.level + 1, self.path + (octant,))


def child_bounds(lo: np.ndarray, hi: np.ndarray, octant: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Bounds of one octant; bit 0 of (octant - 1) selects the upper x half,
    bit 1 the upper y half, bit 2 the upper t half
    """
    mid = (lo + hi) / 2.0
    bits = np.array([(octant - 1) >> axis & 1 for axis in range(3)], dtype=bool)
    return np.where(bits, mid, lo), np.where(bits, hi, mid)


def query_cube_intersects(q: RangeQuery, lo: np.ndarray, hi: np.ndarray) -> bool:
    """True iff the closed query box and closed cube box overlap on every axis"""
    return bool(np.all((q.lo <= hi) & (lo <= q.hi)))


def _count_intersecting(workload: QueryWorkload, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Number of workload queries intersecting each of k boxes given as (k, 3) arrays"""
    counts = np.zeros(len(lo), dtype=np.int64)
    for q_lo, q_hi in zip(workload.lo, workload.hi):
        counts += np.all((q_lo <= hi) & (lo <= q_hi), axis=1)
    return counts


class OctreeNode:
    """A materialized cube: bounds, statistics and nonempty children"""

    __slots__ = ("cube_id", "lo", "hi", "n_b", "m_b", "q_b", "children", "parent",
                 "remaining", "_order", "_start", "_end")

    def __init__(self, cube_id: CubeId, lo: np.ndarray, hi: np.ndarray, parent: Optional["OctreeNode"] = None):
        self.cube_id = cube_id
        self.lo = lo
        self.hi = hi
        self.parent = parent
        self.children: Dict[int, "OctreeNode"] = {}
        self.n_b = 0
        self.m_b = 0
        self.q_b = 0
        self.remaining = 0
        self._order = None
        self._start = 0
        self._end = 0

    @property
    def level(self) -> int:
        return self.cube_id.level

    @property
    def members(self) -> np.ndarray:
        """Global ids of the database points inside this cube"""
        return self._order[self._start:self._end]

    def is_leaf(self) -> bool:
        return not self.children

    def __repr__(self) -> str:
        return (f"OctreeNode(level={self.level}, path={self.cube_id.path}, "
                f"N_B={self.n_b}, M_B={self.m_b}, Q_B={self.q_b}, remaining={self.remaining})")


class Octree:
    """
    Octree over (x, y, t) down to a fixed depth

    Every level halves each dimension independently, so space and time are
    split relative to their own extents. Nodes exist only where points fall.
    A point lying exactly on a split plane goes to the lower octant.
    """

    def __init__(self, db: TrajectoryDatabase, workload: QueryWorkload, depth: int):
        if depth < 2:
            raise ValueError(f"Octree depth must be >= 2, got {depth}")
        if db.N == 0:
            raise ValueError("Cannot index an empty database")
        self.db = db
        self.workload = workload
        self.depth = depth

        lo, hi = db.bounds()
        pad = 1e-9 * np.maximum(hi - lo, 1.0)
        self.lo, self.hi = lo - pad, hi + pad

        self.levels: List[List[OctreeNode]] = []
        self._node_of: List[np.ndarray] = []
        self._build()

        endpoints = np.zeros(db.N, dtype=bool)
        endpoints[db.offsets] = True
        endpoints[db.offsets + db.lengths - 1] = True
        self._set_remaining(~endpoints)
        logger.debug(f"Built octree: depth {depth}, {sum(len(nodes) for nodes in self.levels)} nodes")

    @property
    def root(self) -> OctreeNode:
        return self.levels[0][0]

    def _build(self) -> None:
        db = self.db
        points = db.points
        node_of = np.zeros(db.N, dtype=np.int64)
        parents = [OctreeNode(CubeId(1, ()), self.lo.copy(), self.hi.copy())]

        for level in range(1, self.depth + 1):
            if level > 1:
                plo = np.array([node.lo for node in parents])
                phi = np.array([node.hi for node in parents])
                mid = (plo + phi) / 2.0
                upper = points > mid[node_of]
                octant = upper[:, 0] * 1 + upper[:, 1] * 2 + upper[:, 2] * 4
                keys, node_of = np.unique(node_of * 8 + octant, return_inverse=True)
                node_of = node_of.reshape(-1)
                nodes = []
                for key in keys.tolist():
                    parent = parents[key // 8]
                    o = key % 8 + 1
                    c_lo, c_hi = child_bounds(parent.lo, parent.hi, o)
                    child = OctreeNode(parent.cube_id.child(o), c_lo, c_hi, parent)
                    parent.children[o] = child
                    nodes.append(child)
            else:
                nodes = parents

            count = len(nodes)
            n_b = np.bincount(node_of, minlength=count)
            pairs = np.unique(node_of * db.M + db.owner)
            m_b = np.bincount(pairs // db.M, minlength=count)
            q_b = _count_intersecting(self.workload,
                                      np.array([node.lo for node in nodes]),
                                      np.array([node.hi for node in nodes]))
            order = np.argsort(node_of, kind="stable")
            ends = np.cumsum(n_b)
            for i, node in enumerate(nodes):
                node.n_b = int(n_b[i])
                node.m_b = int(m_b[i])
                node.q_b = int(q_b[i])
                node._order = order
                node._start = int(ends[i] - n_b[i])
                node._end = int(ends[i])

            self.levels.append(nodes)
            self._node_of.append(node_of)
            parents = nodes

    def _set_remaining(self, uninserted: np.ndarray) -> None:
        weights = uninserted.astype(np.int64)
        for nodes, node_of in zip(self.levels, self._node_of):
            counts = np.bincount(node_of, weights=weights, minlength=len(nodes)).astype(np.int64)
            for node, remaining in zip(nodes, counts.tolist()):
                node.remaining = remaining

    def reset(self, view: SimplifiedDatabase) -> None:
        """Recount uninserted points against a simplified view"""
        self._set_remaining(~view.mask)

    def mark_inserted(self, gid: int) -> None:
        """Decrement the uninserted counters along the point's path"""
        node = self.levels[-1][int(self._node_of[-1][gid])]
        while node is not None:
            node.remaining -= 1
            assert node.remaining >= 0, f"Negative uninserted count at {node.cube_id}"
            node = node.parent

    def node(self, cube_id: CubeId) -> OctreeNode:
        node = self.root
        for octant in cube_id.path:
            node = node.children[octant]
        return node

    def locate(self, gid: int, level: int) -> OctreeNode:
        """Level-`level` cube containing the global point id"""
        return self.levels[level - 1][int(self._node_of[level - 1][gid])]

    def query_count(self, lo: np.ndarray, hi: np.ndarray) -> int:
        return int(_count_intersecting(self.workload, lo[None, :], hi[None, :])[0])

    def cube_state(self, node: Union[OctreeNode, CubeId]) -> np.ndarray:
        """
        16 ratios (M_child / M_B, Q_child / Q_B) for octants 1..8 in order

        Takes a node or the CubeId of a materialized node.

        An unmaterialized child has no trajectories but may still intersect
        queries; 0 / 0 is taken as 0.
        """
        if isinstance(node, CubeId):
            node = self.node(node)
        state = np.zeros(16)
        for o in OCTANTS:
            child = node.children.get(o)
            if child is not None:
                m_child, q_child = child.m_b, child.q_b
            else:
                m_child = 0
                q_child = self.query_count(*child_bounds(node.lo, node.hi, o))
            state[2 * (o - 1)] = m_child / node.m_b if node.m_b else 0.0
            state[2 * (o - 1) + 1] = q_child / node.q_b if node.q_b else 0.0
        return state

    def sample_start_cube(self, level: int, rng: np.random.Generator, by: str = "query") -> OctreeNode:
        """
        Sample a level cube that still holds uninserted points

        Args:
            level: Start level S
            rng: Random generator
            by: "query" weighs by Q_B (falling back to N_B when all are 0), "data" by N_B

        Returns:
            The sampled node
        """
        if not 1 <= level <= self.depth:
            raise ValueError(f"Start level {level} outside [1, {self.depth}]")
        eligible = [node for node in self.levels[level - 1] if node.remaining > 0]
        if not eligible:
            raise Exhausted(f"No level-{level} cube has an uninserted point")
        weights = np.array([node.q_b for node in eligible], dtype=float) if by == "query" else None
        if weights is None or weights.sum() == 0:
            weights = np.array([node.n_b for node in eligible], dtype=float)
        return eligible[int(rng.choice(len(eligible), p=weights / weights.sum()))]

"""
Query-driven simplification loop: sample a start cube, let Agent-Cube pick a
cube, let Agent-Point insert one of its points, until the budget is used
"""

import logging
from dataclasses import dataclass, fields
from typing import Any, Callable, Dict, List, NamedTuple, Optional

import numpy as np

from config import DQN_SETTINGS, DRIVER_SETTINGS
from errors import ConfigError, Exhausted, ShapeMismatch
from octree import CubeId, Octree, OctreeNode
from rl_agents import (
    CUBE_ACTIONS,
    CUBE_STATE_SIZE,
    STOP_ACTION,
    PointState,
    QNetwork,
    build_point_state,
    cube_action_mask,
    select_action,
)
from trajectory import SimplifiedDatabase, TrajectoryDatabase

logger = logging.getLogger(__name__)

CUBE_MODES = ("learned", "random")
POINT_MODES = ("learned", "max")


@dataclass(frozen=True)
class DriverConfig:
    """Octree levels, candidate count and reward batching"""
    start_level: int = DRIVER_SETTINGS["start_level"]
    end_level: int = DRIVER_SETTINGS["end_level"]
    k: int = DRIVER_SETTINGS["k"]
    delta: int = DRIVER_SETTINGS["delta"]
    reward_queries: int = DRIVER_SETTINGS["reward_queries"]
    cube_mode: str = DRIVER_SETTINGS["cube_mode"]
    point_mode: str = DRIVER_SETTINGS["point_mode"]

    def __post_init__(self):
        if not 1 <= self.start_level <= self.end_level:
            raise ConfigError(f"Need 1 <= S <= E, got S={self.start_level}, E={self.end_level}")
        if self.end_level < 2:
            raise ConfigError("End level must be >= 2")
        if self.k < 1:
            raise ConfigError(f"K must be >= 1, got {self.k}")
        if self.delta < 1:
            raise ConfigError(f"Delta must be >= 1, got {self.delta}")
        if self.reward_queries < 1:
            raise ConfigError("Reward workload needs at least one query")
        if self.cube_mode not in CUBE_MODES:
            raise ConfigError(f"Unknown cube mode {self.cube_mode!r}; expected one of {CUBE_MODES}")
        if self.point_mode not in POINT_MODES:
            raise ConfigError(f"Unknown point mode {self.point_mode!r}; expected one of {POINT_MODES}")

    @classmethod
    def from_settings(cls, settings: Dict[str, Any]) -> "DriverConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{key: value for key, value in settings.items() if key in names})

    def as_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class Policies(NamedTuple):
    cube: Optional[QNetwork]
    point: Optional[QNetwork]


def initial_policies(k: int, rng: np.random.Generator, hidden: int = DQN_SETTINGS["hidden_units"]) -> Policies:
    """Freshly initialized Agent-Cube and Agent-Point networks"""
    return Policies(QNetwork(CUBE_STATE_SIZE, CUBE_ACTIONS, hidden, rng), QNetwork(2 * k, k, hidden, rng))


class CubeStep(NamedTuple):
    state: np.ndarray
    mask: np.ndarray
    action: int


class InsertStep(NamedTuple):
    """One loop iteration: the traversal taken and the point inserted"""
    pos: int
    index: int
    traj_id: str
    cube: CubeId
    cube_steps: List[CubeStep]
    point_state: Optional[PointState]
    point_action: int


def agent_cube_traverse(octree: Octree, policy: Optional[QNetwork], start: OctreeNode, epsilon: float = 0.0,
                        rng: Optional[np.random.Generator] = None, end_level: Optional[int] = None,
                        steps: Optional[List[CubeStep]] = None) -> OctreeNode:
    """
    Walk down from the start cube until the policy stops, the end level or a leaf

    Only children that still hold uninserted points are valid moves.

    Args:
        octree: Index with up-to-date uninserted counters
        policy: Agent-Cube network
        start: Cube with at least one uninserted point
        epsilon: Exploration rate
        rng: Generator for exploration
        end_level: Maximum depth E (defaults to the octree depth)
        steps: Optional list collecting (state, mask, action) per decision

    Returns:
        The chosen cube
    """
    end_level = octree.depth if end_level is None else min(end_level, octree.depth)
    node = start
    while node.level < end_level and not node.is_leaf():
        state = octree.cube_state(node)
        mask = cube_action_mask(octree, node)
        action = select_action(policy, state, mask, epsilon, rng)
        if steps is not None:
            steps.append(CubeStep(state, mask, action))
        if action == STOP_ACTION:
            break
        node = node.children[action + 1]
    return node


def agent_point_insert(octree: Octree, node: OctreeNode, view: SimplifiedDatabase, policy: Optional[QNetwork],
                       k: int, epsilon: float = 0.0, rng: Optional[np.random.Generator] = None,
                       mode: str = "learned") -> InsertStep:
    """
    Insert one candidate point of the cube into the view

    Raises:
        CubeExhausted: The cube has no uninserted point
    """
    state = build_point_state(node, view, k)
    if mode == "max":
        action = 0
    else:
        action = select_action(policy, state.features(), state.mask, epsilon, rng)
    pos, index = state.candidates[action]
    view.insert(pos, index)
    octree.mark_inserted(view.db.global_id(pos, index))
    return InsertStep(pos, index, view.db[pos].id, node.cube_id, [], state, action)


def _check_policies(policies: Policies, config: DriverConfig) -> None:
    if config.cube_mode == "learned":
        if policies.cube is None:
            raise ConfigError("Learned cube mode needs a cube policy")
        if (policies.cube.n_inputs, policies.cube.n_outputs) != (CUBE_STATE_SIZE, CUBE_ACTIONS):
            raise ShapeMismatch(f"Cube policy is {policies.cube.n_inputs}->{policies.cube.n_outputs}")
    if config.point_mode == "learned":
        if policies.point is None:
            raise ConfigError("Learned point mode needs a point policy")
        if (policies.point.n_inputs, policies.point.n_outputs) != (2 * config.k, config.k):
            raise ShapeMismatch(f"Point policy is {policies.point.n_inputs}->{policies.point.n_outputs}, K={config.k}")


def _sample_start(octree: Octree, level: int, rng: np.random.Generator, by: str) -> Optional[OctreeNode]:
    """Start cube at the given level, else at the shallowest level that still has a candidate"""
    for candidate_level in [level, *range(1, level)]:
        try:
            return octree.sample_start_cube(candidate_level, rng, by=by)
        except Exhausted:
            logger.debug(f"Level {candidate_level} exhausted")
    return None


def rl4qdts_simplify(db: TrajectoryDatabase, budget: int, octree: Octree, policies: Policies,
                     config: DriverConfig, rng: np.random.Generator, epsilon: float = 0.0,
                     on_insert: Optional[Callable[[SimplifiedDatabase, InsertStep], None]] = None) -> SimplifiedDatabase:
    """
    Simplify a database to min(budget, N) points

    Args:
        db: Database the octree was built on
        budget: Storage budget W >= 2M
        octree: Index over db and the state-defining workload
        policies: Agent networks (unused parts may be None in ablation modes)
        config: Driver settings
        rng: Generator for start-cube sampling and exploration
        epsilon: Exploration rate; 0 at inference
        on_insert: Called after every insertion with the view and the step taken

    Returns:
        The simplified view
    """
    _check_policies(policies, config)
    if config.start_level > octree.depth:
        raise ConfigError(f"Start level {config.start_level} exceeds octree depth {octree.depth}")
    view = SimplifiedDatabase.endpoints_only(db, budget)
    octree.reset(view)
    target = min(budget, db.N)
    sample_by = "data" if config.cube_mode == "random" else "query"

    while view.total < target:
        start = _sample_start(octree, config.start_level, rng, sample_by)
        if start is None:
            logger.warning(f"No candidate left in the octree with {view.total}/{target} kept")
            break
        steps: List[CubeStep] = []
        if config.cube_mode == "random":
            node = start
        else:
            node = agent_cube_traverse(octree, policies.cube, start, epsilon, rng, config.end_level, steps)
        step = agent_point_insert(octree, node, view, policies.point, config.k, epsilon, rng, config.point_mode)
        step = step._replace(cube_steps=steps)
        if on_insert is not None:
            on_insert(view, step)

    logger.debug(f"Simplified {db.M} trajectories to {view.total} points (budget {budget})")
    return view


def random_simplify(db: TrajectoryDatabase, budget: int, rng: np.random.Generator) -> SimplifiedDatabase:
    """Endpoints plus uniformly drawn interior points up to min(budget, N)"""
    view = SimplifiedDatabase.endpoints_only(db, budget)
    interior = np.flatnonzero(~view.mask)
    extra = min(budget, db.N) - view.total
    for gid in np.sort(rng.choice(interior, size=extra, replace=False)).tolist():
        view.insert(*db.locate_global(gid))
    return view

"""
Agent-Cube and Agent-Point: observations, Q-networks, replay memory and DQN updates
"""

import logging
from collections import deque
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from config import DQN_SETTINGS
from errors import ConfigError, CubeExhausted, NoCandidates, NoValidAction, ShapeMismatch
from octree import Octree, OctreeNode
from trajectory import SimplifiedDatabase, Trajectory

logger = logging.getLogger(__name__)

CUBE_STATE_SIZE = 16
CUBE_ACTIONS = 9
STOP_ACTION = 8


@dataclass(frozen=True)
class DqnConfig:
    """Deep Q-learning hyperparameters"""
    gamma: float = DQN_SETTINGS["gamma"]
    learning_rate: float = DQN_SETTINGS["learning_rate"]
    epsilon_start: float = DQN_SETTINGS["epsilon_start"]
    epsilon_min: float = DQN_SETTINGS["epsilon_min"]
    epsilon_decay: float = DQN_SETTINGS["epsilon_decay"]
    batch_size: int = DQN_SETTINGS["batch_size"]
    memory_capacity: int = DQN_SETTINGS["memory_capacity"]
    target_sync_interval: int = DQN_SETTINGS["target_sync_interval"]
    hidden_units: int = DQN_SETTINGS["hidden_units"]

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0 < self.epsilon_min <= 1:
            raise ConfigError(f"epsilon_min must be in (0, 1], got {self.epsilon_min}")
        if not 0 < self.epsilon_decay <= 1:
            raise ConfigError(f"epsilon_decay must be in (0, 1], got {self.epsilon_decay}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        for name in ("batch_size", "memory_capacity", "target_sync_interval", "hidden_units"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @classmethod
    def from_settings(cls, settings: Dict[str, Any]) -> "DqnConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{key: value for key, value in settings.items() if key in names})

    def decayed(self, epsilon: float) -> float:
        return max(self.epsilon_min, epsilon * self.epsilon_decay)


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------

def _anchor_values(p: np.ndarray, ps: np.ndarray, pe: np.ndarray) -> np.ndarray:
    """
    (v_s, v_t) rows for points p against anchor segments ps->pe, all (k, 3)

    v_s is the synchronized Euclidean distance; v_t is the time gap to the
    spatially closest point of the segment. A spatially degenerate segment
    gives v_t = 0.
    """
    dt = pe[:, 2] - ps[:, 2]
    ratio = (p[:, 2] - ps[:, 2]) / dt
    sync = ps[:, :2] + (pe[:, :2] - ps[:, :2]) * ratio[:, None]
    v_s = np.hypot(p[:, 0] - sync[:, 0], p[:, 1] - sync[:, 1])

    d = pe[:, :2] - ps[:, :2]
    length2 = np.einsum("ij,ij->i", d, d)
    along = np.einsum("ij,ij->i", p[:, :2] - ps[:, :2], d)
    lam = np.where(length2 > 0, np.clip(along / np.where(length2 > 0, length2, 1.0), 0.0, 1.0), ratio)
    v_t = np.abs(p[:, 2] - (ps[:, 2] + lam * dt))
    return np.column_stack([v_s, v_t])


def point_values(traj: Trajectory, kept: Sequence[int], indices: Sequence[int]) -> Tuple[np.ndarray, int]:
    """
    (v_s, v_t) of candidate points against their anchor segments

    Args:
        traj: Original trajectory
        kept: Sorted kept indices of its simplified version
        indices: Uninserted interior point indices (the candidates)

    Returns:
        ((k, 2) values in candidate order, point index with the largest v_s;
        ties by smallest index)
    """
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) == 0:
        raise NoCandidates(f"Trajectory {traj.id} has no candidate in the cube")
    kept_arr = np.asarray(kept, dtype=np.int64)
    j = np.clip(np.searchsorted(kept_arr, indices, side="right") - 1, 0, len(kept_arr) - 2)
    values = _anchor_values(traj.data[indices], traj.data[kept_arr[j]], traj.data[kept_arr[j + 1]])
    order = np.lexsort((indices, -values[:, 0]))
    return values, int(indices[order[0]])


@dataclass
class PointState:
    """
    Agent-Point observation: the K trajectories with the largest per-trajectory
    max v_s, descending, each with its best candidate point
    """
    values: np.ndarray
    candidates: List[Optional[Tuple[int, int]]]
    mask: np.ndarray
    scale: np.ndarray = field(default_factory=lambda: np.ones(2))

    @property
    def k(self) -> int:
        return len(self.candidates)

    @property
    def vector(self) -> np.ndarray:
        return self.values.reshape(-1)

    def features(self) -> np.ndarray:
        """
        Network input: log1p of (v_s, v_t) over the cube's (spatial, temporal) extent

        The scale depends only on the cube, never on the other slots.
        """
        return np.log1p(self.values / self.scale).reshape(-1)


def cube_candidates(node: OctreeNode, view: SimplifiedDatabase) -> np.ndarray:
    """Global ids of uninserted points inside the cube; endpoints are always kept"""
    members = node.members
    return members[~view.mask[members]]


def build_point_state(node: OctreeNode, view: SimplifiedDatabase, k: int) -> PointState:
    """
    Rank the trajectories with candidates in the cube by their max v_s

    Raises:
        CubeExhausted: No uninserted point is left in the cube
    """
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    gids = cube_candidates(node, view)
    if len(gids) == 0:
        raise CubeExhausted(f"Cube {node.cube_id} has no candidate left")
    db = view.db
    kept_gids = view.kept_global_ids()
    j = np.searchsorted(kept_gids, gids, side="right")
    points = db.points
    values = _anchor_values(points[gids], points[kept_gids[j - 1]], points[kept_gids[j]])

    owner = db.owner[gids]
    order = np.lexsort((gids, -values[:, 0], owner))
    first = np.unique(owner[order], return_index=True)[1]
    best = order[first]
    ranked = best[np.lexsort((owner[best], -values[best, 0]))][:k]

    slots = np.zeros((k, 2))
    mask = np.zeros(k, dtype=bool)
    candidates: List[Optional[Tuple[int, int]]] = [None] * k
    for slot, row in enumerate(ranked.tolist()):
        slots[slot] = values[row]
        mask[slot] = True
        candidates[slot] = db.locate_global(int(gids[row]))
    extent = node.hi - node.lo
    return PointState(slots, candidates, mask, np.array([max(extent[0], extent[1]), extent[2]]))


def cube_action_mask(octree: Octree, node: OctreeNode) -> np.ndarray:
    """Valid Agent-Cube actions: children that still hold candidates, plus stop"""
    mask = np.zeros(CUBE_ACTIONS, dtype=bool)
    for octant, child in node.children.items():
        mask[octant - 1] = child.remaining > 0
    mask[STOP_ACTION] = True
    return mask


# ---------------------------------------------------------------------------
# Networks
# ---------------------------------------------------------------------------

class QNetwork:
    """Two-layer perceptron: tanh hidden layer, linear action values"""

    PARAMS = ("w1", "b1", "w2", "b2")

    def __init__(self, n_inputs: int, n_outputs: int, hidden: int = DQN_SETTINGS["hidden_units"],
                 rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_inputs = n_inputs
        self.n_outputs = n_outputs
        self.hidden = hidden
        self.w1 = rng.normal(0.0, 1.0 / np.sqrt(n_inputs), size=(hidden, n_inputs))
        self.b1 = np.zeros(hidden)
        self.w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(n_outputs, hidden))
        self.b2 = np.zeros(n_outputs)

    @property
    def params(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.PARAMS}

    def set_params(self, params: Dict[str, np.ndarray]) -> None:
        for name in self.PARAMS:
            value = np.asarray(params[name], dtype=float)
            if value.shape != getattr(self, name).shape:
                raise ShapeMismatch(f"{name}: expected {getattr(self, name).shape}, got {value.shape}")
            setattr(self, name, value.copy())

    def _check(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        if states.shape[-1] != self.n_inputs:
            raise ShapeMismatch(f"State has {states.shape[-1]} values, network expects {self.n_inputs}")
        return states

    def forward(self, state: np.ndarray) -> np.ndarray:
        """Action values for one (n_inputs,) state or a (B, n_inputs) batch"""
        state = self._check(state)
        hidden = np.tanh(state @ self.w1.T + self.b1)
        return hidden @ self.w2.T + self.b2

    def loss_and_gradients(self, states: np.ndarray, actions: np.ndarray,
                           targets: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        """
        Mean squared TD error on the taken actions and its parameter gradients

        Args:
            states: (B, n_inputs)
            actions: (B,) taken action indices
            targets: (B,) TD targets

        Returns:
            (loss, gradients keyed like params)
        """
        states = self._check(np.atleast_2d(states))
        batch = len(states)
        rows = np.arange(batch)
        hidden = np.tanh(states @ self.w1.T + self.b1)
        q = hidden @ self.w2.T + self.b2
        error = q[rows, actions] - targets
        loss = float(np.mean(error ** 2))

        dq = np.zeros_like(q)
        dq[rows, actions] = 2.0 * error / batch
        dz = (dq @ self.w2) * (1.0 - hidden ** 2)
        grads = {
            "w2": dq.T @ hidden,
            "b2": dq.sum(axis=0),
            "w1": dz.T @ states,
            "b1": dz.sum(axis=0),
        }
        return loss, grads

    def copy(self) -> "QNetwork":
        clone = QNetwork.__new__(QNetwork)
        clone.n_inputs, clone.n_outputs, clone.hidden = self.n_inputs, self.n_outputs, self.hidden
        for name in self.PARAMS:
            setattr(clone, name, getattr(self, name).copy())
        return clone


def q_forward(net: QNetwork, state: np.ndarray) -> np.ndarray:
    return net.forward(state)


class AdamOptimizer:
    """Adam with per-parameter first and second moment estimates"""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, net: QNetwork, grads: Dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        for name, grad in grads.items():
            m = self.m.get(name, np.zeros_like(grad))
            v = self.v.get(name, np.zeros_like(grad))
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad ** 2
            self.m[name], self.v[name] = m, v
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            setattr(net, name, getattr(net, name) - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps))


# ---------------------------------------------------------------------------
# Experience
# ---------------------------------------------------------------------------

class Transition(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: Optional[np.ndarray]
    next_mask: Optional[np.ndarray]
    terminal: bool


class ReplayMemory:
    """Fixed-capacity FIFO transition store"""

    def __init__(self, capacity: int = DQN_SETTINGS["memory_capacity"]):
        if capacity < 1:
            raise ValueError("Replay capacity must be >= 1")
        self.capacity = capacity
        self.data: deque = deque(maxlen=capacity)

    def push(self, transition: Transition) -> None:
        self.data.append(transition)

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Transition]:
        size = min(batch_size, len(self.data))
        picks = rng.choice(len(self.data), size=size, replace=False)
        return [self.data[i] for i in picks.tolist()]

    def __len__(self) -> int:
        return len(self.data)


def select_action(net: QNetwork, state: np.ndarray, mask: np.ndarray, epsilon: float,
                  rng: Optional[np.random.Generator] = None) -> int:
    """
    Epsilon-greedy action among the valid entries of the mask

    Greedy ties go to the smallest index.
    """
    valid = np.flatnonzero(mask)
    if len(valid) == 0:
        raise NoValidAction("Action mask has no valid entry")
    if epsilon > 0:
        if rng is None:
            raise ValueError("Exploration needs a random generator")
        if rng.random() < epsilon:
            return int(rng.choice(valid))
    q = net.forward(state)
    return int(valid[np.argmax(q[valid])])


def compute_reward(diff_before: float, diff_after: float) -> float:
    return diff_before - diff_after


def td_targets(target: QNetwork, batch: Sequence[Transition], gamma: float) -> np.ndarray:
    """r + gamma * max over valid next actions of the target network; r when terminal"""
    targets = np.array([t.reward for t in batch], dtype=float)
    if gamma == 0:
        return targets
    for i, t in enumerate(batch):
        if t.terminal or t.next_state is None:
            continue
        q_next = target.forward(t.next_state)
        valid = np.flatnonzero(t.next_mask) if t.next_mask is not None else np.arange(len(q_next))
        if len(valid):
            targets[i] += gamma * float(q_next[valid].max())
    return targets


def dqn_update(net: QNetwork, target: QNetwork, batch: Sequence[Transition],
               optimizer: AdamOptimizer, gamma: float) -> float:
    """One Adam step on the squared TD error of a batch; returns the loss before the step"""
    if not batch:
        raise ValueError("Empty batch")
    states = np.array([t.state for t in batch], dtype=float)
    actions = np.array([t.action for t in batch], dtype=np.int64)
    loss, grads = net.loss_and_gradients(states, actions, td_targets(target, batch, gamma))
    optimizer.step(net, grads)
    return loss


class DqnAgent:
    """Online network, target network, optimizer and replay memory of one agent"""

    def __init__(self, name: str, net: QNetwork, config: DqnConfig, rng: np.random.Generator):
        self.name = name
        self.config = config
        self.rng = rng
        self.net = net
        self.target = self.net.copy()
        self.optimizer = AdamOptimizer(config.learning_rate)
        self.memory = ReplayMemory(config.memory_capacity)
        self.updates = 0

    def act(self, state: np.ndarray, mask: np.ndarray, epsilon: float) -> int:
        return select_action(self.net, state, mask, epsilon, self.rng)

    def remember(self, transition: Transition) -> None:
        self.memory.push(transition)

    def learn(self) -> Optional[float]:
        """Sample a batch and update; syncs the target network every fixed number of updates"""
        if len(self.memory) == 0:
            return None
        batch = self.memory.sample(self.config.batch_size, self.rng)
        loss = dqn_update(self.net, self.target, batch, self.optimizer, self.config.gamma)
        self.updates += 1
        if self.updates % self.config.target_sync_interval == 0:
            self.target = self.net.copy()
            logger.debug(f"{self.name}: target network synced after {self.updates} updates")
        return loss

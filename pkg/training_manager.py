"""
Training manager for episode-based DQN training of Agent-Cube and Agent-Point
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from checkpoint_handler import Checkpoint
from config import DRIVER_SETTINGS
from errors import ConfigError
from octree import Octree
from query_engine import QueryWorkload, RangeQueryTracker
from rl4qdts import DriverConfig, InsertStep, Policies, initial_policies, rl4qdts_simplify
from rl_agents import DqnAgent, DqnConfig, Transition, compute_reward
from trajectory import SimplifiedDatabase, TrajectoryDatabase
from utils import derive_seed, make_rng
from workload_generator import WorkloadSpec, generate

logger = logging.getLogger(__name__)


@dataclass
class EpisodeRecord:
    """What happened in one training episode"""
    database: int
    episode: int
    epsilon: float
    budget: int
    diff_initial: float
    diff_final: float
    mean_f1: float
    rewards: List[float] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))


class TrainingResult(NamedTuple):
    policies: Policies
    best_f1: float
    history: List[EpisodeRecord]
    checkpoint: Checkpoint


def training_budget(db: TrajectoryDatabase, ratio: float) -> int:
    """Episode budget: ratio * N, at least 2M and at most N"""
    return min(db.N, max(2 * db.M, int(np.floor(ratio * db.N))))


def sample_training_databases(db: TrajectoryDatabase, count: int, size: int, seed: int) -> List[TrajectoryDatabase]:
    """
    Draw training databases of `size` trajectories each from a pool

    Trajectories are drawn without replacement inside one database, so
    databases may overlap when count * size exceeds the pool.
    """
    if size < 1 or count < 1:
        raise ValueError("Need at least one database of at least one trajectory")
    size = min(size, db.M)
    databases = []
    for i in range(count):
        rng = make_rng(seed, "training-database", i)
        positions = np.sort(rng.choice(db.M, size=size, replace=False))
        databases.append(db.subset(positions.tolist()))
    return databases


class _EpisodeRecorder:
    """
    Turns insertion steps into replay transitions

    Rewards are computed every delta insertions and shared by every
    transition of the window. Cube transitions chain inside one traversal;
    point transitions chain across consecutive insertions.
    """

    def __init__(self, tracker: RangeQueryTracker, delta: int, cube_agent: Optional[DqnAgent],
                 point_agent: Optional[DqnAgent]):
        self.tracker = tracker
        self.delta = delta
        self.cube_agent = cube_agent
        self.point_agent = point_agent
        self.diff_before = tracker.diff()
        self.diff_initial = self.diff_before
        self.rewards: List[float] = []
        self.losses: List[float] = []
        self.count = 0
        self._cube_window: List[Tuple] = []
        self._point_window: List[Tuple] = []
        self._open_point: Optional[list] = None

    def __call__(self, view: SimplifiedDatabase, step: InsertStep) -> None:
        self.tracker.insert(step.pos, step.index)

        if self.cube_agent is not None:
            steps = step.cube_steps
            for i, current in enumerate(steps):
                nxt = steps[i + 1] if i + 1 < len(steps) else None
                self._cube_window.append((current.state, current.action,
                                          None if nxt is None else nxt.state,
                                          None if nxt is None else nxt.mask,
                                          nxt is None))

        if self.point_agent is not None:
            features = step.point_state.features()
            if self._open_point is not None:
                state, action, reward = self._open_point
                completed = (state, action, features, step.point_state.mask, False)
                if reward is None:
                    self._point_window.append(completed)
                else:
                    self.point_agent.remember(Transition(state, action, reward, *completed[2:]))
            self._open_point = [features, step.point_action, None]

        self.count += 1
        if self.count % self.delta == 0:
            self.close_window()
        for agent in (self.cube_agent, self.point_agent):
            if agent is not None:
                loss = agent.learn()
                if loss is not None:
                    self.losses.append(loss)

    def close_window(self) -> None:
        diff_after = self.tracker.diff()
        reward = compute_reward(self.diff_before, diff_after)
        self.diff_before = diff_after
        self.rewards.append(reward)
        for state, action, next_state, next_mask, terminal in self._cube_window:
            self.cube_agent.remember(Transition(state, action, reward, next_state, next_mask, terminal))
        for state, action, next_state, next_mask, terminal in self._point_window:
            self.point_agent.remember(Transition(state, action, reward, next_state, next_mask, terminal))
        self._cube_window.clear()
        self._point_window.clear()
        if self._open_point is not None and self._open_point[2] is None:
            self._open_point[2] = reward

    def finish(self) -> None:
        """Evaluate the last partial window and close the open point transition as terminal"""
        if self.count % self.delta != 0:
            self.close_window()
        if self._open_point is not None:
            state, action, reward = self._open_point
            self.point_agent.remember(Transition(state, action, reward, None, None, True))
            self._open_point = None


class TrainingManager:
    """Manages episode generation, DQN updates and best-policy selection"""

    def __init__(self, driver: DriverConfig, dqn: DqnConfig, workload: WorkloadSpec, seed: int = 0,
                 budget_ratio: float = DRIVER_SETTINGS["train_budget_ratio"],
                 episodes_per_database: int = DRIVER_SETTINGS["episodes_per_database"],
                 policies: Optional[Policies] = None, resumed_episodes: int = 0):
        if not 0 < budget_ratio <= 1:
            raise ValueError(f"Training budget ratio must be in (0, 1], got {budget_ratio}")
        if episodes_per_database < 0:
            raise ValueError("Episodes per database must be >= 0")
        self.driver = driver
        self.dqn = dqn
        self.workload = replace(workload, count=driver.reward_queries)
        self.seed = seed
        self.budget_ratio = budget_ratio
        self.episodes_per_database = episodes_per_database

        if resumed_episodes < 0:
            raise ValueError("Resumed episode count must be >= 0")
        self.resumed_episodes = resumed_episodes

        if policies is None:
            policies = initial_policies(driver.k, make_rng(seed, "init"), dqn.hidden_units)
        else:
            if policies.point.n_outputs != driver.k:
                raise ConfigError(f"Warm-start policies have K={policies.point.n_outputs}, driver has K={driver.k}")
            policies = Policies(policies.cube.copy(), policies.point.copy())
            logger.info(f"Warm start from given policies after {resumed_episodes} episode(s)")
        self.cube_agent = DqnAgent("agent-cube", policies.cube, dqn, make_rng(seed, "agent-cube"))
        self.point_agent = DqnAgent("agent-point", policies.point, dqn, make_rng(seed, "agent-point"))
        self.epsilon = dqn.epsilon_start
        for _ in range(resumed_episodes):
            self.epsilon = dqn.decayed(self.epsilon)

    def reward_workload(self, db: TrajectoryDatabase, db_index: int, episode: int) -> QueryWorkload:
        return generate(db, self.workload.with_seed(derive_seed(self.seed, "workload", db_index, episode)))

    def run_episode(self, db: TrajectoryDatabase, db_index: int, episode: int) -> EpisodeRecord:
        """
        Simplify one database with exploration and learn from the rewards

        Args:
            db: Training database
            db_index: Position of the database in the training list
            episode: Episode number within that database

        Returns:
            EpisodeRecord with per-window rewards and the final accuracy
        """
        workload = self.reward_workload(db, db_index, episode)
        octree = Octree(db, workload, self.driver.end_level)
        budget = training_budget(db, self.budget_ratio)
        tracker = RangeQueryTracker(db, workload, SimplifiedDatabase.endpoints_only(db, budget))
        recorder = _EpisodeRecorder(
            tracker,
            self.driver.delta,
            self.cube_agent if self.driver.cube_mode == "learned" else None,
            self.point_agent if self.driver.point_mode == "learned" else None,
        )
        rl4qdts_simplify(db, budget, octree, Policies(self.cube_agent.net, self.point_agent.net), self.driver,
                         make_rng(self.seed, "episode", db_index, episode), self.epsilon, recorder)
        recorder.finish()
        return EpisodeRecord(db_index, episode, self.epsilon, budget, recorder.diff_initial, tracker.diff(),
                             tracker.mean_f1(), recorder.rewards, recorder.losses)

    def train(self, databases: Sequence[TrajectoryDatabase]) -> TrainingResult:
        """
        Train on every database for the configured number of episodes

        Returns:
            TrainingResult holding the policies with the best end-of-episode F1
        """
        logger.info("=" * 60)
        logger.info(f"Training on {len(databases)} database(s), {self.episodes_per_database} episode(s) each")
        logger.info(f"S={self.driver.start_level} E={self.driver.end_level} K={self.driver.k} "
                    f"delta={self.driver.delta} queries={self.driver.reward_queries} seed={self.seed}")
        logger.info("=" * 60)

        best = Policies(self.cube_agent.net.copy(), self.point_agent.net.copy())
        best_f1 = float("-inf")
        history: List[EpisodeRecord] = []
        for db_index, db in enumerate(databases):
            if db.N == 0:
                raise ValueError(f"Training database {db_index} is empty")
            for episode in range(self.episodes_per_database):
                record = self.run_episode(db, db_index, episode)
                history.append(record)
                loss = float(np.mean(record.losses)) if record.losses else float("nan")
                logger.info(f"db {db_index} episode {episode}: eps={record.epsilon:.3f} "
                            f"F1={record.mean_f1:.4f} reward={record.total_reward:+.4f} loss={loss:.5f}")
                if record.mean_f1 > best_f1:
                    best_f1 = record.mean_f1
                    best = Policies(self.cube_agent.net.copy(), self.point_agent.net.copy())
                self.epsilon = self.dqn.decayed(self.epsilon)

        if not history:
            logger.warning("No episode was run; returning the initial policies")
        else:
            logger.info(f"Training finished: best episode F1 {best_f1:.4f}")
        checkpoint = Checkpoint(
            best.cube, best.point,
            driver=self.driver.as_dict(),
            dqn=asdict(self.dqn),
            training={
                "seed": self.seed,
                "episodes": self.resumed_episodes + len(history),
                "best_f1": best_f1 if history else None,
                "budget_ratio": self.budget_ratio,
                "distribution": self.workload.distribution,
            },
        )
        return TrainingResult(best, best_f1 if history else float("nan"), history, checkpoint)

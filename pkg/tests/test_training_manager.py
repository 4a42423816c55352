import math

import numpy as np
import pytest

from checkpoint_handler import load_checkpoint, save_checkpoint
from errors import ConfigError
from octree import Octree
from query_engine import RangeQueryTracker
from rl4qdts import DriverConfig, Policies, initial_policies, rl4qdts_simplify
from rl_agents import DqnConfig
from synthetic_data import generate_synthetic_database
from trajectory import SimplifiedDatabase
from training_manager import TrainingManager, _EpisodeRecorder, sample_training_databases, training_budget
from utils import make_rng
from workload_generator import WorkloadSpec


@pytest.fixture
def train_db():
    return generate_synthetic_database(20, points=(20, 35), seed=21, extent=4000.0, days=0.5)


@pytest.fixture
def workload_spec():
    return WorkloadSpec(count=10, spatial_extent=1500.0, temporal_extent=4 * 3600.0)


def _manager(driver, workload_spec, episodes=1, seed=0):
    return TrainingManager(driver, DqnConfig(batch_size=8, memory_capacity=500, target_sync_interval=10),
                           workload_spec, seed=seed, budget_ratio=0.2, episodes_per_database=episodes)


class TestEpisodes:

    def test_rewards_telescope(self, train_db, workload_spec):
        driver = DriverConfig(start_level=2, end_level=4, k=2, delta=1, reward_queries=10)
        record = _manager(driver, workload_spec).run_episode(train_db, 0, 0)
        assert len(record.rewards) == record.budget - 2 * train_db.M
        assert sum(record.rewards) == pytest.approx(record.diff_initial - record.diff_final, abs=1e-9)
        assert record.mean_f1 == pytest.approx(1.0 - record.diff_final)

    def test_partial_window_is_closed(self, train_db, workload_spec):
        driver = DriverConfig(start_level=2, end_level=4, k=2, delta=7, reward_queries=10)
        manager = _manager(driver, workload_spec)
        record = manager.run_episode(train_db, 0, 0)
        insertions = record.budget - 2 * train_db.M
        assert len(record.rewards) == math.ceil(insertions / 7)
        assert sum(record.rewards) == pytest.approx(record.diff_initial - record.diff_final, abs=1e-9)
        assert len(manager.point_agent.memory) == insertions
        assert len(record.losses) > 0

    def test_each_traversal_ends_in_a_terminal_transition(self, train_db, workload_spec):
        driver = DriverConfig(start_level=2, end_level=4, k=2, delta=1, reward_queries=10)
        manager = _manager(driver, workload_spec)
        workload = manager.reward_workload(train_db, 0, 0)
        budget = training_budget(train_db, 0.2)
        tracker = RangeQueryTracker(train_db, workload, SimplifiedDatabase.endpoints_only(train_db, budget))
        recorder = _EpisodeRecorder(tracker, 1, manager.cube_agent, None)
        traversals = []

        def on_insert(view, step):
            traversals.append(step.cube_steps)
            recorder(view, step)

        rl4qdts_simplify(train_db, budget, Octree(train_db, workload, 4),
                         Policies(manager.cube_agent.net, manager.point_agent.net), driver, make_rng(0, "walk"),
                         1.0, on_insert)
        recorder.finish()
        transitions = list(manager.cube_agent.memory.data)
        assert all(traversals)
        assert len(transitions) == sum(len(steps) for steps in traversals)
        assert sum(t.terminal for t in transitions) == len(traversals)
        assert all(t.terminal == (t.next_state is None) for t in transitions)
        position = 0
        for steps in traversals:
            chunk = transitions[position:position + len(steps)]
            assert [t.action for t in chunk] == [s.action for s in steps]
            assert chunk[-1].terminal
            position += len(steps)

    def test_reward_workload_changes_per_episode(self, train_db, workload_spec):
        manager = _manager(DriverConfig(start_level=2, end_level=4, reward_queries=10), workload_spec)
        first = manager.reward_workload(train_db, 0, 0).as_rows()
        assert first == manager.reward_workload(train_db, 0, 0).as_rows()
        assert first != manager.reward_workload(train_db, 0, 1).as_rows()
        assert len(first) == 10


class TestTrain:

    def test_zero_episodes_returns_initial_policies(self, train_db, workload_spec):
        driver = DriverConfig(start_level=2, end_level=4, k=2, reward_queries=10)
        result = _manager(driver, workload_spec, episodes=0, seed=3).train([train_db])
        initial = initial_policies(2, make_rng(3, "init"), DqnConfig().hidden_units)
        for name, value in initial.cube.params.items():
            assert np.array_equal(result.policies.cube.params[name], value)
        for name, value in initial.point.params.items():
            assert np.array_equal(result.policies.point.params[name], value)
        assert result.history == []
        assert math.isnan(result.best_f1)

    def test_epsilon_decays_per_episode(self, train_db, workload_spec):
        driver = DriverConfig(start_level=2, end_level=4, k=2, delta=10, reward_queries=10)
        result = _manager(driver, workload_spec, episodes=3).train([train_db])
        assert [r.epsilon for r in result.history] == pytest.approx([1.0, 0.99, 0.99 ** 2])
        assert result.best_f1 == max(r.mean_f1 for r in result.history)
        assert result.checkpoint.training["episodes"] == 3

    def test_checkpoints_are_bit_identical(self, tmp_path, train_db, workload_spec):
        driver = DriverConfig(start_level=2, end_level=4, k=2, delta=10, reward_queries=10)
        paths = []
        for run in range(2):
            databases = sample_training_databases(train_db, 2, 12, seed=5)
            result = _manager(driver, workload_spec, episodes=2, seed=5).train(databases)
            path = tmp_path / f"run{run}.json"
            save_checkpoint(result.checkpoint, str(path))
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_empty_database_rejected(self, train_db, workload_spec):
        manager = _manager(DriverConfig(start_level=2, end_level=4, reward_queries=10), workload_spec)
        with pytest.raises(ValueError):
            manager.train([train_db.subset([])])


class TestHelpers:

    def test_training_budget_bounds(self, train_db):
        assert training_budget(train_db, 1e-6) == 2 * train_db.M
        assert training_budget(train_db, 1.0) == train_db.N
        assert training_budget(train_db, 0.5) == int(np.floor(0.5 * train_db.N))

    def test_sample_training_databases(self, train_db):
        databases = sample_training_databases(train_db, 3, 8, seed=1)
        assert [db.M for db in databases] == [8, 8, 8]
        assert [db.ids for db in databases] == [db.ids for db in sample_training_databases(train_db, 3, 8, seed=1)]
        assert all(set(db.ids) <= set(train_db.ids) for db in databases)
        with pytest.raises(ValueError):
            sample_training_databases(train_db, 0, 8, seed=1)


class TestWarmStart:

    def test_resumed_training_starts_from_loaded_weights(self, tmp_path, train_db, workload_spec):
        driver = DriverConfig(start_level=2, end_level=4, k=2, delta=10, reward_queries=10)
        trained = _manager(driver, workload_spec, episodes=1, seed=4).train([train_db])
        path = str(tmp_path / "policy.json")
        save_checkpoint(trained.checkpoint, path)
        checkpoint = load_checkpoint(path)

        manager = TrainingManager(driver, DqnConfig(batch_size=8), workload_spec, seed=9, budget_ratio=0.2,
                                  episodes_per_database=0, policies=Policies(checkpoint.cube, checkpoint.point),
                                  resumed_episodes=checkpoint.training["episodes"])
        for name, value in trained.policies.cube.params.items():
            assert np.array_equal(manager.cube_agent.net.params[name], value)
            assert np.array_equal(manager.cube_agent.target.params[name], value)
        for name, value in trained.policies.point.params.items():
            assert np.array_equal(manager.point_agent.net.params[name], value)
        assert manager.cube_agent.net is not checkpoint.cube
        assert manager.epsilon == pytest.approx(0.99)

        result = manager.train([train_db])
        assert result.checkpoint.training["episodes"] == 1
        for name, value in trained.policies.point.params.items():
            assert np.array_equal(result.policies.point.params[name], value)

    def test_continued_episodes_leave_the_loaded_networks_untouched(self, train_db, workload_spec):
        driver = DriverConfig(start_level=2, end_level=4, k=2, delta=5, reward_queries=10)
        policies = initial_policies(2, make_rng(8, "warm"), 25)
        before = {name: value.copy() for name, value in policies.point.params.items()}
        manager = TrainingManager(driver, DqnConfig(batch_size=8), workload_spec, budget_ratio=0.2,
                                  episodes_per_database=1, policies=policies, resumed_episodes=3)
        record = manager.run_episode(train_db, 0, 0)
        assert record.epsilon == pytest.approx(0.99 ** 3)
        for name, value in before.items():
            assert np.array_equal(policies.point.params[name], value)

    def test_policies_must_match_k(self, train_db, workload_spec):
        driver = DriverConfig(start_level=2, end_level=4, k=3, reward_queries=10)
        with pytest.raises(ConfigError):
            TrainingManager(driver, DqnConfig(), workload_spec, policies=initial_policies(2, make_rng(1), 25))

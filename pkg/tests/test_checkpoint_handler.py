import json

import numpy as np
import pytest

from checkpoint_handler import Checkpoint, load_checkpoint, save_checkpoint
from errors import CheckpointError
from rl4qdts import initial_policies
from rl_agents import QNetwork


@pytest.fixture
def checkpoint():
    policies = initial_policies(3, np.random.default_rng(9))
    return Checkpoint(policies.cube, policies.point, driver={"k": 3, "start_level": 2},
                      training={"seed": 9, "episodes": 4})


@pytest.fixture
def saved(tmp_path, checkpoint):
    path = tmp_path / "policies" / "ckpt.json"
    save_checkpoint(checkpoint, str(path))
    return path


def _rewrite(path, edit):
    payload = json.loads(path.read_text())
    edit(payload)
    path.write_text(json.dumps(payload))


class TestSaveLoad:

    def test_roundtrip_keeps_weights(self, saved, checkpoint):
        loaded = load_checkpoint(str(saved))
        assert loaded.k == 3
        for name in QNetwork.PARAMS:
            assert np.array_equal(loaded.cube.params[name], checkpoint.cube.params[name])
            assert np.array_equal(loaded.point.params[name], checkpoint.point.params[name])
        assert loaded.driver == {"k": 3, "start_level": 2}
        assert loaded.training["episodes"] == 4

    def test_creates_parent_directory_without_leftovers(self, saved):
        assert saved.exists()
        assert [p.name for p in saved.parent.iterdir()] == ["ckpt.json"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(str(tmp_path / "absent.json"))


class TestValidation:

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(CheckpointError):
            load_checkpoint(str(path))

    def test_wrong_version(self, saved):
        _rewrite(saved, lambda p: p.update(version=99))
        with pytest.raises(CheckpointError):
            load_checkpoint(str(saved))

    def test_missing_network(self, saved):
        _rewrite(saved, lambda p: p["networks"].pop("point"))
        with pytest.raises(CheckpointError):
            load_checkpoint(str(saved))

    def test_weight_count_mismatch(self, saved):
        _rewrite(saved, lambda p: p["networks"]["cube"]["weights"]["b1"].pop())
        with pytest.raises(CheckpointError):
            load_checkpoint(str(saved))

    def test_cube_arity(self, tmp_path):
        path = tmp_path / "arity.json"
        save_checkpoint(Checkpoint(QNetwork(10, 9), QNetwork(4, 2)), str(path))
        with pytest.raises(CheckpointError):
            load_checkpoint(str(path))

    def test_point_arity(self, tmp_path, checkpoint):
        path = tmp_path / "point.json"
        save_checkpoint(Checkpoint(checkpoint.cube, QNetwork(5, 2)), str(path))
        with pytest.raises(CheckpointError):
            load_checkpoint(str(path))

    def test_k_mismatch(self, saved):
        _rewrite(saved, lambda p: p["driver"].update(k=5))
        with pytest.raises(CheckpointError):
            load_checkpoint(str(saved))

    def test_non_finite_weights(self, saved):
        def poison(payload):
            payload["networks"]["point"]["weights"]["b2"][0] = float("nan")
        _rewrite(saved, poison)
        with pytest.raises(CheckpointError):
            load_checkpoint(str(saved))

"""
Checkpoint handler for storing trained Agent-Cube / Agent-Point policies as JSON
"""

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from errors import CheckpointError
from rl_agents import CUBE_ACTIONS, CUBE_STATE_SIZE, QNetwork

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """A pair of policy networks plus the settings they were trained with"""
    cube: QNetwork
    point: QNetwork
    driver: Dict[str, Any] = field(default_factory=dict)
    dqn: Dict[str, Any] = field(default_factory=dict)
    training: Dict[str, Any] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.point.n_outputs


def _network_entry(net: QNetwork) -> Dict[str, Any]:
    return {
        "shapes": {name: list(value.shape) for name, value in net.params.items()},
        "weights": {name: value.reshape(-1).tolist() for name, value in net.params.items()},
    }


def _network_from_entry(entry: Dict[str, Any], name: str) -> QNetwork:
    try:
        shapes = entry["shapes"]
        weights = entry["weights"]
        hidden, n_inputs = shapes["w1"]
        n_outputs = shapes["w2"][0]
        net = QNetwork(int(n_inputs), int(n_outputs), int(hidden))
        params = {}
        for param in QNetwork.PARAMS:
            values = np.asarray(weights[param], dtype=float)
            if values.size != int(np.prod(shapes[param])):
                raise CheckpointError(f"{name}.{param}: {values.size} weights for shape {shapes[param]}")
            params[param] = values.reshape(shapes[param])
        net.set_params(params)
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"Malformed {name} network entry: {e}")
    if not all(np.all(np.isfinite(value)) for value in net.params.values()):
        raise CheckpointError(f"{name} network has non-finite weights")
    return net


def save_checkpoint(checkpoint: Checkpoint, path: str) -> None:
    """
    Write a checkpoint atomically

    Args:
        checkpoint: Networks and settings
        path: Target JSON file
    """
    payload = {
        "version": FORMAT_VERSION,
        "driver": checkpoint.driver,
        "dqn": checkpoint.dqn,
        "training": checkpoint.training,
        "networks": {
            "cube": _network_entry(checkpoint.cube),
            "point": _network_entry(checkpoint.point),
        },
    }
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        with os.fdopen(fd, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
        os.replace(tmp, path)
        logger.info(f"Saved checkpoint: {path}")
    except OSError as e:
        logger.error(f"Failed to save checkpoint {path}: {e}")
        raise


def load_checkpoint(path: str) -> Checkpoint:
    """
    Read and validate a checkpoint

    Raises:
        FileNotFoundError: The file does not exist
        CheckpointError: Wrong version, malformed JSON or unexpected layer shapes
    """
    try:
        with open(path, "r") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        logger.error(f"Invalid JSON in checkpoint {path}: {e}")
        raise CheckpointError(f"Invalid JSON in {path}: {e}")

    if payload.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {payload.get('version')!r}")
    networks = payload.get("networks", {})
    if "cube" not in networks or "point" not in networks:
        raise CheckpointError("Checkpoint needs both cube and point networks")
    cube = _network_from_entry(networks["cube"], "cube")
    point = _network_from_entry(networks["point"], "point")

    if (cube.n_inputs, cube.n_outputs) != (CUBE_STATE_SIZE, CUBE_ACTIONS):
        raise CheckpointError(f"Cube network is {cube.n_inputs}->{cube.n_outputs}, "
                              f"expected {CUBE_STATE_SIZE}->{CUBE_ACTIONS}")
    if point.n_inputs != 2 * point.n_outputs:
        raise CheckpointError(f"Point network is {point.n_inputs}->{point.n_outputs}, expected 2K->K")
    driver = payload.get("driver", {})
    if "k" in driver and driver["k"] != point.n_outputs:
        raise CheckpointError(f"Checkpoint K={driver['k']} but point network has {point.n_outputs} outputs")

    logger.info(f"Loaded checkpoint: {path} (K={point.n_outputs})")
    return Checkpoint(cube, point, driver, payload.get("dqn", {}), payload.get("training", {}))

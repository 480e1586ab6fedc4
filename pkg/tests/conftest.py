import json

import numpy as np
import pytest

from src.operators import SIGMA_X, SIGMA_Z, HamiltonianPair, IsingModel, build_ising


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def two_level():
    """B = -σx, C = σz: band [-1, 1], all-singular threshold 2√2."""
    return HamiltonianPair(-SIGMA_X, SIGMA_Z)


@pytest.fixture
def ising2():
    """Two qubits with J_01 = 1."""
    return build_ising(IsingModel(2, np.array([[0.0, 1.0], [1.0, 0.0]])))


@pytest.fixture
def ising3():
    return build_ising(IsingModel.random(3, np.random.default_rng(7)))


@pytest.fixture
def small_config(tmp_path):
    """Desk-scale run configuration written to disk; returns its path."""

    def write(**overrides):
        config = {
            "model": {"n_qubits": 2, "seed": 3},
            "horizon": 2.0,
            "n_steps": 10,
            "optimizer": {"max_iters": 30, "restarts": 0},
            "qaoa_bangs": 2,
            "ensemble": {"n_signals": 3, "n_sections": 4},
            "eps_levels": [0.0, 0.05, 0.1],
            "sweep": {"n_models": 3, "n_qubits": 2, "max_iters": 10, "restarts": 0},
        }
        config.update(overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config), encoding="utf-8")
        return path

    return write

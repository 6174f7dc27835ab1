# tests/conftest.py
import pathlib
import sys

import numpy as np
import pytest

# Ensure repo root on sys.path so `tgmm_lab` imports without installation
REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from tgmm_lab.tools.dataset import generate_mso  # noqa: E402
from tgmm_lab.tools.graphpart import build_partition, grid_graph  # noqa: E402
from tgmm_lab.utils.config import env_flag  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks (set RUN_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if env_flag("RUN_SLOW"):
        return
    skip = pytest.mark.skip(reason="set RUN_SLOW=1 to run slow acceptance tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid8():
    return grid_graph(8)


@pytest.fixture
def mso8(grid8):
    """Small noiseless dataset, fully observed."""
    return generate_mso(grid8, oscillators=2, num_timesteps=120, noise_sigma=0.0, seed=3)


@pytest.fixture
def part8(grid8):
    return build_partition(grid8, 2, 0.1, seed=0)

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from safespec.envs import ChainWorldConfig, chain_mdp  # noqa: E402


@pytest.fixture
def chain5():
    return chain_mdp(ChainWorldConfig(num_states=5, slip_prob=0.1))


@pytest.fixture
def chain5_det():
    return chain_mdp(ChainWorldConfig(num_states=5, slip_prob=0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chainscope.boxgraph import TransitionGraph  # noqa: E402


@pytest.fixture
def g1() -> TransitionGraph:
    """a -> b with displacement (1,0), b -> a with (0,1)."""
    return TransitionGraph.from_edges(2, [(0, 1, (1, 0)), (1, 0, (0, 1))], 1.0, 2, 0.1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criteria with runtime limits")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

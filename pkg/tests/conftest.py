import numpy as np
import pytest

from skillnet.network import load_library
from skillnet.world import _data_text, reset_world


@pytest.fixture
def seed_text():
    return _data_text("seed_skills.txt")


@pytest.fixture
def net(seed_text):
    return load_library(seed_text)


@pytest.fixture
def world():
    return reset_world(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from support import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda l: int(l.split()[1].rstrip("."))):
            terminalreporter.write_line(line)

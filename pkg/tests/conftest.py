import numpy as np
import pytest
from hypothesis import settings

from pfapf.grid import build_grid_spec

# wall-clock deadlines are meaningless on a loaded single-core runner
settings.register_profile("pfapf", deadline=None)
settings.load_profile("pfapf")


@pytest.fixture
def full_spec():
    return build_grid_spec(640, 480, 50, 50, 0.1, 40)


@pytest.fixture
def small_spec():
    # 3 x 3 x 4 voxels plus the boundary state
    return build_grid_spec(150, 150, 50, 50, 0.1, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

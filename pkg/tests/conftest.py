import os

import numpy as np
import pytest
from hypothesis import settings

from evoxel.morphology import build_morphology, default_robot, parse_robot_grid

settings.register_profile("default", deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance results, printed again in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def grid_model(rows):
    import json

    return build_morphology(parse_robot_grid(json.dumps({"grid": rows})))


@pytest.fixture(scope="session")
def ubot():
    return default_robot()


@pytest.fixture(scope="session")
def voxel():
    return grid_model([[3]])


@pytest.fixture
def silent_genome(ubot):
    # biases far above any reachable potential: nothing ever spikes
    g = np.zeros(ubot.genome_length)
    g[2::3] = 1e9
    return g


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")

import pytest

from citysearch.gridmap import GridMap, Landmark, load_map
from citysearch.langparse import load_targets

from citysearch import DATA_DIR as DATA


@pytest.fixture
def example_map():
    return load_map(DATA / "example_map.json")


@pytest.fixture
def targets():
    return load_targets(DATA / "targets.json")


@pytest.fixture
def small_map():
    return GridMap.from_landmarks("small", 10, 10, [
        Landmark.make("A", "building", ["alpha"], [(2, 2), (2, 3), (3, 2), (3, 3)]),
        Landmark.make("B", "building", ["bravo"], [(7, 6), (8, 6)]),
        Landmark.make("S", "street", ["sierra street"], [(x, 8) for x in range(10)]),
    ])


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])

import numpy as np
import pytest
from hypothesis import settings

# property tests are derandomized so every run explores the same inputs
settings.register_profile("repo", deadline=None, derandomize=True, max_examples=40)
settings.load_profile("repo")

ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_collection_modifyitems(items):
    # every hypothesis test belongs to the invariant suite
    for item in items:
        if getattr(getattr(item, "obj", None), "is_hypothesis_test", False):
            item.add_marker(pytest.mark.invariant)


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash[ACCEPTANCE_LINES]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

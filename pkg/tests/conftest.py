import numpy as np
import pytest

from ipnsw import synth_gaussian

ACCEPTANCE_RESULTS = []


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_skewed():
    return synth_gaussian(400, 8, ("scaled-top", 0.05, 3.0), seed=3)


@pytest.fixture(scope="session")
def small_queries():
    return synth_gaussian(30, 8, "iid", seed=4).items


@pytest.fixture
def acceptance_log():
    def record(name, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        ACCEPTANCE_RESULTS.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)

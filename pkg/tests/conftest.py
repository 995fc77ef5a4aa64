import numpy as np
import pytest

from ddib.experiment import ExperimentConfig, train_domain
from ddib.schedule import make_linear_schedule


@pytest.fixture(scope="session")
def sched():
    return make_linear_schedule()


@pytest.fixture(scope="session")
def default_cfg():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def trained(default_cfg):
    """Default-configuration domain models, trained once and then read from the cache."""
    cache = {}

    def get(kind):
        if kind not in cache:
            cache[kind] = train_domain(kind, default_cfg)
        return cache[kind]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(capsys):
    """Record one pass/fail line per acceptance criterion, shown live and in the summary."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

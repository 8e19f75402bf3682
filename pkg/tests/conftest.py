import numpy as np
import pytest

from pmwls.model import Dataset, logistic_model

_CRITERIA_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo runs")
    config.stash[_CRITERIA_KEY] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA_KEY, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        terminalreporter.write_line(lines[k])


@pytest.fixture
def record_criterion(request):
    """Record one pass/fail line for an acceptance criterion."""
    store = request.config.stash[_CRITERIA_KEY]

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = (f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] "
                f"{title}: {detail}")
        store[number] = line
        print(line)
        return passed

    return record


def random_logistic(rng, n=30, p=3, noise=0.2, shift=0.0):
    """Random logistic regression instance (data, model, true theta)."""
    x = rng.normal(size=(n, p))
    theta = rng.uniform(-1.5, 1.5, size=p)
    m = logistic_model(p)
    y = m.value(x, theta) + shift + noise * rng.normal(size=n)
    return Dataset(y, x), m, theta


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

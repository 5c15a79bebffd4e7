import numpy as np
import pytest


def ladder_ops(cutoff):
    """Truncated annihilation matrix on span{|0>,...,|cutoff>}."""
    a = np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), 1)
    return a


def quadratures(cutoff):
    a = ladder_ops(cutoff)
    x = (a + a.T) / np.sqrt(2)
    p = (a - a.T) / (np.sqrt(2) * 1j)
    return x, p


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_log(request):
    """Per-session registry: criterion number -> (passed, one-line summary)."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(ACCEPTANCE_KEY, None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(log):
        passed, line = log[num]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {num:2d}. {line}")

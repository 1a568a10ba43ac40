import numpy as np
import pytest

from oneway import LogUtility, ProblemInstance, UserProfile

_ACCEPTANCE_LINES = []


def log_instance(specs, Q):
    """Instance from ``(a, b, m, M)`` tuples."""
    return ProblemInstance(
        tuple(UserProfile(i, LogUtility(a, b), m, M) for i, (a, b, m, M) in enumerate(specs)), Q
    )


def identical(n, Q, a=20.0, b=1.0, m=0.0, M=4.0):
    return log_instance([(a, b, m, M)] * n, Q)


def random_instance(rng, n_max=20, n=None):
    n = n or int(rng.integers(1, n_max + 1))
    specs = []
    for _ in range(n):
        m = rng.uniform(0, 1)
        specs.append((rng.uniform(1, 30), rng.uniform(0.5, 2), m, m + rng.uniform(0.5, 4)))
    lo = sum(s[2] for s in specs)
    hi = sum(s[3] for s in specs)
    return log_instance(specs, lo + rng.uniform(0.05, 0.95) * (hi - lo))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def acceptance():
    def record(number, title, ok, detail=""):
        _ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else ""))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from privileged_gp import KernelSpec  # noqa: E402

# numba compiles on first call, which would trip per-example deadlines
settings.register_profile("default", deadline=None)
settings.load_profile("default")

_ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, passed: bool, detail: str = "") -> str:
    line = f"{'PASS' if passed else 'FAIL'} | {name} | {detail}"
    _ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    return line


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_instance(rng, n, d=2, with_soft=True):
    """Small random classification instance with an RBF kernel and soft labels."""
    X = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    y = np.where(X @ w + 0.3 * rng.normal(size=n) >= 0, 1.0, -1.0)
    if np.all(y == y[0]):
        y[0] = -y[0]
    kernel = KernelSpec.rbf(float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 3.0)))
    s = 1.5 * y + rng.normal(size=n) if with_soft else None
    return X, y, s, kernel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

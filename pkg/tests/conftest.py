import sys

import numpy as np
import pytest

from adaptive_dpfl.data import Dataset
from adaptive_dpfl.model import MLP, SOFTMAX, ModelSpec


def central_difference(fn, x, step=1e-6):
    """Central finite-difference gradient of scalar ``fn`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up[i] += step
        down[i] -= step
        grad[i] = (fn(up) - fn(down)) / (2 * step)
    return grad


def random_case(rng, kind=None):
    """A random (spec, params, features, label) draw of moderate scale."""
    kind = kind or (SOFTMAX if rng.random() < 0.5 else MLP)
    f = int(rng.integers(1, 7))
    k = int(rng.integers(2, 6))
    h = int(rng.integers(1, 6)) if kind == MLP else 0
    spec = ModelSpec(kind, f, k, h)
    params = rng.normal(scale=0.7, size=spec.dim)
    x = rng.normal(scale=1.5, size=f)
    return spec, params, x, int(rng.integers(0, k))


@pytest.fixture
def small_dataset():
    rng = np.random.default_rng(7)
    return Dataset(rng.normal(size=(30, 3)), rng.integers(0, 3, 30), 3)


@pytest.fixture(params=[SOFTMAX, MLP])
def any_spec(request):
    return ModelSpec(request.param, 3, 3, 4 if request.param == MLP else 0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])

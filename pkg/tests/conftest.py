import numpy as np
import pytest

from adimaxwell.maxwell import EMState
from adimaxwell.splines import make_open_knot_vector


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(shape, rng, masks=None, t=0.0):
    E = [rng.standard_normal(shape) for _ in range(3)]
    H = [rng.standard_normal(shape) for _ in range(3)]
    if masks is not None:
        for c, m in enumerate(masks):
            if m is not None:
                E[c][m] = 0.0
    return EMState(tuple(E), tuple(H), t)


def cube(n_elements, degree, continuity=None):
    kv = make_open_knot_vector(n_elements, degree, continuity)
    return (kv, kv, kv)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = np.abs(b).max()
    return float(np.abs(a - b).max() / (scale if scale > 0 else 1.0))


def time_best(fn, repeats=5, number=1):
    import time
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        best = min(best, (time.perf_counter() - t0) / number)
    return best


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record and print one ``PASS``/``FAIL`` line for an acceptance check."""
    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        print(line)
        _VERDICTS.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)

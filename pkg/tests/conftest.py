import numpy as np
import pytest


def dense_matrix(op, in_shape=None):
    """Explicit matrix of a linear map on row-major flattened arrays."""
    in_shape = tuple(in_shape or op.in_shape)
    n = int(np.prod(in_shape))
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(np.ravel(op.apply(e.reshape(in_shape))))
    return np.stack(cols, axis=1)


def adjoint_gap(op, x, y):
    lhs = float(np.vdot(op.apply(x), y))
    rhs = float(np.vdot(x, op.adjoint(y)))
    return abs(lhs - rhs) / (np.linalg.norm(x) * np.linalg.norm(y))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(k for k in results if isinstance(k, int)):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

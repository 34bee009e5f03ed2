import numpy as np
import pytest

from ltcalib.tensor import Tensor


def central_diff(fn, arrays, h=1e-5):
    """Central finite-difference gradients of a scalar fn w.r.t. a list of arrays."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = fn()
            flat[i] = orig - h
            down = fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric, rtol=1e-5):
    for a, n in zip(analytic, numeric):
        assert a is not None
        err = np.abs(a - n)
        scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
        assert np.all(err <= rtol * scale), f"max rel err {np.max(err / scale)}"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def leaf(values, rng=None):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)

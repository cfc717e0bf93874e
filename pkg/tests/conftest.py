import numpy as np
import pytest

from quadlift import tensor as T


def finite_diff_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        fp = f()
        x[i] = orig - h
        fm = f()
        x[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return g


def assert_grads_match(loss_fn, params, rtol=1e-4):
    """Backward gradients vs central differences for every parameter."""
    loss = loss_fn()
    T.zero_grads(list(params.values()))
    T.backward(loss)
    grads = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
             for k, p in params.items()}
    for name, p in params.items():
        fd = finite_diff_grad(lambda: float(loss_fn().data), p.data)
        denom = np.maximum(np.abs(fd) + np.abs(grads[name]), 1e-6)
        rel = np.abs(fd - grads[name]) / denom
        assert rel.max() < rtol, (
            f"gradient mismatch for {name}: max rel err {rel.max():.2e}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import numpy as np
import pytest

from commgame import GradTape
from commgame import tensor as T


@pytest.fixture(autouse=True)
def finite_checks():
    """Every test runs with NaN/Inf detection on."""
    T.set_finite_checks(True)
    yield
    T.set_finite_checks(False)


def finite_difference(build, tensors, eps=1e-5):
    """Central finite differences of a scalar-valued closure.

    ``build()`` must recompute the loss from the tensors' current data.
    Returns one gradient array per tensor, same shapes.
    """
    grads = []
    for t in tensors:
        grad = np.zeros_like(t.data)
        flat, gflat = t.data.ravel(), grad.ravel()
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            up = build().item()
            flat[i] = saved - eps
            down = build().item()
            flat[i] = saved
            gflat[i] = (up - down) / (2 * eps)
        grads.append(grad)
    return grads


def assert_gradients_match(build, tensors, tol=1e-5, eps=1e-5):
    """Tape gradients against the finite-difference oracle, relative error."""
    for t in tensors:
        t.grad = None
    with GradTape() as tape:
        loss = build()
    tape.backward(loss)
    numeric = finite_difference(build, tensors, eps=eps)
    for t, num in zip(tensors, numeric):
        assert t.grad is not None, "missing tape gradient"
        denom = np.maximum(1e-8, np.abs(num) + np.abs(t.grad))
        rel = np.abs(t.grad - num) / denom
        assert rel.max() < tol, f"gradient mismatch: rel err {rel.max():.2e}"

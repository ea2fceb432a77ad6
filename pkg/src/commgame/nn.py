"""Layers and optimizer for the game agents: linear, GRU cell, Adam.

Weights are Glorot-uniform, biases zero, all drawn from an explicit
:class:`~commgame.rng.Rng` stream so that initialization is reproducible
and independent of any other randomness in a run.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import Tensor, parameter


def glorot_uniform(fan_in: int, fan_out: int, rng: Rng) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform_range(-limit, limit, (fan_in, fan_out))


class Linear:
    """y = x @ weight + bias with weight [in x out]."""

    def __init__(self, in_dim: int, out_dim: int, rng: Rng):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = parameter(glorot_uniform(in_dim, out_dim, rng))
        self.bias = parameter(np.zeros(out_dim))

    def __call__(self, x) -> Tensor:
        return T.add(T.matmul(x, self.weight), self.bias)

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


class GruCell:
    """Gated recurrent unit with packed gates in (reset, update, candidate) order.

    The candidate pre-activation follows the convention where the reset
    gate scales the hidden-side term after its own linear map:

        r = sigmoid(x Wi_r + bi_r + h Wh_r + bh_r)
        z = sigmoid(x Wi_z + bi_z + h Wh_z + bh_z)
        n = tanh(x Wi_n + bi_n + r * (h Wh_n + bh_n))
        h' = (1 - z) * n + z * h

    Packing the three gates into single [in x 3h] / [h x 3h] matrices keeps
    each step at two matrix products.
    """

    def __init__(self, input_dim: int, hidden_dim: int, rng: Rng):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        # per-gate Glorot fans, drawn gate by gate (r, z, n), input side first
        wi = [glorot_uniform(input_dim, hidden_dim, rng) for _ in range(3)]
        wh = [glorot_uniform(hidden_dim, hidden_dim, rng) for _ in range(3)]
        self.w_ih = parameter(np.hstack(wi))
        self.w_hh = parameter(np.hstack(wh))
        self.b_ih = parameter(np.zeros(3 * hidden_dim))
        self.b_hh = parameter(np.zeros(3 * hidden_dim))

    def step(self, state, x) -> Tensor:
        """One update; differentiable through both state and input."""
        h = self.hidden_dim
        gi = T.add(T.matmul(x, self.w_ih), self.b_ih)
        gh = T.add(T.matmul(state, self.w_hh), self.b_hh)
        r = T.sigmoid(T.add(T.slice_cols(gi, 0, h), T.slice_cols(gh, 0, h)))
        z = T.sigmoid(T.add(T.slice_cols(gi, h, 2 * h), T.slice_cols(gh, h, 2 * h)))
        n = T.tanh(
            T.add(
                T.slice_cols(gi, 2 * h, 3 * h),
                T.mul(r, T.slice_cols(gh, 2 * h, 3 * h)),
            )
        )
        return T.add(T.mul(T.sub(1.0, z), n), T.mul(z, state))

    def parameters(self) -> dict[str, Tensor]:
        return {
            "w_ih": self.w_ih,
            "w_hh": self.w_hh,
            "b_ih": self.b_ih,
            "b_hh": self.b_hh,
        }


class Adam:
    """Adam with bias correction over a named parameter dict.

    ``step()`` consumes the gradients (they are reset to None) and advances
    the step counter by one. A parameter without a gradient is an error.
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                raise ValueError(f"parameter {name!r} has no gradient")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            p.grad = None

"""Minimal feedforward-network engine: forward pass, exact backprop, Adam.

Every learned component in the toolkit (Q-networks, dynamics models, the
context auto-encoder) is an :class:`MLPParams` record driven through these
functions. Parameters live in one flat float64 vector laid out as all
weight matrices (layer-major, each ``(fan_in, fan_out)`` row-major)
followed by all bias vectors.

The compiled kernel (``_cmlp``) is used when it was built; otherwise the
numpy kernel (``_pymlp``) is used. Set ``HOMEMORL_BACKEND=python`` to force
the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from homemorl.numcore import _pymlp

RELU = "relu"
SIGMOID = "sigmoid"

_kernel = _pymlp
BACKEND = "python"
if os.environ.get("HOMEMORL_BACKEND", "").lower() != "python":
    try:
        from homemorl.numcore import _cmlp

        _kernel = _cmlp
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass


class ShapeError(ValueError):
    """Input or parameter dimensions do not match the layer shape."""


class NumericError(ArithmeticError):
    """Non-finite values reached the engine."""


@dataclass(frozen=True)
class LayerShape:
    """Layer sizes ``(input, hidden..., output)`` and activation scheme.

    ``activation="relu"`` means ReLU hidden layers with a linear output;
    ``activation="sigmoid"`` applies a sigmoid after every layer.
    """

    sizes: tuple[int, ...]
    activation: str = RELU

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ShapeError(f"invalid layer sizes {sizes}")
        if self.activation not in (RELU, SIGMOID):
            raise ShapeError(f"unknown activation {self.activation!r}")

    @property
    def n_params(self) -> int:
        s = self.sizes
        return sum(s[i] * s[i + 1] + s[i + 1] for i in range(len(s) - 1))

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]


@dataclass
class MLPParams:
    shape: LayerShape
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 1 or self.theta.size != self.shape.n_params:
            raise ShapeError(
                f"theta has {self.theta.size} entries, shape needs {self.shape.n_params}"
            )

    def copy(self) -> MLPParams:
        return MLPParams(self.shape, self.theta.copy())

    def layers(self):
        """Views ``[(W, b), ...]`` into ``theta`` (writes go through)."""
        return _pymlp.layer_views(self.theta, self.shape.sizes)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, lr: float = 1e-3, **kw) -> AdamState:
        return cls(np.zeros(n), np.zeros(n), 0, lr, **kw)

    def copy(self) -> AdamState:
        return replace(self, m=self.m.copy(), v=self.v.copy())


def init_params(shape: LayerShape | Sequence[int], rng: np.random.Generator,
                activation: str | None = None) -> MLPParams:
    """Seeded initialization: He-uniform for ReLU nets, Xavier-uniform for sigmoid nets.

    Biases start at zero.
    """
    if not isinstance(shape, LayerShape):
        shape = LayerShape(tuple(shape), activation or RELU)
    params = MLPParams(shape, np.zeros(shape.n_params))
    for W, _ in params.layers():
        fan_in, fan_out = W.shape
        if shape.activation == RELU:
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
    return params


def _as_batch(params: MLPParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.ascontiguousarray(x[None, :] if single else x)
    if X.ndim != 2 or X.shape[1] != params.shape.n_in:
        raise ShapeError(f"input of shape {x.shape} does not match input dim {params.shape.n_in}")
    return X, single


def forward_cache(params: MLPParams, x) -> list[np.ndarray]:
    """Forward pass returning every layer's activations (input first)."""
    X, _ = _as_batch(params, x)
    return _kernel.forward_cache(params.theta, params.shape.sizes,
                                 params.shape.activation == SIGMOID, X)


def forward(params: MLPParams, x) -> np.ndarray:
    """Network output for one input vector or a ``(batch, n_in)`` matrix."""
    X, single = _as_batch(params, x)
    out = _kernel.forward_cache(params.theta, params.shape.sizes,
                                params.shape.activation == SIGMOID, X)[-1]
    return out[0] if single else out


def backward_cache(params: MLPParams, acts: list[np.ndarray], grad_out) -> np.ndarray:
    G = np.asarray(grad_out, dtype=np.float64)
    if G.ndim == 1:
        G = G[None, :]
    if G.shape != acts[-1].shape:
        raise ShapeError(f"grad_out shape {G.shape} != output shape {acts[-1].shape}")
    return _kernel.backward_cache(params.theta, params.shape.sizes,
                                  params.shape.activation == SIGMOID, acts, G)


def backward(params: MLPParams, x, grad_out) -> np.ndarray:
    """Gradient of ``sum(grad_out * forward(params, x))`` with respect to ``theta``.

    Batched inputs sum their per-row gradients.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(grad_out, dtype=np.float64)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(g))):
        raise NumericError("non-finite input or cotangent")
    return backward_cache(params, forward_cache(params, x), g)


def adam_step(params: MLPParams, adam: AdamState, grad) -> tuple[MLPParams, AdamState]:
    """One bias-corrected Adam update; returns fresh records, inputs untouched."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.theta.shape:
        raise ShapeError("gradient length does not match theta")
    t = adam.t + 1
    m = adam.beta1 * adam.m + (1.0 - adam.beta1) * grad
    v = adam.beta2 * adam.v + (1.0 - adam.beta2) * grad * grad
    m_hat = m / (1.0 - adam.beta1**t)
    v_hat = v / (1.0 - adam.beta2**t)
    theta = params.theta - adam.lr * m_hat / (np.sqrt(v_hat) + adam.eps)
    return MLPParams(params.shape, theta), replace(adam, m=m, v=v, t=t)


def mse_loss_grad(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error over all entries and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ShapeError("empty vectors")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


@dataclass
class Trainer:
    """Params plus their Adam state, stepped in place by one training loop."""

    params: MLPParams
    adam: AdamState = field(default=None)

    def __post_init__(self):
        if self.adam is None:
            self.adam = AdamState.zeros(self.params.shape.n_params)

    def fit_step(self, x, target, weights=None) -> float:
        """One Adam step on the MSE between ``forward(x)`` and ``target``."""
        acts = forward_cache(self.params, x)
        pred = acts[-1]
        target = np.asarray(target, dtype=np.float64).reshape(pred.shape)
        diff = pred - target
        if weights is not None:
            w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
            loss = float(np.mean(w * diff * diff))
            g = 2.0 * w * diff / diff.size
        else:
            loss = float(np.mean(diff * diff))
            g = 2.0 * diff / diff.size
        grad = backward_cache(self.params, acts, g)
        self.params, self.adam = adam_step(self.params, self.adam, grad)
        return loss


from homemorl.numcore.serialize import load_params, save_params  # noqa: E402

__all__ = [
    "BACKEND", "RELU", "SIGMOID", "AdamState", "LayerShape", "MLPParams",
    "NumericError", "ShapeError", "Trainer", "adam_step", "backward",
    "backward_cache", "forward", "forward_cache", "init_params", "load_params",
    "mse_loss_grad", "save_params",
]

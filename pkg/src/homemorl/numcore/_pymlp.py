"""Numpy reference kernels for the dense MLP engine.

Both kernels share the flat parameter layout used by :mod:`homemorl.numcore`:
every weight matrix (layer-major, each stored ``(fan_in, fan_out)``
row-major), followed by every bias vector.
"""

import numpy as np


def layer_views(theta, sizes):
    """Return ``[(W, b), ...]`` views into ``theta``."""
    views = []
    w_off = 0
    b_off = sum(sizes[i] * sizes[i + 1] for i in range(len(sizes) - 1))
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        W = theta[w_off : w_off + n_in * n_out].reshape(n_in, n_out)
        b = theta[b_off : b_off + n_out]
        views.append((W, b))
        w_off += n_in * n_out
        b_off += n_out
    return views


def forward_cache(theta, sizes, sigmoid_all, X):
    acts = [X]
    h = X
    views = layer_views(theta, sizes)
    last = len(views) - 1
    for i, (W, b) in enumerate(views):
        h = h @ W + b
        if sigmoid_all:
            h = 1.0 / (1.0 + np.exp(-h))
        elif i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def backward_cache(theta, sizes, sigmoid_all, acts, G):
    grad = np.zeros_like(theta)
    views = layer_views(theta, sizes)
    gviews = layer_views(grad, sizes)
    last = len(views) - 1
    delta = G
    for i in range(last, -1, -1):
        out = acts[i + 1]
        if sigmoid_all:
            delta = delta * out * (1.0 - out)
        elif i < last:
            delta = delta * (out > 0.0)
        gW, gb = gviews[i]
        gW[...] = acts[i].T @ delta
        gb[...] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ views[i][0].T
    return grad

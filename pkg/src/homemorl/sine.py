"""Reptile on sine regression, a small harness for checking the outer update.

Each task is ``y = A sin(x + p)`` with ``A ~ U[0.1, 5]``, ``p ~ U[0, pi]``
and ``x ~ U[-5, 5]``. The learner is a 1-40-40-1 ReLU network adapted
with Adam (``beta1 = 0``, fresh state per task) on ``k`` points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from homemorl import numcore as nc
from homemorl.meta import reptile_step

SINE_SIZES = (1, 40, 40, 1)


@dataclass
class SineConfig:
    outer_iters: int = 2000
    inner_steps: int = 32
    inner_lr: float = 0.02
    outer_lr: float = 1.0       # annealed linearly to zero
    k: int = 10
    eval_steps: int = 10
    n_test: int = 50


def sample_task(rng: np.random.Generator) -> tuple[float, float]:
    return float(rng.uniform(0.1, 5.0)), float(rng.uniform(0.0, np.pi))


def sample_points(rng: np.random.Generator, task, n: int) -> tuple[np.ndarray, np.ndarray]:
    amp, phase = task
    x = rng.uniform(-5.0, 5.0, size=(n, 1))
    return x, amp * np.sin(x + phase)


def adapt(params: nc.MLPParams, x, y, steps: int, lr: float) -> nc.MLPParams:
    adam = nc.AdamState.zeros(params.shape.n_params, lr=lr, beta1=0.0)
    trainer = nc.Trainer(params.copy(), adam)
    for _ in range(steps):
        trainer.fit_step(x, y)
    return trainer.params


def mse(params: nc.MLPParams, x, y) -> float:
    return float(np.mean((nc.forward(params, x) - y) ** 2))


def meta_train_sine(cfg: SineConfig, rng: np.random.Generator) -> nc.MLPParams:
    phi = nc.init_params(nc.LayerShape(SINE_SIZES, nc.RELU), rng)
    for it in range(cfg.outer_iters):
        task = sample_task(rng)
        x, y = sample_points(rng, task, cfg.k)
        adapted = adapt(phi, x, y, cfg.inner_steps, cfg.inner_lr)
        eps = cfg.outer_lr * (1.0 - it / cfg.outer_iters)
        phi = reptile_step(phi, adapted, eps)
    return phi


def compare(seed: int, cfg: SineConfig = SineConfig()) -> tuple[float, float]:
    """Held-out MSE after ``eval_steps`` Adam steps from (meta init, random init).

    Both starts adapt on the same ``k`` points of the same unseen task.
    """
    rng = np.random.default_rng(seed)
    phi = meta_train_sine(cfg, rng)
    rand = nc.init_params(nc.LayerShape(SINE_SIZES, nc.RELU), rng)
    task = sample_task(rng)
    x, y = sample_points(rng, task, cfg.k)
    xt, yt = sample_points(rng, task, cfg.n_test)
    meta_mse = mse(adapt(phi, x, y, cfg.eval_steps, cfg.inner_lr), xt, yt)
    rand_mse = mse(adapt(rand, x, y, cfg.eval_steps, cfg.inner_lr), xt, yt)
    return meta_mse, rand_mse

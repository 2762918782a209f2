"""Auto-encoder changepoint detection over daily renewable-generation windows.

Walks the year one day at a time. A day opens a new context when its
reconstruction loss exceeds the rolling threshold; the loss history is then
cleared and the auto-encoder is retrained (warm start) on the windows of
the new context. The first day always opens a context because the
threshold starts at minus infinity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from homemorl import numcore as nc
from homemorl.env import Dataset

AE_SIZES = (24, 64, 32, 16, 32, 64, 24)


@dataclass
class DetectorConfig:
    sizes: tuple[int, ...] = AE_SIZES
    epochs: int = 500
    lr: float = 1e-3
    rolling: int = 7
    refractory: int = 7
    threshold_scale: float = 3.0


@dataclass
class DetectionResult:
    days: np.ndarray
    contexts: list[int]
    losses: np.ndarray
    thresholds: np.ndarray
    ae: nc.MLPParams = field(repr=False, default=None)

    def segments(self, last_day: int | None = None) -> list[tuple[int, int, int]]:
        """``(context_id, start_day, end_day)`` rows partitioning the observed days."""
        last = int(self.days[-1]) if last_day is None else last_day
        return context_segments(self.contexts, last)


def context_segments(starts, last_day: int) -> list[tuple[int, int, int]]:
    starts = sorted(int(s) for s in starts)
    ends = [s - 1 for s in starts[1:]] + [last_day]
    return [(i + 1, s, e) for i, (s, e) in enumerate(zip(starts, ends))]


def make_windows(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Daily 24-hour renewable profiles, min-max scaled with whole-year constants."""
    X = data.renewable.astype(float)
    lo, hi = float(X.min()), float(X.max())
    X = (X - lo) / (hi - lo) if hi > lo else np.zeros_like(X)
    return data.days.copy(), X


def new_autoencoder(rng: np.random.Generator, sizes=AE_SIZES) -> nc.MLPParams:
    return nc.init_params(nc.LayerShape(sizes, nc.SIGMOID), rng)


def recon_loss(ae: nc.MLPParams, win) -> float:
    win = np.asarray(win, dtype=float)
    out = nc.forward(ae, win)
    return float(np.mean((out - win) ** 2))


def retrain(ae: nc.MLPParams, windows, epochs: int = 500, lr: float = 1e-3) -> nc.MLPParams:
    """Full-batch Adam on the given windows, continuing from ``ae``."""
    X = np.atleast_2d(np.asarray(windows, dtype=float))
    if len(X) == 0:
        raise ValueError("no windows to train on")
    trainer = nc.Trainer(ae.copy(), nc.AdamState.zeros(ae.shape.n_params, lr=lr))
    for _ in range(epochs):
        trainer.fit_step(X, X)
    return trainer.params


def detect(windows, cfg: DetectorConfig = DetectorConfig(), seed: int = 0,
           days=None, ae: nc.MLPParams | None = None) -> DetectionResult:
    """Return the days that open a new context, with the loss/threshold trace.

    A trigger needs ``loss > threshold_scale * delta`` where ``delta`` is the
    mean of the last ``rolling`` recorded losses of the current context.
    No trigger is possible within ``refractory`` days of the last one.
    """
    X = np.atleast_2d(np.asarray(windows, dtype=float))
    if len(X) < 2:
        raise ValueError("need at least 2 windows")
    days = np.arange(1, len(X) + 1) if days is None else np.asarray(days)
    rng = np.random.default_rng(seed)
    ae = new_autoencoder(rng, cfg.sizes) if ae is None else ae
    delta = -math.inf
    loss_list: list[float] = []
    contexts: list[int] = []
    start = 0
    last_trigger = -(10**9)
    losses = np.zeros(len(X))
    thresholds = np.zeros(len(X))
    for i, x in enumerate(X):
        loss = recon_loss(ae, x)
        bound = delta if delta == -math.inf else cfg.threshold_scale * delta
        losses[i] = loss
        thresholds[i] = bound
        if loss > bound and i - last_trigger >= cfg.refractory:
            contexts.append(int(days[i]))
            loss_list = []
            start = i
            last_trigger = i
            ae = retrain(ae, X[start:i + 1], cfg.epochs, cfg.lr)
        loss_list.append(recon_loss(ae, x))
        recent = loss_list[-cfg.rolling:]
        delta = float(np.mean(recent)) if recent else math.inf
    return DetectionResult(days, contexts, losses, thresholds, ae)


def write_contexts_csv(path, segments) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["context_id", "start_day", "end_day"])
        wr.writerows(segments)


def read_contexts_csv(path) -> list[tuple[int, int, int]]:
    with open(path, newline="") as fh:
        return [(int(r["context_id"]), int(r["start_day"]), int(r["end_day"])) for r in csv.DictReader(fh)]


def write_losses_csv(path, result: DetectionResult) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["day", "loss", "threshold"])
        for d, l, t in zip(result.days, result.losses, result.thresholds):
            wr.writerow([int(d), repr(float(l)), repr(float(t))])

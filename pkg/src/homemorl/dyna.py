"""Model-based extension (GPI-PD): dynamics ensemble, Dyna imagination, prioritized replay.

Models work in the agent's feature space. A member maps
``[features, one-hot action]`` to ``[delta features, reward vector, done logit]``.
Imagined transitions branch from replayed real states, are flagged
synthetic and enter a separate prioritized buffer; a quality gate on
held-out real transitions switches injection off when the model is poor.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from homemorl import numcore as nc
from homemorl.agent import PrioritizedReplay, ReplayBuffer, gpi_actions, per_priority

PRIORITY_FLOOR = 1e-3


@dataclass
class PrioritizedEntry:
    transition: tuple
    priority: float
    synthetic: bool = False
    source: int = -1

    def __post_init__(self):
        if not (np.isfinite(self.priority) and self.priority > 0):
            raise ValueError("priority must be finite and positive")
        if self.synthetic and self.source < 0:
            raise ValueError("synthetic entries need a source model id")


def priority_update(entry: PrioritizedEntry, td_error: float, alpha: float = 0.6) -> PrioritizedEntry:
    """New entry with priority ``(|td| + 1e-3) ** alpha``."""
    if not np.isfinite(td_error):
        raise nc.NumericError("non-finite TD error")
    p = float(per_priority(td_error, alpha, PRIORITY_FLOOR))
    return PrioritizedEntry(entry.transition, p, entry.synthetic, entry.source)


def sampling_distribution(priorities) -> np.ndarray:
    p = np.asarray(priorities, dtype=float)
    return p / p.sum()


class DynamicsNet:
    """One learned member: MLP plus its optimizer."""

    def __init__(self, n_features: int, n_actions: int, d: int, hidden: Sequence[int],
                 rng: np.random.Generator, lr: float = 1e-3):
        self.n_features, self.n_actions, self.d = n_features, n_actions, d
        sizes = (n_features + n_actions, *hidden, n_features + d + 1)
        self.trainer = nc.Trainer(nc.init_params(nc.LayerShape(sizes), rng),
                                  nc.AdamState.zeros(nc.LayerShape(sizes).n_params, lr=lr))
        self.trainable = True

    @property
    def params(self) -> nc.MLPParams:
        return self.trainer.params

    def _inputs(self, F, A):
        return np.concatenate([F, np.eye(self.n_actions)[np.asarray(A, dtype=int)]], axis=1)

    def raw(self, F, A) -> np.ndarray:
        return nc.forward(self.params, self._inputs(F, A))

    def predict(self, F, A):
        out = self.raw(F, A)
        k = self.n_features
        done_p = 1.0 / (1.0 + np.exp(-out[:, -1]))
        return F + out[:, :k], out[:, k:k + self.d], done_p > 0.5, done_p

    def train_step(self, F, A, R, F2, done) -> float:
        """Adam step: MSE on (delta features, rewards) plus logistic loss on done."""
        k, d = self.n_features, self.d
        X = self._inputs(F, A)
        acts = nc.forward_cache(self.params, X)
        out = acts[-1]
        B = len(F)
        target = np.concatenate([F2 - F, R], axis=1)
        diff = out[:, :k + d] - target
        mse = float(np.mean(diff * diff))
        z = out[:, -1]
        p = 1.0 / (1.0 + np.exp(-z))
        y = done.astype(float)
        bce = float(np.mean(np.logaddexp(0.0, z) - y * z))
        G = np.zeros_like(out)
        G[:, :k + d] = 2.0 * diff / diff.size
        G[:, -1] = (p - y) / B
        grad = nc.backward_cache(self.params, acts, G)
        self.trainer.params, self.trainer.adam = nc.adam_step(self.params, self.trainer.adam, grad)
        return mse + bce


class EnvModel:
    """Wraps an environment exposing ``model_step`` as an exact, untrainable member."""

    trainable = False

    def __init__(self, env):
        self.env = env

    def predict(self, F, A):
        F2, R, done = self.env.model_step(F, A)
        return F2, R, done, done.astype(float)

    def train_step(self, *batch) -> float:
        return 0.0


class Ensemble:
    def __init__(self, members: Sequence):
        if len(members) < 1:
            raise ValueError("ensemble needs at least one member")
        self.members = list(members)

    def __len__(self):
        return len(self.members)

    def predict_all(self, F, A):
        preds = [m.predict(F, A) for m in self.members]
        F2 = np.stack([p[0] for p in preds])
        R = np.stack([p[1] for p in preds])
        done_p = np.stack([p[3] for p in preds])
        return F2, R, done_p

    def disagreement(self, F, A) -> np.ndarray:
        """Mean (over outputs) variance across members, per row; zero for a single member."""
        F2, R, _ = self.predict_all(F, A)
        if len(self.members) < 2:
            return np.zeros(len(F))
        stacked = np.concatenate([F2, R], axis=2)
        return stacked.var(axis=0).mean(axis=1)


def model_train_step(ensemble: Ensemble, batch, rng: np.random.Generator) -> np.ndarray:
    """One step per member, each on its own bootstrap resample of the real batch."""
    F, A, R, F2, done = batch
    if len(F) == 0:
        raise ValueError("empty batch")
    losses = np.zeros(len(ensemble))
    for i, m in enumerate(ensemble.members):
        if not m.trainable:
            continue
        idx = rng.integers(0, len(F), size=len(F))
        losses[i] = m.train_step(F[idx], A[idx], R[idx], F2[idx], done[idx])
    return losses


def imagine(ensemble: Ensemble, qnet, M, replay: ReplayBuffer, rng: np.random.Generator,
            n_rollouts: int, horizon: int, exogenous: Sequence[int] = ()) -> list[PrioritizedEntry]:
    """Short model rollouts branching from replayed real states.

    Each step acts greedily by GPI at a weight drawn from ``M`` and takes
    the prediction of a uniformly chosen member. Rollouts stop at a
    predicted terminal. With ``exogenous`` feature indices, those features
    are copied from the branch transition's real next state instead of
    being predicted.
    """
    if horizon <= 0 or n_rollouts <= 0:
        return []
    if len(replay) == 0:
        raise ValueError("imagination needs at least one real transition")
    Mw = np.asarray(M, dtype=float)
    idx = replay.sample_idx(rng, n_rollouts)
    F = replay.F[idx].copy()
    real_next = replay.F2[idx]
    exo = list(exogenous)
    entries: list[PrioritizedEntry] = []
    alive = np.ones(n_rollouts, dtype=bool)
    for _ in range(horizon):
        live = np.flatnonzero(alive)
        if live.size == 0:
            break
        W = Mw[rng.integers(0, len(Mw), size=live.size)]
        A = gpi_actions(qnet, F[live], W, Mw)
        src = rng.integers(0, len(ensemble), size=live.size)
        P2, PR, done_p = ensemble.predict_all(F[live], A)
        if len(ensemble) > 1:
            dis = np.concatenate([P2, PR], axis=2).var(axis=0).mean(axis=1)
        else:
            dis = np.zeros(live.size)
        pick = np.arange(live.size)
        f2 = P2[src, pick].copy()
        r = PR[src, pick]
        done = done_p[src, pick] > 0.5
        if exo:
            f2[:, exo] = real_next[live][:, exo]
        for j, row in enumerate(live):
            entries.append(PrioritizedEntry(
                (F[row].copy(), int(A[j]), r[j].copy(), f2[j].copy(), bool(done[j])),
                1.0 + float(dis[j]), synthetic=True, source=int(src[j]),
            ))
        F[live] = f2
        alive[live[done]] = False
    return entries


@dataclass
class QualityReport:
    feature_mse: np.ndarray
    reward_mse: np.ndarray
    done_accuracy: float
    disagreement: float
    member_mse: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def state_mse(self) -> float:
        return float(np.mean(self.feature_mse))


def model_quality(ensemble: Ensemble, holdout) -> QualityReport:
    """Held-out accuracy of the ensemble mean prediction."""
    F, A, R, F2, done = holdout
    if len(F) == 0:
        raise ValueError("empty holdout")
    if R.ndim != 2 or R.shape[1] == 0:
        raise ValueError("holdout rewards must have at least one component")
    P2, PR, done_p = ensemble.predict_all(F, A)
    member_mse = np.mean((P2 - F2[None]) ** 2, axis=(1, 2))
    mean_f2 = P2.mean(axis=0)
    mean_r = PR.mean(axis=0)
    acc = float(np.mean((done_p.mean(axis=0) > 0.5) == done))
    return QualityReport(
        feature_mse=np.mean((mean_f2 - F2) ** 2, axis=0),
        reward_mse=np.mean((mean_r - R) ** 2, axis=0),
        done_accuracy=acc,
        disagreement=float(np.mean(ensemble.disagreement(F, A))),
        member_mse=member_mse,
    )


def write_quality_csv(path, rows: Sequence[tuple]) -> None:
    """Rows of ``(step, member, feature, mse, disagreement)``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "member", "feature", "mse", "disagreement"])
        wr.writerows(rows)


class DynaComponent:
    """Owns the ensemble, the synthetic buffer and the quality gate for one agent."""

    def __init__(self, env, cfg, rng: np.random.Generator, ensemble: Ensemble | None = None):
        self.env = env
        self.cfg = cfg
        self.rng = rng
        k, d = env.n_features, env.reward_dim
        if ensemble is None:
            ensemble = Ensemble([DynamicsNet(k, env.n_actions, d, cfg.model_hidden, rng, cfg.model_lr)
                                 for _ in range(cfg.ensemble_size)])
        self.ensemble = ensemble
        self.model_data = ReplayBuffer(cfg.buffer_size, k, d)
        self.holdout = ReplayBuffer(max(1, int(cfg.buffer_size * cfg.holdout_fraction)), k, d)
        self.synthetic = PrioritizedReplay(cfg.synthetic_capacity, k, d, cfg.per_alpha)
        self.gate_open = not any(m.trainable for m in ensemble.members)
        self.quality_log: list[tuple] = []
        self.n_seen = 0
        self.exogenous = tuple(getattr(env, "exogenous_features", ())) if cfg.exogenous_replay else ()

    def observe(self, f, a, r, f2, done) -> None:
        self.n_seen += 1
        if self.rng.random() < self.cfg.holdout_fraction:
            self.holdout.add(f, a, r, f2, done)
        else:
            self.model_data.add(f, a, r, f2, done)

    def refresh_gate(self, step: int) -> None:
        if not any(m.trainable for m in self.ensemble.members):
            self.gate_open = True
            return
        if len(self.holdout) == 0:
            self.gate_open = False
            return
        rep = model_quality(self.ensemble, self.holdout.get(np.arange(len(self.holdout))))
        self.gate_open = rep.state_mse <= self.cfg.gate_mse
        for j, mse in enumerate(rep.feature_mse):
            self.quality_log.append((step, "mean", f"f{j}", float(mse), rep.disagreement))
        for k, mse in enumerate(rep.member_mse):
            self.quality_log.append((step, str(k), "state", float(mse), rep.disagreement))

    def step(self, agent, w) -> None:
        cfg = self.cfg
        if len(self.model_data) and any(m.trainable for m in self.ensemble.members):
            idx = self.model_data.sample_idx(self.rng, cfg.model_batch)
            model_train_step(self.ensemble, self.model_data.get(idx), self.rng)
        if self.n_seen % cfg.gate_every == 0:
            self.refresh_gate(agent.steps)
        if (self.n_seen >= cfg.model_warmup and self.gate_open
                and agent.steps % cfg.imagine_every == 0):
            for e in imagine(self.ensemble, agent.qnet, agent.M, agent.replay, self.rng,
                             cfg.n_rollouts, cfg.rollout_horizon, self.exogenous):
                self.synthetic.add(*e.transition, priority=e.priority, synthetic=True, source=e.source)

    def synthetic_count(self, n: int) -> int:
        if not self.gate_open or len(self.synthetic) == 0:
            return 0
        return int(np.floor(self.cfg.synthetic_cap * n))

    def sample_batch(self, replay: PrioritizedReplay, n: int, beta: float):
        n_syn = self.synthetic_count(n)
        n_real = n - n_syn
        parts = []
        handles = []
        for buf, m in ((replay, n_real), (self.synthetic, n_syn)):
            if m == 0:
                continue
            idx = buf.sample_idx(self.rng, m)
            parts.append((buf.get(idx), buf.importance_weights(idx, beta)))
            handles.append((buf, idx))
        batch = tuple(np.concatenate([p[0][j] for p in parts]) for j in range(5))
        iw = np.concatenate([p[1] for p in parts])
        self.last_synthetic_fraction = n_syn / n
        return batch, iw, handles

    def update_priorities(self, replay, handles, td) -> None:
        lo = 0
        for buf, idx in handles:
            buf.update_priorities(idx, td[lo:lo + len(idx)])
            lo += len(idx)

"""Weight-conditioned multi-objective Q-learning with GPI action selection.

One network ``Q(s, w)`` outputs a ``(n_actions, d)`` block of vector
Q-values for state features ``s`` and preference ``w``. Acting uses
generalized policy improvement over the weight support ``M``: the action
maximizing ``max_{w' in M} Q(s, a, w') . w``. Training weights are scheduled
by linear support over the current front's corner weights.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from homemorl import numcore as nc
from homemorl.mo import Solution, corner_weights, pareto_filter

log = logging.getLogger(__name__)

EXTREMA = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))


@dataclass
class AgentConfig:
    hidden: tuple[int, ...] = (256, 256, 256, 256)
    lr: float = 3e-4
    batch_size: int = 256
    buffer_size: int = 200_000
    target_update: int = 200
    gamma: float | None = None
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.5
    steps_per_weight: int = 96
    weight_mix: float = 0.5
    front_tasks: int = 8
    # model-based (GPI-PD) settings
    variant: str = "LS"
    ensemble_size: int = 5
    model_hidden: tuple[int, ...] = (64, 64)
    model_lr: float = 1e-3
    model_batch: int = 64
    rollout_horizon: int = 3
    n_rollouts: int = 8
    imagine_every: int = 1
    synthetic_cap: float = 0.5
    synthetic_capacity: int = 20_000
    model_warmup: int = 64
    gate_mse: float = 0.01
    gate_every: int = 50
    holdout_fraction: float = 0.1
    per_alpha: float = 0.6
    per_beta0: float = 0.4
    exogenous_replay: bool = False

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.model_hidden = tuple(int(h) for h in self.model_hidden)
        if self.variant not in ("LS", "PD"):
            raise ValueError(f"variant must be LS or PD, got {self.variant!r}")


# --- network helpers -------------------------------------------------------

def make_qnet(n_features: int, d: int, n_actions: int, hidden: Sequence[int],
              rng: np.random.Generator) -> nc.MLPParams:
    sizes = (n_features + d, *hidden, n_actions * d)
    return nc.init_params(nc.LayerShape(sizes), rng)


def _n_actions(qnet: nc.MLPParams, d: int) -> int:
    return qnet.shape.n_out // d


def q_values_batch(qnet: nc.MLPParams, F: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``(B, n_actions, d)`` Q-blocks for feature rows ``F`` conditioned on rows of ``W``."""
    F = np.atleast_2d(F)
    W = np.atleast_2d(W)
    d = W.shape[1]
    out = nc.forward(qnet, np.concatenate([F, W], axis=1))
    return out.reshape(len(F), _n_actions(qnet, d), d)


def q_values(qnet: nc.MLPParams, features, w) -> np.ndarray:
    """Q-matrix ``(n_actions, d)`` for one state."""
    return q_values_batch(qnet, np.asarray(features, float)[None, :], np.asarray(w, float)[None, :])[0]


_GPI_CHUNK = 200_000


def gpi_actions(qnet: nc.MLPParams, F: np.ndarray, W: np.ndarray, M: Sequence) -> np.ndarray:
    """Row-wise GPI action; ties go to the lowest action index."""
    F = np.atleast_2d(F)
    W = np.atleast_2d(W)
    Mw = np.asarray(M, dtype=float)
    if len(Mw) == 0:
        raise ValueError("weight support M is empty")
    B, m = len(F), len(Mw)
    step = max(1, _GPI_CHUNK // m)
    out = np.empty(B, dtype=int)
    for lo in range(0, B, step):
        Fb, Wb = F[lo:lo + step], W[lo:lo + step]
        b = len(Fb)
        X = np.concatenate([np.repeat(Fb, m, axis=0), np.tile(Mw, (b, 1))], axis=1)
        Q = nc.forward(qnet, X).reshape(b, m, -1, Mw.shape[1])
        U = np.einsum("bmad,bd->bma", Q, Wb)
        out[lo:lo + step] = np.argmax(U.max(axis=1), axis=1)
    return out


def gpi_action(qnet: nc.MLPParams, features, w, M: Sequence) -> int:
    return int(gpi_actions(qnet, np.asarray(features, float)[None, :], np.asarray(w, float)[None, :], M)[0])


def params_hash(params: nc.MLPParams) -> str:
    return hashlib.sha256(params.theta.tobytes()).hexdigest()[:16]


# --- replay ----------------------------------------------------------------

class ReplayBuffer:
    """Fixed-capacity FIFO ring of feature-space transitions."""

    def __init__(self, capacity: int, n_features: int, d: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.F = np.zeros((capacity, n_features))
        self.F2 = np.zeros((capacity, n_features))
        self.A = np.zeros(capacity, dtype=int)
        self.R = np.zeros((capacity, d))
        self.done = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.cursor = 0
        self.n_added = 0

    def __len__(self) -> int:
        return self.size

    def add(self, f, a, r, f2, done) -> int:
        i = self.cursor
        self.F[i], self.A[i], self.R[i], self.F2[i], self.done[i] = f, a, r, f2, done
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.n_added += 1
        return i

    def add_many(self, F, A, R, F2, done) -> np.ndarray:
        return np.array([self.add(*row) for row in zip(F, A, R, F2, done)], dtype=int)

    def get(self, idx):
        return self.F[idx], self.A[idx], self.R[idx], self.F2[idx], self.done[idx]

    def sample_idx(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=n)

    def oldest_order(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.cursor) % self.capacity


class PrioritizedReplay(ReplayBuffer):
    """Replay with proportional priorities; new entries get the current max priority."""

    def __init__(self, capacity: int, n_features: int, d: int, alpha: float = 0.6):
        super().__init__(capacity, n_features, d)
        self.alpha = alpha
        self.priority = np.zeros(capacity)
        self.synthetic = np.zeros(capacity, dtype=bool)
        self.source = np.full(capacity, -1, dtype=int)
        self.max_priority = 1.0

    def add(self, f, a, r, f2, done, priority=None, synthetic=False, source=-1) -> int:
        i = super().add(f, a, r, f2, done)
        p = self.max_priority if priority is None else float(priority)
        if not (np.isfinite(p) and p > 0):
            raise ValueError(f"priority must be finite and positive, got {p}")
        self.priority[i] = p
        self.synthetic[i] = synthetic
        self.source[i] = source
        return i

    def probabilities(self) -> np.ndarray:
        p = self.priority[: self.size]
        return p / p.sum()

    def sample_idx(self, rng, n):
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        cdf = np.cumsum(self.priority[: self.size])
        idx = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
        return np.minimum(idx, self.size - 1)

    def importance_weights(self, idx: np.ndarray, beta: float) -> np.ndarray:
        probs = self.priority[idx] / self.priority[: self.size].sum()
        w = (self.size * probs) ** (-beta)
        return w / w.max()

    def update_priorities(self, idx: np.ndarray, td_errors: np.ndarray) -> None:
        p = per_priority(td_errors, self.alpha)
        self.priority[idx] = p
        self.max_priority = max(self.max_priority, float(p.max()))


def per_priority(td_error, alpha: float = 0.6, floor: float = 1e-3):
    td = np.abs(np.asarray(td_error, dtype=float))
    if not np.all(np.isfinite(td)):
        raise nc.NumericError("non-finite TD error")
    return (td + floor) ** alpha


# --- weight scheduling -----------------------------------------------------

def _same_weight(a, b) -> bool:
    return abs(float(a[0]) - float(b[0])) <= 1e-9


def select_next_weight(front: Sequence[Solution], visited: Sequence, rng: np.random.Generator | None = None,
                       predicted=None, noise_floor: float = 0.0) -> np.ndarray:
    """Next training weight by linear support.

    Candidates are the corner weights of the current front. An unvisited
    corner is always preferred; among candidates the largest estimated
    improvement wins (``predicted(w)`` minus the best achieved utility at
    ``w``; without a predictor the estimate is optimistic, +inf for
    unvisited corners). Ties go to the lowest ``w[0]``. When every corner
    is visited and none improves by more than ``noise_floor``, a visited
    corner is drawn uniformly (refinement).
    """
    values = [np.asarray(s.value, float) for s in front]
    corners = corner_weights(front) if values else [EXTREMA[1], EXTREMA[0]]

    def best(w):
        return max((float(v @ w) for v in values), default=-np.inf)

    def gain(w):
        b = best(w)
        if predicted is None:
            return np.inf if b == -np.inf else 0.0
        p = float(predicted(w))
        return np.inf if b == -np.inf else p - b

    unvisited = [w for w in corners if not any(_same_weight(w, v) for v in visited)]
    pool = unvisited
    if not pool:
        pool = [w for w in corners if gain(w) > noise_floor]
    if not pool:
        rng = rng or np.random.default_rng()
        return corners[int(rng.integers(len(corners)))].copy()
    gains = [gain(w) for w in pool]
    top = max(gains)
    return min((w for w, g in zip(pool, gains) if g == top), key=lambda w: w[0]).copy()


# --- evaluation ------------------------------------------------------------

def evaluate_weights_daily(qnet: nc.MLPParams, W: np.ndarray, M: Sequence, env, tasks) -> np.ndarray:
    """Greedy GPI returns ``(n_weights, n_tasks, d)`` for every weight on every task."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    tasks = np.asarray(tasks)
    if tasks.size == 0:
        raise ValueError("no evaluation days")
    nw, nt = len(W), len(tasks)
    rep_tasks = np.tile(tasks, nw)
    rep_W = np.repeat(W, nt, axis=0)

    def act(S, idx):
        return gpi_actions(qnet, env.features(S), rep_W[idx], M)

    return env.rollout(act, rep_tasks).reshape(nw, nt, -1)


def evaluate_policy(qnet: nc.MLPParams, w, M: Sequence, env, tasks) -> np.ndarray:
    """Undiscounted reward vector summed over the given episodes, greedy GPI at ``w``."""
    return evaluate_weights_daily(qnet, np.asarray(w)[None, :], M, env, tasks)[0].sum(axis=0)


def extract_front(qnet: nc.MLPParams, M: Sequence, env, tasks) -> list[Solution]:
    """Evaluate every weight of the support, then keep the non-dominated values."""
    vals = evaluate_weights_daily(qnet, np.asarray(M), M, env, tasks).sum(axis=1)
    return pareto_filter([Solution(v, i) for i, v in enumerate(vals)])


# --- TD learning -----------------------------------------------------------

def td_targets(qnet, target, F2, R, done, W, M, gamma) -> np.ndarray:
    a_star = gpi_actions(qnet, F2, W, M)
    Qn = q_values_batch(target, F2, W)[np.arange(len(F2)), a_star]
    return R + gamma * (~done)[:, None] * Qn


def td_train_step(trainer: nc.Trainer, target: nc.MLPParams, batch, w_batch, gamma: float,
                  M: Sequence, is_weights=None) -> tuple[float, np.ndarray]:
    """One Adam step on the vector TD error; returns (loss, scalarized |TD| per sample)."""
    F, A, R, F2, done = batch
    if len(F) == 0:
        raise ValueError("empty batch")
    W = np.asarray(w_batch, dtype=float)
    y = td_targets(trainer.params, target, F2, R, done, W, M, gamma)
    params = trainer.params
    acts = nc.forward_cache(params, np.concatenate([F, W], axis=1))
    B, d = R.shape
    Q = acts[-1].reshape(B, -1, d)
    rows = np.arange(B)
    diff = Q[rows, A] - y
    iw = np.ones(B) if is_weights is None else np.asarray(is_weights, dtype=float)
    loss = float(np.mean(iw[:, None] * diff * diff))
    G = np.zeros_like(Q)
    G[rows, A] = 2.0 * iw[:, None] * diff / (B * d)
    grad = nc.backward_cache(params, acts, G.reshape(B, -1))
    trainer.params, trainer.adam = nc.adam_step(params, trainer.adam, grad)
    return loss, np.abs(np.einsum("bd,bd->b", diff, W))


def sample_training_weights(rng: np.random.Generator, M: Sequence, n: int, mix: float = 0.5) -> np.ndarray:
    """``mix`` of the rows drawn from ``M``, the rest uniform on the 2-simplex."""
    Mw = np.asarray(M, dtype=float)
    n_m = int(round(mix * n))
    W = np.empty((n, Mw.shape[1]))
    W[:n_m] = Mw[rng.integers(0, len(Mw), size=n_m)]
    W[n_m:] = rng.dirichlet(np.ones(Mw.shape[1]), size=n - n_m)
    return W


# --- the learner -----------------------------------------------------------

@dataclass
class EpisodeSpec:
    """Where training episodes start: task pool, optional random sub-window length."""

    tasks: Sequence
    window: int | None = None


@dataclass
class GPIAgent:
    """GPI-LS learner (or GPI-PD when ``config.variant == "PD"``) over a batched environment."""

    env: object
    config: AgentConfig = field(default_factory=AgentConfig)
    seed: int = 0
    params: nc.MLPParams | None = None

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)
        cfg = self.config
        d = self.env.reward_dim
        if self.params is None:
            self.params = make_qnet(self.env.n_features, d, self.env.n_actions, cfg.hidden, self.rng)
        else:
            self.params = self.params.copy()
        self.gamma = self.env.gamma if cfg.gamma is None else cfg.gamma
        self.trainer = nc.Trainer(self.params, nc.AdamState.zeros(self.params.shape.n_params, lr=cfg.lr))
        self.target = self.params.copy()
        self.M: list[np.ndarray] = [EXTREMA[0].copy(), EXTREMA[1].copy()]
        self.visited: list[np.ndarray] = []
        self.front: list[Solution] = []
        self.steps = 0
        self.grad_updates = 0
        self.last_td = 0.0
        if cfg.variant == "PD":
            from homemorl.dyna import DynaComponent

            self.replay = PrioritizedReplay(cfg.buffer_size, self.env.n_features, d, cfg.per_alpha)
            self.dyna = DynaComponent(self.env, cfg, self.rng)
        else:
            self.replay = ReplayBuffer(cfg.buffer_size, self.env.n_features, d)
            self.dyna = None

    @property
    def qnet(self) -> nc.MLPParams:
        return self.trainer.params

    def add_weight(self, w) -> None:
        if not any(_same_weight(w, m) for m in self.M):
            self.M.append(np.asarray(w, dtype=float).copy())

    def epsilon(self, step: int, total: int) -> float:
        cfg = self.config
        horizon = max(1, int(cfg.eps_fraction * total))
        frac = min(1.0, step / horizon)
        return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)

    def predicted_utility(self, tasks) -> callable:
        """GPI utility estimate from the network at the episode start states."""
        S0 = self.env.reset_batch(np.asarray(tasks))
        F0 = self.env.features(S0)

        def pred(w):
            W = np.repeat(np.asarray(w, float)[None, :], len(F0), axis=0)
            a = gpi_actions(self.qnet, F0, W, self.M)
            Q = q_values_batch(self.qnet, F0, W)[np.arange(len(F0)), a]
            return float(np.mean(Q @ np.asarray(w, float)))
        return pred

    def train(self, n_steps: int, episodes: EpisodeSpec, eps_total: int | None = None) -> dict:
        """Run ``n_steps`` environment steps with exactly one gradient update each."""
        cfg = self.config
        env = self.env
        tasks = np.asarray(episodes.tasks)
        front_tasks = tasks if len(tasks) <= cfg.front_tasks else self.rng.choice(tasks, cfg.front_tasks, replace=False)
        eps_total = n_steps if eps_total is None else eps_total
        done_steps = 0
        S = None
        ep_left = 0
        losses = []
        while done_steps < n_steps:
            w = select_next_weight(self.front, self.visited, self.rng,
                                   predicted=self.predicted_utility(front_tasks) if self.front else None,
                                   noise_floor=self.last_td)
            self.add_weight(w)
            chunk = min(cfg.steps_per_weight, n_steps - done_steps)
            for _ in range(chunk):
                if S is None or ep_left <= 0:
                    task = tasks[self.rng.integers(len(tasks))]
                    start = None
                    ep_left = env.horizon
                    if episodes.window is not None and episodes.window < env.horizon:
                        h0 = int(self.rng.integers(0, env.horizon - episodes.window + 1))
                        start = np.array([h0])
                        ep_left = episodes.window
                    S = env.reset_batch(np.array([task]), start)
                f = env.features(S)
                if self.rng.random() < self.epsilon(done_steps, eps_total):
                    a = int(self.rng.integers(env.n_actions))
                else:
                    a = gpi_action(self.qnet, f[0], w, self.M)
                S2, R, done = env.step_batch(S, np.array([a]), np.array([task]))
                f2 = env.features(S2)
                self.replay.add(f[0], a, R[0], f2[0], bool(done[0]))
                if self.dyna is not None:
                    self.dyna.observe(f[0], a, R[0], f2[0], bool(done[0]))
                    self.dyna.step(self, w)
                losses.append(self._update(done_steps, eps_total))
                ep_left -= 1
                S = None if done[0] else S2
                done_steps += 1
                self.steps += 1
            value = evaluate_policy(self.qnet, w, self.M, env, front_tasks) / len(front_tasks)
            self.visited.append(w)
            self.front = [s for s in self.front if not _same_weight(s.policy_id, w)]
            self.front.append(Solution(value, tuple(w)))
            self.front = pareto_filter(self.front)
        return {"steps": done_steps, "loss": float(np.mean(losses)) if losses else float("nan")}

    def _update(self, step: int, total: int) -> float:
        cfg = self.config
        n = cfg.batch_size
        rng = self.rng
        W = sample_training_weights(rng, self.M, n, cfg.weight_mix)
        if self.dyna is None:
            idx = self.replay.sample_idx(rng, n)
            loss, td = td_train_step(self.trainer, self.target, self.replay.get(idx), W, self.gamma, self.M)
        else:
            beta = cfg.per_beta0 + (1.0 - cfg.per_beta0) * min(1.0, step / max(1, total))
            batch, iw, handles = self.dyna.sample_batch(self.replay, n, beta)
            loss, td = td_train_step(self.trainer, self.target, batch, W, self.gamma, self.M, iw)
            self.dyna.update_priorities(self.replay, handles, td)
        self.last_td = float(np.max(td)) if len(td) else 0.0
        self.grad_updates += 1
        if self.grad_updates % cfg.target_update == 0:
            self.target = self.trainer.params.copy()
        return loss

    def evaluate(self, W, tasks) -> np.ndarray:
        """Per-weight, per-task greedy returns ``(n_weights, n_tasks, d)``."""
        return evaluate_weights_daily(self.qnet, W, self.M, self.env, tasks)


def clone_agent_from(params: nc.MLPParams, env, config: AgentConfig, seed: int, M=None) -> GPIAgent:
    """Fresh learner (new replay and optimizer) starting from ``params``."""
    agent = GPIAgent(env, config, seed, params)
    if M is not None:
        for w in M:
            agent.add_weight(w)
    return agent


def with_overrides(cfg: AgentConfig, **kw) -> AgentConfig:
    return replace(cfg, **kw)


def save_checkpoint(agent: GPIAgent, path) -> None:
    """Write the Q-network to ``path`` and ``M``, step counts and seed to ``path + ".txt"``.

    The sidecar is ``key = value`` lines; ``M`` is written as
    semicolon-separated weights with comma-separated components.
    """
    from pathlib import Path

    nc.save_params(agent.qnet, path)
    m = ";".join(",".join(repr(float(x)) for x in w) for w in agent.M)
    lines = [f"seed = {agent.seed}", f"steps = {agent.steps}", f"grad_updates = {agent.grad_updates}",
             f"variant = {agent.config.variant}", f"M = {m}"]
    Path(str(path) + ".txt").write_text("\n".join(lines) + "\n")


def load_checkpoint(path, env, config: AgentConfig | None = None) -> GPIAgent:
    """Rebuild an agent from :func:`save_checkpoint` output.

    Replay and optimizer state are not stored, so training resumes with
    a fresh buffer and Adam moments.
    """
    from pathlib import Path

    meta = {}
    for line in Path(str(path) + ".txt").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    config = config or AgentConfig(variant=meta.get("variant", "LS"))
    agent = GPIAgent(env, config, int(meta["seed"]), nc.load_params(path))
    agent.M = [np.array([float(x) for x in w.split(",")]) for w in meta["M"].split(";") if w]
    agent.steps = int(meta["steps"])
    agent.grad_updates = int(meta["grad_updates"])
    return agent

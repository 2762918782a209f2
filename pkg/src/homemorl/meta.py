"""Reptile meta-training over detected contexts, annual few-shot finetuning, and baselines.

Every method returns a :class:`RunResult` with per-weight, per-day reward
vectors from a greedy evaluation over the whole year plus a manifest that
records data volume and training budget.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from homemorl import numcore as nc
from homemorl.agent import (AgentConfig, EpisodeSpec, clone_agent_from, evaluate_weights_daily,
                            make_qnet, params_hash)
from homemorl.mo import Solution, even_weights

log = logging.getLogger(__name__)

BASELINE_KINDS = ("month", "finetune_month", "year", "joint")


@dataclass
class MetaConfig:
    outer_lr: float = 3e-4
    n_epochs: int = 3
    inner_steps: int = 480
    contexts_per_epoch: int = 10
    finetune_steps: int = 96
    sub_window: int = 12
    batched: bool = False
    base_steps: int = 40_000
    base_finetune_steps: int = 5_000
    month_days: int = 30
    n_eval_weights: int = 21
    finetune_eps_start: float | None = None
    finetune_lr: float | None = None
    finetune_guard: bool = True

    def __post_init__(self):
        if not 0.0 < self.outer_lr <= 1.0:
            raise ValueError("outer_lr must lie in (0, 1]")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")


@dataclass(frozen=True)
class ContextSegment:
    id: int
    start_day: int
    end_day: int

    def __post_init__(self):
        if self.start_day > self.end_day:
            raise ValueError(f"segment {self.id}: start after end")

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.start_day, self.end_day + 1)


def segments_from_starts(starts: Sequence[int], last_day: int) -> list[ContextSegment]:
    starts = sorted(set(int(s) for s in starts))
    ends = [s - 1 for s in starts[1:]] + [last_day]
    return [ContextSegment(i + 1, s, e) for i, (s, e) in enumerate(zip(starts, ends))]


@dataclass
class RunResult:
    method: str
    seed: int
    weights: np.ndarray
    daily: np.ndarray            # (n_weights, n_days, d)
    days: np.ndarray
    day_context: np.ndarray
    finetuned: np.ndarray
    manifest: dict = field(default_factory=dict)
    params: nc.MLPParams | None = None
    M: list = field(default_factory=list)
    quality: list = field(default_factory=list)   # (step, member, feature, mse, disagreement)

    @property
    def annual(self) -> np.ndarray:
        return self.daily.sum(axis=1)

    def solutions(self) -> list[Solution]:
        return [Solution(v, i) for i, v in enumerate(self.annual)]


def reptile_step(phi: nc.MLPParams, phi_prime: nc.MLPParams, eps: float) -> nc.MLPParams:
    """Move ``phi`` a fraction ``eps`` of the way toward ``phi_prime``."""
    if phi.shape != phi_prime.shape:
        raise nc.ShapeError("Reptile step between different shapes")
    return nc.MLPParams(phi.shape, phi.theta + eps * (phi_prime.theta - phi.theta))


def inner_seed(seed: int, epoch: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, k]).generate_state(1)[0])


def initial_params(env, agent_cfg: AgentConfig, seed: int) -> nc.MLPParams:
    return make_qnet(env.n_features, env.reward_dim, env.n_actions, agent_cfg.hidden,
                     np.random.default_rng(seed))


def ledger(kind: str, cfg: MetaConfig, n_contexts: int, n_days: int = 365) -> tuple[int, int]:
    """``(data_volume, training_budget)`` a method is entitled to."""
    meta_budget = cfg.n_epochs * min(cfg.contexts_per_epoch, n_contexts) * cfg.inner_steps
    table = {
        "month": (cfg.month_days * 24, cfg.base_steps),
        "finetune_month": (cfg.month_days * 24 + n_contexts * 24,
                           cfg.base_steps + n_contexts * cfg.base_finetune_steps),
        "year": (n_days * 24, cfg.base_steps),
        "joint": (n_contexts * 24, cfg.base_steps),
        "r-gpi": (n_contexts * 24, meta_budget),
        "finetune-r-gpi": (n_contexts * 24, meta_budget + n_contexts * cfg.finetune_steps),
    }
    if kind not in table:
        raise ValueError(f"unknown kind {kind!r}")
    return table[kind]


def _gather_quality(rows: list, agent, offset: int) -> None:
    if agent.dyna is not None:
        rows.extend((offset + r[0], *r[1:]) for r in agent.dyna.quality_log)


def meta_train(env, segments: Sequence[ContextSegment], cfg: MetaConfig, agent_cfg: AgentConfig,
               seed: int, phi: nc.MLPParams | None = None):
    """Reptile over context tasks; each task is the 24-hour day at a context's start.

    Returns ``(phi, M, manifest)``.
    """
    if not segments:
        raise ValueError("no contexts to meta-train on")
    rng = np.random.default_rng(seed)
    phi = initial_params(env, agent_cfg, seed) if phi is None else phi.copy()
    M: list[np.ndarray] = []
    steps = 0
    quality: list = []
    used_days = set()
    n_pick = min(cfg.contexts_per_epoch, len(segments))
    for epoch in range(cfg.n_epochs):
        picks = rng.choice(len(segments), size=n_pick, replace=False)
        adapted = []
        for k, j in enumerate(picks):
            seg = segments[j]
            agent = clone_agent_from(phi, env, agent_cfg, inner_seed(seed, epoch, k))
            agent.train(cfg.inner_steps, EpisodeSpec([seg.start_day]))
            _gather_quality(quality, agent, steps)
            steps += agent.steps
            used_days.add(seg.start_day)
            for w in agent.M:
                if not any(abs(w[0] - m[0]) <= 1e-9 for m in M):
                    M.append(w.copy())
            if cfg.batched:
                adapted.append(agent.qnet.theta)
            else:
                phi = reptile_step(phi, agent.qnet, cfg.outer_lr)
        if cfg.batched:
            phi = reptile_step(phi, nc.MLPParams(phi.shape, np.mean(adapted, axis=0)), cfg.outer_lr)
    manifest = {
        "variant": agent_cfg.variant,
        "meta_steps": steps,
        "meta_days": sorted(used_days),
        "contexts": [s.start_day for s in segments],
        "quality": quality,
    }
    return phi, sorted(M, key=lambda w: w[0]), manifest


def _eval_weights(cfg: MetaConfig) -> np.ndarray:
    return even_weights(cfg.n_eval_weights)


def _year_days(env) -> np.ndarray:
    return env.data.days


def _day_utility(params, W, M, env, days) -> float:
    """Mean over weights of the scalarised return on ``days``."""
    vals = evaluate_weights_daily(params, W, M, env, days).sum(axis=1)
    return float(np.mean(np.sum(vals * W, axis=1)))


def finetune_run_year(phi: nc.MLPParams, M, env, segments: Sequence[ContextSegment], cfg: MetaConfig,
                      agent_cfg: AgentConfig, seed: int, finetune_steps: int | None = None,
                      window: int | None = -1, method: str = "finetune-r-gpi") -> RunResult:
    """Walk the year segment by segment, finetuning the original ``phi`` at each context start.

    ``finetune_steps=0`` evaluates ``phi`` unchanged. ``window=-1`` uses the
    configured sub-window length; ``None`` trains on whole days.
    """
    steps_per = cfg.finetune_steps if finetune_steps is None else finetune_steps
    window = cfg.sub_window if window == -1 else window
    ft_cfg = agent_cfg
    if cfg.finetune_eps_start is not None:
        ft_cfg = replace(ft_cfg, eps_start=cfg.finetune_eps_start)
    if cfg.finetune_lr is not None:
        ft_cfg = replace(ft_cfg, lr=cfg.finetune_lr)
    W = _eval_weights(cfg)
    base_hash = params_hash(phi)
    blocks, day_ctx, flags, restart_hashes, kept, quality = [], [], [], [], [], []
    steps = 0
    for k, seg in enumerate(segments):
        params, support = phi, M
        if steps_per > 0:
            agent = clone_agent_from(phi, env, ft_cfg, inner_seed(seed, 10_000, k), M)
            restart_hashes.append(params_hash(agent.qnet))
            agent.train(steps_per, EpisodeSpec([seg.start_day], window))
            _gather_quality(quality, agent, steps)
            steps += agent.steps
            keep = True
            if cfg.finetune_guard:
                # only the adaptation day is consulted, so no extra data is spent
                day = [seg.start_day]
                before = _day_utility(phi, W, M, env, day)
                after = _day_utility(agent.qnet, W, agent.M, env, day)
                keep = after > before
            if keep:
                params, support = agent.qnet, agent.M
            kept.append(keep)
        blocks.append(evaluate_weights_daily(params, W, support, env, seg.days))
        day_ctx.extend([seg.id] * len(seg.days))
        flags.extend([steps_per > 0] * len(seg.days))
    if any(h != base_hash for h in restart_hashes):
        raise AssertionError("finetuning did not restart from the meta-trained parameters")
    daily = np.concatenate(blocks, axis=1)
    days = np.concatenate([s.days for s in segments])
    manifest = {
        "finetune_steps": steps,
        "finetune_events": len(segments) if steps_per > 0 else 0,
        "restart_hash": base_hash,
        "restart_hashes_ok": True,
        "finetune_kept": sum(kept),
    }
    return RunResult(method, seed, W, daily, days, np.array(day_ctx), np.array(flags),
                     manifest, phi, list(M), quality)


def baseline_run(kind: str, env, segments: Sequence[ContextSegment], cfg: MetaConfig,
                 agent_cfg: AgentConfig, seed: int, method: str | None = None) -> RunResult:
    """Plain GPI baselines: month, finetune_month, year, joint."""
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
    all_days = _year_days(env)
    if kind in ("month", "finetune_month"):
        train_days = all_days[: cfg.month_days]
    elif kind == "year":
        train_days = all_days
    else:
        train_days = np.array([s.start_day for s in segments])
    phi0 = initial_params(env, agent_cfg, seed)
    agent = clone_agent_from(phi0, env, agent_cfg, inner_seed(seed, 0, 0))
    agent.train(cfg.base_steps, EpisodeSpec(train_days))
    steps = agent.steps
    base_quality: list = []
    _gather_quality(base_quality, agent, 0)
    data_days = set(int(d) for d in train_days)
    if kind == "finetune_month":
        res = finetune_run_year(agent.qnet, agent.M, env, segments, cfg, agent_cfg, seed,
                                finetune_steps=cfg.base_finetune_steps, window=None, method=kind)
        steps += res.manifest["finetune_steps"]
        data_days |= {s.start_day for s in segments}
        data_volume = cfg.month_days * 24 + len(segments) * 24
    else:
        res = finetune_run_year(agent.qnet, agent.M, env, segments, cfg, agent_cfg, seed,
                                finetune_steps=0, method=kind)
        data_volume = len(data_days) * 24
    res.method = method or kind
    res.quality = base_quality + [(agent.steps + r[0], *r[1:]) for r in res.quality]
    res.manifest.update({
        "kind": kind,
        "variant": agent_cfg.variant,
        "training_budget": steps,
        "data_volume": data_volume,
        "train_days": len(train_days),
    })
    return res


def reptile_run(env, segments: Sequence[ContextSegment], cfg: MetaConfig, agent_cfg: AgentConfig,
                seed: int, finetune: bool, method: str | None = None) -> RunResult:
    """R-GPI (``finetune=False``) or Finetune R-GPI over the year."""
    phi, M, meta_manifest = meta_train(env, segments, cfg, agent_cfg, seed)
    res = finetune_run_year(phi, M, env, segments, cfg, agent_cfg, seed,
                            finetune_steps=cfg.finetune_steps if finetune else 0)
    res.method = method or ("finetune-r-gpi" if finetune else "r-gpi")
    meta_quality = meta_manifest.pop("quality")
    res.quality = meta_quality + [(meta_manifest["meta_steps"] + r[0], *r[1:]) for r in res.quality]
    res.manifest.update(meta_manifest)
    res.manifest.update({
        "kind": "finetune-r-gpi" if finetune else "r-gpi",
        "training_budget": meta_manifest["meta_steps"] + res.manifest["finetune_steps"],
        "data_volume": len(segments) * 24,
    })
    return res


def rule_run(rule: int, env, segments: Sequence[ContextSegment], seed: int = 0) -> RunResult:
    days = _year_days(env)
    daily = env.run_rule(rule, days)[None, :, :]
    ctx = np.zeros(len(days), dtype=int)
    for s in segments:
        ctx[(days >= s.start_day) & (days <= s.end_day)] = s.id
    manifest = {"kind": f"rule{rule}", "variant": "-", "training_budget": 0, "data_volume": 0}
    return RunResult(f"rule{rule}", seed, np.array([[0.5, 0.5]]), daily, days, ctx,
                     np.zeros(len(days), dtype=bool), manifest)

"""Hourly appliance-scheduling environment with two objectives (cost, comfort).

One episode is one day of 24 hourly steps. The agent decides each hour
whether a 1.5 kW storage heater runs; it earns one comfort unit per hour
run inside the comfort window while the daily task is unfinished, and pays
the time-of-use tariff for whatever the household draws from the grid.

Single-step calls use :class:`EnvState`/:class:`Transition`; training and
evaluation use the batched array form where a state row is
``[background_demand_kw, hour, remaining_task_hours, renewable_kw]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

DEMAND, HOUR, REMAINING, RENEWABLE = range(4)
HOURS = 24
CSV_HEADER = ["day", "hour", "background_demand_kw", "renewable_kw"]


class DataError(ValueError):
    """Malformed or incomplete hourly data."""


@dataclass(frozen=True)
class HourlyRecord:
    day: int
    hour: int
    background_demand_kw: float
    renewable_kw: float


@dataclass(frozen=True)
class EnvConfig:
    appliance_kw: float = 1.5
    task_hours: int = 4
    comfort_window: tuple[int, int] = (0, 8)
    peak_rate: float = 0.3662
    offpeak_rate: float = 0.1518
    peak_window: tuple[int, int] = (8, 23)
    gamma: float = 0.99
    episode_len: int = HOURS
    bill_scope: str = "household"

    def __post_init__(self):
        if self.peak_rate <= 0 or self.offpeak_rate <= 0:
            raise ValueError("tariff rates must be positive")
        lo, hi = self.comfort_window
        if self.task_hours > hi - lo:
            raise ValueError("task_hours exceeds the comfort window")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.bill_scope not in ("household", "appliance"):
            raise ValueError(f"unknown bill_scope {self.bill_scope!r}")


@dataclass(frozen=True)
class EnvState:
    background_demand_kw: float
    hour: int
    remaining_task_hours: int
    renewable_kw: float

    def as_array(self) -> np.ndarray:
        return np.array([self.background_demand_kw, self.hour,
                         self.remaining_task_hours, self.renewable_kw], dtype=float)

    @classmethod
    def from_array(cls, row) -> EnvState:
        return cls(float(row[DEMAND]), int(row[HOUR]), int(row[REMAINING]), float(row[RENEWABLE]))


@dataclass(frozen=True)
class RewardVec:
    neg_cost: float
    comfort: int

    def as_array(self) -> np.ndarray:
        return np.array([self.neg_cost, self.comfort], dtype=float)


@dataclass(frozen=True)
class Transition:
    state: EnvState
    action: int
    reward: RewardVec
    next_state: EnvState
    done: bool


def tariff_rate(hour: int, config: EnvConfig = EnvConfig()) -> float:
    """£/kWh charged for energy drawn during ``hour``."""
    lo, hi = config.peak_window
    return config.peak_rate if lo <= hour < hi else config.offpeak_rate


class Dataset:
    """Immutable hourly table indexed by day number; ``demand``/``renewable`` are ``(n_days, 24)``."""

    def __init__(self, days: Sequence[int], demand: np.ndarray, renewable: np.ndarray,
                 shift_days: Sequence[int] = ()):
        self.days = np.asarray(days, dtype=int)
        self.demand = np.asarray(demand, dtype=float)
        self.renewable = np.asarray(renewable, dtype=float)
        self.shift_days = tuple(int(d) for d in shift_days)
        if self.demand.shape != (len(self.days), HOURS) or self.renewable.shape != self.demand.shape:
            raise DataError("dataset arrays must be (n_days, 24)")
        if len(self.days) and np.any(np.diff(self.days) != 1):
            raise DataError("days must be contiguous")
        self.demand.setflags(write=False)
        self.renewable.setflags(write=False)
        self.first_day = int(self.days[0]) if len(self.days) else 1

    def __len__(self) -> int:
        return self.demand.size

    def __iter__(self) -> Iterator[HourlyRecord]:
        for i, d in enumerate(self.days):
            for h in range(HOURS):
                yield HourlyRecord(int(d), h, float(self.demand[i, h]), float(self.renewable[i, h]))

    @property
    def n_days(self) -> int:
        return len(self.days)

    def index(self, day) -> np.ndarray | int:
        idx = np.asarray(day) - self.first_day
        if np.any(idx < 0) or np.any(idx >= self.n_days):
            raise DataError(f"day(s) {day} not in dataset (days {self.first_day}..{self.days[-1]})")
        return idx

    def __contains__(self, day) -> bool:
        return self.first_day <= day < self.first_day + self.n_days

    def subset(self, days: Sequence[int]) -> Dataset:
        """Contiguous day-range view copied into a new dataset."""
        idx = self.index(np.asarray(days))
        return Dataset(days, self.demand[idx], self.renewable[idx])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(CSV_HEADER)
            for r in self:
                wr.writerow([r.day, r.hour, repr(r.background_demand_kw), repr(r.renewable_kw)])


def load_dataset(path) -> Dataset:
    """Read and validate the hourly CSV; errors name the offending row or day."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise DataError(f"{path}: header must be {','.join(CSV_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise DataError(f"{path}: row {lineno}: expected 4 fields, got {len(row)}")
            try:
                day, hour = int(row[0]), int(row[1])
                demand, ren = float(row[2]), float(row[3])
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: parse error ({exc})") from None
            if not (math.isfinite(demand) and math.isfinite(ren)) or demand < 0 or ren < 0:
                raise DataError(f"{path}: row {lineno}: power values must be finite and >= 0")
            if not 0 <= hour < HOURS:
                raise DataError(f"{path}: row {lineno}: hour {hour} outside 0..23")
            rows.append((lineno, day, hour, demand, ren))
    if not rows:
        raise DataError(f"{path}: no data rows")
    by_day: dict[int, dict[int, tuple[float, float]]] = {}
    for lineno, day, hour, demand, ren in rows:
        hours = by_day.setdefault(day, {})
        if hour in hours:
            raise DataError(f"{path}: row {lineno}: duplicate hour {hour} on day {day}")
        hours[hour] = (demand, ren)
    days = sorted(by_day)
    for prev, nxt in zip(days[:-1], days[1:]):
        if nxt != prev + 1:
            raise DataError(f"{path}: days {prev + 1}..{nxt - 1} missing (gap after day {prev})")
    demand = np.zeros((len(days), HOURS))
    renewable = np.zeros((len(days), HOURS))
    for i, d in enumerate(days):
        missing = sorted(set(range(HOURS)) - set(by_day[d]))
        if missing:
            raise DataError(f"{path}: day {d} missing hour(s) {missing}")
        for h, (dem, ren) in by_day[d].items():
            demand[i, h] = dem
            renewable[i, h] = ren
    return Dataset(days, demand, renewable)


def base_demand_profile(hours=np.arange(HOURS)) -> np.ndarray:
    """Household background draw (kW): overnight base, breakfast and evening bumps."""
    h = np.asarray(hours, dtype=float)
    return 0.18 + 0.22 * np.exp(-((h - 7.5) ** 2) / 3.0) + 0.45 * np.exp(-((h - 19.0) ** 2) / 6.0)


def solar_profile(hours=np.arange(HOURS), peak_kw: float = 1.0, width: float = 3.0) -> np.ndarray:
    h = np.asarray(hours, dtype=float)
    return peak_kw * np.exp(-((h - 12.0) ** 2) / (2.0 * width**2))


def synth_year(seed: int, regimes: Sequence[tuple[int, float, float]], n_days: int = 365,
               peak_kw: float = 1.0) -> Dataset:
    """Seeded synthetic year whose renewable regime changes on known days.

    Each regime ``(start_day, solar_scale, noise)`` holds until the next
    one starts. Renewable output is the scaled solar bell plus Gaussian
    noise; background demand is the base diurnal profile plus noise.
    Both are clipped at zero. ``shift_days`` records the regime starts.
    """
    regimes = [(int(s), float(k), float(n)) for s, k, n in regimes]
    if not regimes:
        raise ValueError("at least one regime is required")
    starts = [r[0] for r in regimes]
    if starts != sorted(starts) or len(set(starts)) != len(starts):
        raise ValueError(f"regime start days must be strictly increasing, got {starts}")
    if starts[0] != 1 or starts[-1] > n_days:
        raise ValueError(f"regimes must start on day 1 and end by day {n_days}")
    rng = np.random.default_rng(seed)
    days = np.arange(1, n_days + 1)
    scale = np.zeros(n_days)
    noise = np.zeros(n_days)
    for start, k, sd in regimes:
        scale[start - 1:] = k
        noise[start - 1:] = sd
    bell = solar_profile(peak_kw=peak_kw)
    base = base_demand_profile()
    eps_r = rng.standard_normal((n_days, HOURS))
    eps_d = rng.standard_normal((n_days, HOURS))
    renewable = np.clip(scale[:, None] * bell[None, :] + noise[:, None] * eps_r, 0.0, None)
    demand = np.clip(base[None, :] + noise[:, None] * eps_d, 0.0, None)
    return Dataset(days, demand, renewable, shift_days=starts)


def rule_policy(rule: int, state) -> int:
    """Fixed schedules: rule 1 runs 00:00-04:00, rule 2 runs 04:00-08:00."""
    hour = state.hour if isinstance(state, EnvState) else int(np.asarray(state)[HOUR])
    if rule == 1:
        return int(0 <= hour < 4)
    if rule == 2:
        return int(4 <= hour < 8)
    raise ValueError(f"unknown rule {rule}")


def rule_actions(rule: int, S: np.ndarray) -> np.ndarray:
    h = S[:, HOUR]
    lo, hi = (0, 4) if rule == 1 else (4, 8)
    if rule not in (1, 2):
        raise ValueError(f"unknown rule {rule}")
    return ((h >= lo) & (h < hi)).astype(int)


class BatchEnv:
    """Array interface shared by the appliance environment and toy MOMDPs.

    Subclasses define ``reset_batch``, ``step_batch`` and ``features``.
    """

    n_actions = 2
    reward_dim = 2
    n_features: int
    horizon: int
    gamma: float

    def rollout(self, act: Callable[[np.ndarray, np.ndarray], np.ndarray], tasks,
                start_hours=None, length: int | None = None) -> np.ndarray:
        """Run one episode per task in lockstep; returns ``(n_tasks, reward_dim)`` undiscounted sums.

        ``act(S, alive_idx)`` receives the live state rows and their row indices.
        """
        tasks = np.asarray(tasks)
        S = self.reset_batch(tasks, start_hours)
        totals = np.zeros((len(tasks), self.reward_dim))
        alive = np.ones(len(tasks), dtype=bool)
        steps = self.horizon if length is None else length
        for _ in range(steps):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            A = np.asarray(act(S[idx], idx), dtype=int)
            S2, R, done = self.step_batch(S[idx], A, tasks[idx])
            totals[idx] += R
            S[idx] = S2
            alive[idx[done]] = False
        return totals


class ApplianceEnv(BatchEnv):
    """The hourly heater-scheduling MOMDP over a loaded :class:`Dataset`."""

    n_features = 4
    horizon = HOURS
    exogenous_features = (0, 3)

    def __init__(self, data: Dataset, config: EnvConfig = EnvConfig(), norm: tuple[float, float] | None = None):
        self.data = data
        self.config = config
        self.gamma = config.gamma
        if norm is None:
            norm = (float(data.demand.max()), float(data.renewable.max()))
        self.norm = tuple(v if v > 0 else 1.0 for v in norm)
        hours = np.arange(HOURS)
        lo, hi = config.peak_window
        self._rates = np.where((hours >= lo) & (hours < hi), config.peak_rate, config.offpeak_rate)

    # single-step API ------------------------------------------------------
    def reset(self, day: int) -> EnvState:
        return EnvState.from_array(self.reset_batch(np.array([day]))[0])

    def step(self, state: EnvState, action: int, day: int) -> Transition:
        if action not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {action!r}")
        if not 0 <= state.hour < HOURS:
            raise ValueError(f"hour {state.hour} outside 0..23")
        S2, R, done = self.step_batch(state.as_array()[None, :], np.array([action]), np.array([day]))
        return Transition(
            state, int(action), RewardVec(float(R[0, 0]), int(R[0, 1])),
            EnvState.from_array(S2[0]), bool(done[0]),
        )

    # batched API ----------------------------------------------------------
    def reset_batch(self, days, start_hours=None) -> np.ndarray:
        days = np.asarray(days)
        idx = self.data.index(days)
        hours = np.zeros(len(days), dtype=int) if start_hours is None else np.asarray(start_hours, dtype=int)
        S = np.empty((len(days), 4))
        S[:, DEMAND] = self.data.demand[idx, hours]
        S[:, HOUR] = hours
        S[:, REMAINING] = self.config.task_hours
        S[:, RENEWABLE] = self.data.renewable[idx, hours]
        return S

    def step_batch(self, S: np.ndarray, A: np.ndarray, days) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        cfg = self.config
        A = np.asarray(A)
        if np.any((A != 0) & (A != 1)):
            raise ValueError("actions must be 0 or 1")
        hour = S[:, HOUR].astype(int)
        remaining = S[:, REMAINING]
        bg, ren = S[:, DEMAND], S[:, RENEWABLE]
        load = bg + cfg.appliance_kw * A
        draw = np.maximum(0.0, load - ren)
        if cfg.bill_scope == "appliance":
            draw = draw - np.maximum(0.0, bg - ren)
        neg_cost = -draw * self._rates[hour]
        lo, hi = cfg.comfort_window
        working = (A == 1) & (remaining > 0)
        comfort = (working & (hour >= lo) & (hour < hi)).astype(float)
        done = hour >= HOURS - 1
        S2 = np.empty_like(S)
        S2[:, REMAINING] = remaining - working
        nxt = hour + 1
        # terminal rows point at the following day's first hour when it exists
        idx = np.asarray(days) - self.data.first_day
        wrap = nxt >= HOURS
        idx = np.where(wrap, np.minimum(idx + 1, self.data.n_days - 1), idx)
        nxt = np.where(wrap, 0, nxt)
        S2[:, HOUR] = nxt
        S2[:, DEMAND] = self.data.demand[idx, nxt]
        S2[:, RENEWABLE] = self.data.renewable[idx, nxt]
        return S2, np.stack([neg_cost, comfort], axis=1), done

    def features(self, S: np.ndarray) -> np.ndarray:
        S = np.atleast_2d(S)
        F = np.empty((len(S), 4))
        F[:, 0] = S[:, DEMAND] / self.norm[0]
        F[:, 1] = S[:, HOUR] / (HOURS - 1)
        F[:, 2] = S[:, REMAINING] / self.config.task_hours
        F[:, 3] = S[:, RENEWABLE] / self.norm[1]
        return F

    def run_rule(self, rule: int, days) -> np.ndarray:
        """Per-day reward sums of a fixed rule schedule."""
        return self.rollout(lambda S, _idx: rule_actions(rule, S), days)

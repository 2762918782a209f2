"""Multi-objective primitives: linear utility, Pareto dominance, CCS, corner weights.

Dominance and utility work for any number of objectives. Hull and corner
routines are two-objective only.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

CORNER_TOL = 1e-9


class Solution(NamedTuple):
    value: np.ndarray
    policy_id: object = None


def as_solutions(points: Iterable) -> list[Solution]:
    """Wrap raw vectors as solutions; ids default to input position."""
    out = []
    for i, p in enumerate(points):
        if isinstance(p, Solution):
            out.append(Solution(np.asarray(p.value, dtype=float), p.policy_id))
        else:
            out.append(Solution(np.asarray(p, dtype=float), i))
    return out


def check_weight(w, d: int | None = None) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if d is not None and w.shape != (d,):
        raise ValueError(f"weight {w} does not have {d} components")
    if not np.all(np.isfinite(w)) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weight {w} is not on the simplex")
    return w


def utility(v, w) -> float:
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.shape != w.shape:
        raise ValueError(f"dimension mismatch: value {v.shape} vs weight {w.shape}")
    return float(v @ w)


def dominates(a, b) -> bool:
    """Strict Pareto dominance: ``a >= b`` everywhere and ``a > b`` somewhere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(a >= b) and np.any(a > b))


def pareto_filter(S: Sequence) -> list[Solution]:
    """Non-dominated subset in input order; of equal vectors the first is kept."""
    sols = as_solutions(S)
    if not sols:
        return []
    V = np.array([s.value for s in sols])
    keep = []
    for i, v in enumerate(V):
        ge = np.all(V >= v, axis=1)
        gt = np.any(V > v, axis=1)
        if np.any(ge & gt):
            continue
        if any(np.array_equal(V[j], v) for j in keep):
            continue
        keep.append(i)
    return [sols[i] for i in keep]


def ccs_prune(S: Sequence) -> list[Solution]:
    """Points that maximize ``v . w`` for some simplex weight (2 objectives).

    The upper convex hull of the Pareto set; points exactly on a hull edge
    are tie-maximizers and are kept. Output is sorted by objective 0.
    """
    front = pareto_filter(S)
    if len(front) <= 2:
        return sorted(front, key=lambda s: s.value[0])
    if front[0].value.shape != (2,):
        raise ValueError("ccs_prune supports two objectives only")
    front.sort(key=lambda s: s.value[0])
    scale = max(1.0, max(float(np.abs(s.value).max()) for s in front))
    hull: list[Solution] = []
    for s in front:
        while len(hull) >= 2:
            a, b = hull[-2].value, hull[-1].value
            c = s.value
            # b strictly below chord a-c ⇒ never a maximizer
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross > 1e-12 * scale * scale:
                hull.pop()
            else:
                break
        hull.append(s)
    return hull


def tie_weight(a, b) -> np.ndarray | None:
    """Weight ``[w, 1-w]`` at which ``a`` and ``b`` have equal utility, if inside the simplex."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = (a[0] - b[0]) - (a[1] - b[1])
    if denom == 0.0:
        return None
    w1 = (b[1] - a[1]) / denom
    if w1 < -CORNER_TOL or w1 > 1 + CORNER_TOL:
        return None
    w1 = min(max(w1, 0.0), 1.0)
    return np.array([w1, 1.0 - w1])


def corner_pairs(S: Sequence) -> list[tuple[np.ndarray, Solution | None, Solution | None]]:
    """Corner weights with the hull neighbours that tie there.

    The simplex extrema carry ``None`` neighbours.
    """
    hull = ccs_prune(S)
    found = [(np.array([0.0, 1.0]), None, None), (np.array([1.0, 0.0]), None, None)]
    for lo, hi in zip(hull[:-1], hull[1:]):
        w = tie_weight(lo.value, hi.value)
        if w is not None:
            found.append((w, lo, hi))
    found.sort(key=lambda t: t[0][0])
    out = []
    for item in found:
        if out and abs(item[0][0] - out[-1][0][0]) <= CORNER_TOL:
            continue
        out.append(item)
    return out


def corner_weights(S: Sequence) -> list[np.ndarray]:
    """Simplex extrema plus every weight where adjacent CCS points tie, sorted by ``w[0]``."""
    return [w for w, _, _ in corner_pairs(S)]


def even_weights(n: int) -> np.ndarray:
    """``n`` evenly spaced two-objective weights, ``w[0] = k/(n-1)``."""
    if n < 2:
        raise ValueError("need at least 2 weights")
    w1 = np.arange(n) / (n - 1)
    return np.stack([w1, 1.0 - w1], axis=1)


def write_solutions(path, S: Sequence) -> None:
    sols = as_solutions(S)
    d = len(sols[0].value) if sols else 2
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["policy_id"] + [f"v_{j}" for j in range(d)])
        for s in sols:
            wr.writerow([s.policy_id] + [repr(float(x)) for x in s.value])


def read_solutions(path) -> list[Solution]:
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        keys = sorted((k for k in r if k.startswith("v_")), key=lambda k: int(k[2:]))
        out.append(Solution(np.array([float(r[k]) for k in keys]), r["policy_id"]))
    return out

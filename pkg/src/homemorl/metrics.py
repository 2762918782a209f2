"""Solution-set quality metrics: expected utility, 2-D hypervolume, sparsity."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from homemorl.mo import as_solutions, even_weights, pareto_filter

HV_REF = (-1300.0, 0.0)
BILL_WEIGHT = (0.9, 0.1)
COMFORT_WEIGHT = (0.1, 0.9)

METRIC_FIELDS = ["method", "seed", "eu", "hv", "sp", "hv_over_sp", "bill", "comfort"]


@dataclass
class MetricReport:
    eu: float
    hv: float
    sp: float | None
    hv_over_sp: float | None
    bill_at_w91: float | None = None
    comfort_at_w19: float | None = None


def expected_utility(S: Sequence, n: int = 100) -> float:
    """Mean over ``n`` evenly spread weights of the best scalarized value in ``S``."""
    sols = as_solutions(S)
    if not sols:
        raise ValueError("expected utility of an empty solution set")
    V = np.array([s.value for s in sols])
    if V.shape[1] != 2:
        raise ValueError("expected_utility is defined on two objectives")
    W = even_weights(n)
    # elementwise products and a correctly rounded sum keep the result order-independent
    U = W[:, :1] * V[:, 0] + W[:, 1:] * V[:, 1]
    return math.fsum(U.max(axis=1)) / n


def hypervolume2d(S: Sequence, ref=HV_REF, strict: bool = True) -> float:
    """Area dominated by ``S`` and bounded below by ``ref`` (maximization).

    With ``strict`` a point below ``ref`` raises; otherwise it is dropped,
    since it dominates no area above the reference.
    """
    ref = np.asarray(ref, dtype=float)
    sols = as_solutions(S)
    for s in sols:
        if s.value.shape != (2,):
            raise ValueError("hypervolume2d needs two objectives")
        if strict and np.any(s.value < ref):
            raise ValueError(f"point {s.value.tolist()} (policy {s.policy_id}) lies below reference {ref.tolist()}")
    sols = [s for s in sols if np.all(s.value >= ref)]
    front = sorted((s.value for s in pareto_filter(sols)), key=lambda v: -v[0])
    area = 0.0
    prev_y = ref[1]
    for x, y in front:
        # descending x on a front means ascending y
        area += (x - ref[0]) * (y - prev_y)
        prev_y = y
    return float(area)


def sparsity(S: Sequence) -> float | None:
    """Mean squared gap between consecutive sorted values, summed over objectives.

    ``None`` when fewer than two solutions.
    """
    sols = as_solutions(S)
    if len(sols) < 2:
        return None
    V = np.array([s.value for s in sols])
    gaps = np.concatenate([np.diff(np.sort(V[:, j])) ** 2 for j in range(V.shape[1])])
    return math.fsum(gaps) / (len(sols) - 1)


def anchored_values(S: Sequence, logs: Mapping | Callable) -> tuple[float, float]:
    """Bill at the cost-heavy weight and comfort at the comfort-heavy weight.

    ``logs`` maps policy id to that policy's annual reward vector
    ``(neg_cost, comfort)`` (or is a callable doing so).
    """
    sols = as_solutions(S)
    if not sols:
        raise ValueError("empty solution set")
    lookup = logs if callable(logs) else logs.__getitem__

    def pick(w):
        w = np.asarray(w)
        best = max(sols, key=lambda s: float(s.value @ w))
        try:
            return np.asarray(lookup(best.policy_id), dtype=float)
        except KeyError:
            raise KeyError(f"unresolvable policy id {best.policy_id!r}") from None

    bill = -float(pick(BILL_WEIGHT)[0])
    comfort = float(pick(COMFORT_WEIGHT)[1])
    return bill, comfort


def report(S: Sequence, logs: Mapping | Callable | None = None, n: int = 100,
           ref=HV_REF) -> MetricReport:
    """All metrics on the Pareto-filtered set (EU and anchors use the full set)."""
    sols = as_solutions(S)
    front = pareto_filter(sols)
    sp = sparsity(front)
    hv = hypervolume2d(front, ref, strict=False)
    if logs is None:
        logs = {s.policy_id: s.value for s in sols}
    bill, comfort = anchored_values(sols, logs)
    return MetricReport(
        eu=expected_utility(sols, n),
        hv=hv,
        sp=sp,
        hv_over_sp=(hv / sp) if sp else None,
        bill_at_w91=bill,
        comfort_at_w19=comfort,
    )


def improvement(candidate: float, baseline: float) -> float:
    """Percentage change of ``candidate`` relative to ``baseline``."""
    if baseline == 0:
        return math.nan
    return (candidate - baseline) / baseline * 100.0


def write_metrics(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in METRIC_FIELDS})


def metrics_row(method: str, seed, rep: MetricReport) -> dict:
    d = asdict(rep)
    return {
        "method": method, "seed": seed, "eu": d["eu"], "hv": d["hv"], "sp": d["sp"],
        "hv_over_sp": d["hv_over_sp"], "bill": d["bill_at_w91"], "comfort": d["comfort_at_w19"],
    }

"""Command-line runner: ``homemorl {synth,detect,run,report}``.

Exit codes: 0 ok, 2 usage or config error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from homemorl import numcore as nc
from homemorl import svgplot
from homemorl.config import METHODS, ConfigError, RunConfig, load_config, method_plan, parse_regimes
from homemorl.detect import detect, make_windows, write_contexts_csv, write_losses_csv
from homemorl.dyna import write_quality_csv
from homemorl.env import ApplianceEnv, DataError, Dataset, load_dataset, synth_year
from homemorl.meta import (RunResult, baseline_run, ledger, reptile_run, rule_run,
                           segments_from_starts)
from homemorl.metrics import METRIC_FIELDS, improvement, metrics_row, report, write_metrics
from homemorl.mo import Solution, pareto_filter

log = logging.getLogger("homemorl")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# Direction of "better" per summary column.
HIGHER_BETTER = {"eu": True, "hv": True, "sp": False, "bill": False, "comfort": True}

REWARD_FIELDS = ["seed", "day", "policy_id", "neg_cost", "comfort", "context_id", "finetuned"]
SOLUTION_FIELDS = ["seed", "policy_id", "w_0", "w_1", "v_0", "v_1"]


class UsageError(Exception):
    pass


# --- data ------------------------------------------------------------------


def resolve_dataset(cfg: RunConfig, seed: int) -> Dataset:
    if cfg.dataset:
        return load_dataset(cfg.dataset)
    return synth_year(seed, cfg.regimes, n_days=cfg.n_days, peak_kw=cfg.peak_kw)


def resolve_contexts(cfg: RunConfig, data: Dataset, seed: int) -> list[int]:
    explicit = cfg.context_starts()
    if explicit is not None:
        bad = [d for d in explicit if d not in data]
        if bad:
            raise DataError(f"context start day(s) {bad} are not in the dataset")
        return explicit
    if cfg.contexts == "truth":
        if not data.shift_days:
            raise DataError("contexts = truth needs a synthetic dataset with known shifts")
        return list(data.shift_days)
    days, X = make_windows(data)
    return detect(X, cfg.detect, seed=seed, days=days).contexts


# --- writers ---------------------------------------------------------------


def write_manifest(path, items: dict) -> None:
    with open(path, "w") as fh:
        for k, v in items.items():
            if isinstance(v, (list, tuple)):
                v = ",".join(str(x) for x in v)
            fh.write(f"{k} = {v}\n")


def read_manifest(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out


def _rows_for(res: RunResult):
    for p, w in enumerate(res.weights):
        for j, day in enumerate(res.days):
            r = res.daily[p, j]
            yield [res.seed, int(day), p, repr(float(r[0])), repr(float(r[1])),
                   int(res.day_context[j]), int(bool(res.finetuned[j]))]


def write_run_outputs(out: Path, results: list[RunResult], cfg: RunConfig) -> list[dict]:
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    with open(out / "rewards.csv", "w", newline="") as fr, open(out / "solutions.csv", "w", newline="") as fs:
        wr, ws = csv.writer(fr), csv.writer(fs)
        wr.writerow(REWARD_FIELDS)
        ws.writerow(SOLUTION_FIELDS)
        for res in results:
            wr.writerows(_rows_for(res))
            for p, (w, v) in enumerate(zip(res.weights, res.annual)):
                ws.writerow([res.seed, p, repr(float(w[0])), repr(float(w[1])),
                             repr(float(v[0])), repr(float(v[1]))])
            rows.append(metrics_row(cfg.method, res.seed, report(res.solutions())))
            if res.quality:
                write_quality_csv(out / f"quality_seed{res.seed}.csv", res.quality)
    write_metrics(out / "metrics.csv", rows)
    return rows


def check_budget(cfg: RunConfig, res: RunResult, n_contexts: int, n_days: int) -> list[str]:
    """Compare a run's manifest with the method's ledger entitlement; mismatches only warn."""
    kind = cfg.kind
    if kind.startswith("rule"):
        return []
    want_data, want_steps = ledger(kind, cfg.meta, n_contexts, n_days)
    msgs = []
    got_data = res.manifest.get("data_volume")
    got_steps = res.manifest.get("training_budget")
    if got_data != want_data:
        msgs.append(f"data volume {got_data} differs from ledger {want_data}")
    if got_steps != want_steps:
        msgs.append(f"training budget {got_steps} differs from ledger {want_steps}")
    return msgs


# --- commands --------------------------------------------------------------


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    updates = {}
    if getattr(args, "method", None):
        updates["method"] = args.method
    if getattr(args, "seed", None) is not None:
        updates["seeds"] = tuple(args.seed)
    if getattr(args, "dataset", None):
        updates["dataset"] = args.dataset
    if getattr(args, "synth_spec", None):
        updates["regimes"] = parse_regimes(args.synth_spec)
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    return cfg


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data = synth_year(cfg.seeds[0], cfg.regimes, n_days=cfg.n_days, peak_kw=cfg.peak_kw)
    data.to_csv(out)
    print(f"wrote {len(data)} hourly records to {out} (shifts on days {list(data.shift_days)})")
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _config(args)
    seed = cfg.seeds[0]
    data = resolve_dataset(cfg, seed)
    days, X = make_windows(data)
    result = detect(X, cfg.detect, seed=seed, days=days)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    segs = result.segments()
    write_contexts_csv(out / "contexts.csv", segs)
    write_losses_csv(out / "losses.csv", result)
    thr = np.where(np.isfinite(result.thresholds), result.thresholds, np.nan)
    svg = svgplot.line_plot({"loss": (result.days, result.losses), "threshold": (result.days, thr)},
                            title="Reconstruction loss", xlabel="day", ylabel="MSE")
    svgplot.save(out / "losses.svg", svg)
    print(f"{len(segs)} context(s) starting on days {result.contexts}")
    return EXIT_OK


def run_one(cfg: RunConfig, seed: int) -> tuple[RunResult, int, int]:
    data = resolve_dataset(cfg, seed)
    env = ApplianceEnv(data, cfg.env)
    starts = resolve_contexts(cfg, data, seed)
    segments = segments_from_starts(starts, int(data.days[-1]))
    kind = cfg.kind
    agent_cfg = cfg.agent_config()
    if kind.startswith("rule"):
        res = rule_run(int(kind[-1]), env, segments, seed)
    elif kind in ("r-gpi", "finetune-r-gpi"):
        res = reptile_run(env, segments, cfg.meta, agent_cfg, seed, finetune=kind == "finetune-r-gpi",
                          method=cfg.method)
    else:
        res = baseline_run(kind, env, segments, cfg.meta, agent_cfg, seed, method=cfg.method)
    return res, len(segments), data.n_days


def cmd_run(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    results, warnings_seen = [], []
    for seed in cfg.seeds:
        res, n_ctx, n_days = run_one(cfg, seed)
        for msg in check_budget(cfg, res, n_ctx, n_days):
            warnings.warn(f"{cfg.method} seed {seed}: {msg}", stacklevel=1)
            warnings_seen.append(msg)
        results.append(res)
        log.info("%s seed %d done", cfg.method, seed)
    rows = write_run_outputs(out, results, cfg)
    first = results[0].manifest
    manifest = {
        "method": cfg.method,
        "seeds": list(cfg.seeds),
        "backend": nc.BACKEND,
        "kind": cfg.kind,
        "variant": cfg.variant,
        "data_volume": first.get("data_volume"),
        "training_budget": first.get("training_budget"),
        "contexts": ",".join(str(int(d)) for d in results[0].days[np.r_[0, np.flatnonzero(
            np.diff(results[0].day_context)) + 1]]),
        "budget_warnings": len(warnings_seen),
    }
    for key in ("finetune_events", "finetune_kept", "restart_hash", "restart_hashes_ok", "meta_steps"):
        if key in first:
            manifest[key] = first[key]
    write_manifest(out / "manifest.txt", manifest)
    (out / "config.ini").write_text(cfg.to_text())
    for r in rows:
        print(f"{r['method']} seed {r['seed']}: EU {r['eu']:.3f} bill {r['bill']:.2f} comfort {r['comfort']:.0f}")
    return EXIT_OK


# --- report ----------------------------------------------------------------


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in METRIC_FIELDS[2:]:
            r[k] = float(r[k]) if r[k] != "" else None
    return rows


def read_run_solutions(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]


def summarize(runs: dict[str, list[dict]]) -> dict[str, dict]:
    """Mean across seeds per method for each summary column."""
    out = {}
    for method, rows in runs.items():
        out[method] = {}
        for col in HIGHER_BETTER:
            vals = [r[col] for r in rows if r[col] is not None]
            out[method][col] = float(np.mean(vals)) if vals else None
    return out


def best_per_column(summary: dict[str, dict]) -> dict[str, set[str]]:
    """Methods holding the best mean in each column; exact ties all count."""
    best = {}
    for col, higher in HIGHER_BETTER.items():
        vals = {m: v[col] for m, v in summary.items() if v[col] is not None}
        if vals:
            top = max(vals.values()) if higher else min(vals.values())
            best[col] = {m for m, x in vals.items() if x == top}
    return best


def improvement_rows(summary: dict[str, dict]) -> list[list]:
    rows = []
    for cand in summary:
        for base in summary:
            if cand == base:
                continue
            for col in HIGHER_BETTER:
                a, b = summary[cand][col], summary[base][col]
                val = improvement(a, b) if a is not None and b is not None else float("nan")
                rows.append([cand, base, col, repr(val)])
    return rows


def cmd_report(args) -> int:
    dirs = [Path(d) for d in args.run_dirs]
    if len(dirs) < 2:
        raise UsageError("report needs at least two run directories")
    runs, sols = {}, {}
    for d in dirs:
        for name in ("metrics.csv", "solutions.csv", "manifest.txt"):
            if not (d / name).exists():
                raise DataError(f"{d} has no {name}")
        rows = read_metrics(d / "metrics.csv")
        if not rows:
            raise DataError(f"{d / 'metrics.csv'} is empty")
        method = rows[0]["method"]
        if method in runs:
            method = f"{method}@{d.name}"
        runs[method] = rows
        sols[method] = read_run_solutions(d / "solutions.csv")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(runs)
    best = best_per_column(summary)

    cols = list(HIGHER_BETTER)
    with open(out / "summary.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["method", *cols, "best"])
        for m, v in summary.items():
            marks = ";".join(c for c in cols if m in best.get(c, ()))
            wr.writerow([m, *("" if v[c] is None else repr(v[c]) for c in cols), marks])
    arrows = {c: "up" if HIGHER_BETTER[c] else "down" for c in cols}
    lines = ["method".ljust(24) + "".join(f"{c} ({arrows[c]})".rjust(18) for c in cols)]
    for m, v in summary.items():
        cells = []
        for c in cols:
            txt = "-" if v[c] is None else f"{v[c]:.2f}"
            cells.append((txt + ("*" if m in best.get(c, ()) else " ")).rjust(18))
        lines.append(m.ljust(24) + "".join(cells))
    lines.append("* best in column")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")

    with open(out / "improvement.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["candidate", "baseline", "metric", "percent"])
        wr.writerows(improvement_rows(summary))

    with open(out / "eu_box.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["method", "seed", "eu"])
        for m, rows in runs.items():
            for r in rows:
                wr.writerow([m, r["seed"], repr(r["eu"])])
    svgplot.save(out / "eu_box.svg", svgplot.box_plot({m: [r["eu"] for r in rows] for m, rows in runs.items()},
                                                      title="Expected utility across seeds", ylabel="EU"))

    pf_groups, full_groups = {}, {}
    with open(out / "pf_points.csv", "w", newline="") as fp, open(out / "full_solutions.csv", "w", newline="") as ff:
        wp, wf = csv.writer(fp), csv.writer(ff)
        wp.writerow(["method", "seed", "policy_id", "v_0", "v_1"])
        wf.writerow(["method", "seed", "policy_id", "v_0", "v_1"])
        for m, rows in sols.items():
            pf_all, full_all = [], []
            for seed in sorted({r["seed"] for r in rows}):
                sub = [Solution(np.array([r["v_0"], r["v_1"]]), int(r["policy_id"])) for r in rows
                       if r["seed"] == seed]
                for s in sub:
                    wf.writerow([m, int(seed), s.policy_id, repr(float(s.value[0])), repr(float(s.value[1]))])
                    full_all.append(s.value)
                for s in pareto_filter(sub):
                    wp.writerow([m, int(seed), s.policy_id, repr(float(s.value[0])), repr(float(s.value[1]))])
                    pf_all.append(s.value)
            pf_groups[m] = np.array(pf_all).reshape(-1, 2)
            full_groups[m] = np.array(full_all).reshape(-1, 2)
    svgplot.save(out / "pf.svg", svgplot.scatter_plot(pf_groups, title="Pareto fronts",
                                                      xlabel="negative cost", ylabel="comfort"))
    svgplot.save(out / "full_solutions.svg", svgplot.scatter_plot(full_groups, title="All solutions",
                                                                  xlabel="negative cost", ylabel="comfort"))
    print("\n".join(lines))
    return EXIT_OK


# --- entry point -----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="homemorl", description="Multi-objective appliance scheduling experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, method=False):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--seed", type=int, nargs="+", help="seed(s); overrides the config")
        sp.add_argument("--dataset", help="hourly CSV dataset; default is a synthetic year")
        sp.add_argument("--synth-spec", help="synthetic regimes as start:scale:noise, ...")
        if method:
            sp.add_argument("--method", help=f"one of: {', '.join(METHODS)}")

    s = sub.add_parser("synth", help="write a synthetic dataset CSV")
    common(s)
    s.add_argument("--out", required=True, help="output CSV path")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("detect", help="detect context shifts")
    common(s)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("run", help="train and evaluate one method over the year")
    common(s, method=True)
    s.add_argument("--out", required=True, help="run directory")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="compare completed runs")
    s.add_argument("run_dirs", nargs="+")
    s.add_argument("--out", required=True, help="report directory")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "method", None):
            method_plan(args.method)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"homemorl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"homemorl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (nc.NumericError, FloatingPointError) as exc:
        print(f"homemorl: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

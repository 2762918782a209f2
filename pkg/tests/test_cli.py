import csv
import math

import numpy as np
import pytest

from homemorl import cli
from homemorl.config import (METHODS, ConfigError, RunConfig, format_regimes, load_config, method_plan,
                             parse_config, parse_regimes)
from homemorl.svgplot import box_plot, box_stats, line_plot, scatter_plot

TINY = """
[run]
seeds = 0
contexts = truth

[synth]
regimes = 1:1.0:0.05, 8:2.0:0.05
n_days = 14

[agent]
hidden = 16
batch_size = 16

[meta]
outer_lr = 1.0
inner_steps = 24
n_epochs = 1
finetune_steps = 12
base_steps = 48
base_finetune_steps = 12
month_days = 5
n_eval_weights = 5

[detect]
epochs = 20
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY)
    return path


def test_method_enum_and_plan():
    assert len(METHODS) == 14
    assert method_plan("finetune-r-gpi-pd") == ("finetune-r-gpi", "PD")
    assert method_plan("gpi-ls-month") == ("month", "LS")
    assert method_plan("finetune-gpi-ls") == ("finetune_month", "LS")
    assert method_plan("joint-gpi-pd") == ("joint", "PD")
    assert method_plan("gpi-pd-year") == ("year", "PD")
    assert method_plan("rule2") == ("rule2", "-")
    with pytest.raises(ConfigError, match="r-gpi-ls"):
        method_plan("bogus")


def test_config_roundtrip_and_overrides():
    cfg = parse_config(TINY)
    assert cfg.agent.hidden == (16,) and cfg.meta.n_eval_weights == 5
    assert cfg.regimes == ((1, 1.0, 0.05), (8, 2.0, 0.05))
    again = parse_config(cfg.to_text())
    assert again == cfg
    assert parse_config(RunConfig().to_text()) == RunConfig()


@pytest.mark.parametrize("text", [
    "[agent]\nnope = 1\n",
    "[weird]\na = 1\n",
    "[agent]\nlr = fast\n",
    "[run]\nmethod = nope\n",
    "[meta]\ninner_steps = 2.5\n",
    "[synth]\nregimes = 1:2\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_regime_format():
    r = ((1, 1.0, 0.05), (120, 2.0, 0.05))
    assert parse_regimes(format_regimes(r)) == r


def test_every_hyperparameter_representable():
    text = RunConfig().to_text()
    for key in ("hidden", "lr", "buffer_size", "target_update", "outer_lr", "inner_steps",
                "contexts_per_epoch", "finetune_steps", "sub_window", "epochs", "rolling", "gamma"):
        assert f"\n{key} = " in text


def test_svg_primitives_deterministic():
    a = line_plot({"loss": ([1, 2, 3], [0.1, 0.3, 0.2]), "thr": ([1, 2, 3], [np.nan, 0.5, 0.5])})
    assert a == line_plot({"loss": ([1, 2, 3], [0.1, 0.3, 0.2]), "thr": ([1, 2, 3], [np.nan, 0.5, 0.5])})
    assert a.startswith("<svg") and a.count("<polyline") == 2
    s = scatter_plot({"x": np.array([[0, 1], [1, 0]])})
    assert s.count("<circle") == 2
    b = box_plot({"m": [1, 2, 3, 4, 5]})
    assert "<rect" in b
    assert box_stats([1, 2, 3, 4, 5]) == (1, 2, 3, 4, 5)
    with pytest.raises(ValueError):
        box_stats([])


def test_rule1_zero_world_bill(tmp_path):
    path = tmp_path / "zero.ini"
    path.write_text("[run]\nmethod = rule1\nseeds = 0\ncontexts = 1\n[synth]\nregimes = 1:0.0:0.0\n")
    cfg = load_config(path)
    data = cli.resolve_dataset(cfg, 0)
    data.demand.flags.writeable = True
    data.demand[:] = 0.0
    data.to_csv(tmp_path / "zero.csv")
    out = tmp_path / "run"
    assert cli.main(["run", "--config", str(path), "--dataset", str(tmp_path / "zero.csv"),
                     "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "metrics.csv")))
    assert float(rows[0]["bill"]) == pytest.approx(365 * 0.9108)
    assert float(rows[0]["comfort"]) == 1460


def test_run_outputs_and_manifest(tmp_path, tiny_cfg):
    out = tmp_path / "r"
    assert cli.main(["run", "--config", str(tiny_cfg), "--method", "finetune-r-gpi-ls", "--out", str(out)]) == 0
    for name in ("metrics.csv", "solutions.csv", "manifest.txt", "rewards.csv", "config.ini"):
        assert (out / name).exists()
    man = cli.read_manifest(out / "manifest.txt")
    assert man["method"] == "finetune-r-gpi-ls"
    assert int(man["training_budget"]) == 1 * 2 * 24 + 2 * 12
    assert man["budget_warnings"] == "0"
    with open(out / "rewards.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == cli.REWARD_FIELDS
    assert len(rows) == 5 * 14
    assert {r["context_id"] for r in rows} == {"1", "2"}


def test_budget_mismatch_only_warns(tmp_path, tiny_cfg):
    cfg = load_config(tiny_cfg)
    res, n_ctx, n_days = cli.run_one(cfg, 0)
    res.manifest["training_budget"] += 1
    msgs = cli.check_budget(cfg, res, n_ctx, n_days)
    assert len(msgs) == 1 and "training budget" in msgs[0]


def test_detect_command(tmp_path):
    out = tmp_path / "d"
    assert cli.main(["detect", "--out", str(out), "--seed", "0"]) == 0
    segs = list(csv.DictReader(open(out / "contexts.csv")))
    assert len(segs) == 3
    for seg, truth in zip(segs, (1, 120, 240)):
        assert abs(int(seg["start_day"]) - truth) <= 2
    first = (out / "contexts.csv").read_bytes(), (out / "losses.csv").read_bytes(), (out / "losses.svg").read_bytes()
    out2 = tmp_path / "d2"
    cli.main(["detect", "--out", str(out2), "--seed", "0"])
    assert first == ((out2 / "contexts.csv").read_bytes(), (out2 / "losses.csv").read_bytes(),
                     (out2 / "losses.svg").read_bytes())


def test_detect_stationary(tmp_path):
    out = tmp_path / "d"
    assert cli.main(["detect", "--out", str(out), "--synth-spec", "1:1.0:0.0"]) == 0
    assert len(list(csv.DictReader(open(out / "contexts.csv")))) == 1


def test_synth_command(tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path / "y.csv"), "--seed", "4"]) == 0
    assert len((tmp_path / "y.csv").read_text().splitlines()) == 1 + 365 * 24


def test_report(tmp_path, tiny_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["run", "--config", str(tiny_cfg), "--method", "rule1", "--out", str(a)])
    cli.main(["run", "--config", str(tiny_cfg), "--method", "rule2", "--out", str(b)])
    before = (a / "metrics.csv").read_bytes()
    rep = tmp_path / "rep"
    assert cli.main(["report", str(a), str(b), "--out", str(rep)]) == 0
    assert (a / "metrics.csv").read_bytes() == before
    for name in ("summary.csv", "summary.txt", "improvement.csv", "eu_box.csv", "eu_box.svg",
                 "pf_points.csv", "pf.svg", "full_solutions.csv", "full_solutions.svg"):
        assert (rep / name).exists()
    summary = list(csv.DictReader(open(rep / "summary.csv")))
    # best marks agree with a re-scan of the emitted values
    for col, higher in cli.HIGHER_BETTER.items():
        vals = [(float(r[col]), r["method"]) for r in summary if r[col] != ""]
        if not vals:
            continue
        top = max(vals)[0] if higher else min(vals)[0]
        marked = {r["method"] for r in summary if col in r["best"].split(";")}
        assert marked == {m for v, m in vals if v == top}
    imp = {(r["candidate"], r["baseline"], r["metric"]): float(r["percent"])
           for r in csv.DictReader(open(rep / "improvement.csv"))}
    eu = {r["method"]: float(r["eu"]) for r in summary}
    assert imp[("rule1", "rule2", "eu")] == pytest.approx((eu["rule1"] - eu["rule2"]) / eu["rule2"] * 100)
    assert imp[("rule2", "rule1", "eu")] == pytest.approx((eu["rule2"] - eu["rule1"]) / eu["rule1"] * 100)


def test_report_identical_runs_zero_improvement(tmp_path, tiny_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        cli.main(["run", "--config", str(tiny_cfg), "--method", "rule1", "--out", str(d)])
    rep = tmp_path / "rep"
    assert cli.main(["report", str(a), str(b), "--out", str(rep)]) == 0
    for r in csv.DictReader(open(rep / "improvement.csv")):
        v = float(r["percent"])
        assert v == 0.0 or math.isnan(v)


def test_exit_codes(tmp_path, tiny_cfg):
    assert cli.main(["run", "--method", "nope", "--out", str(tmp_path)]) == 2
    assert cli.main([]) == 2
    assert cli.main(["report", str(tmp_path), "--out", str(tmp_path / "x")]) == 2
    assert cli.main(["report", str(tmp_path), str(tmp_path / "missing"), "--out", str(tmp_path / "x")]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("day,hour\n1,0\n")
    assert cli.main(["detect", "--dataset", str(bad), "--out", str(tmp_path / "d")]) == 3
    assert cli.main(["run", "--config", str(tmp_path / "absent.ini"), "--out", str(tmp_path / "r")]) == 2


def test_numeric_failure_exit_code(tmp_path, tiny_cfg, monkeypatch):
    def boom(cfg, seed):
        raise cli.nc.NumericError("non-finite loss")

    monkeypatch.setattr(cli, "run_one", boom)
    assert cli.main(["run", "--config", str(tiny_cfg), "--out", str(tmp_path / "r")]) == 4


def test_pd_run_writes_quality_log(tmp_path, tiny_cfg):
    cfg = tmp_path / "pd.ini"
    cfg.write_text(TINY.replace("batch_size = 16", "batch_size = 16\ngate_every = 4\nholdout_fraction = 0.3"))
    out = tmp_path / "pd"
    assert cli.main(["run", "--config", str(cfg), "--method", "r-gpi-pd", "--out", str(out)]) == 0
    with open(out / "quality_seed0.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["step", "member", "feature", "mse", "disagreement"]
    steps = [int(r["step"]) for r in rows]
    assert steps == sorted(steps)
    assert {"mean", "0"} <= {r["member"] for r in rows}
    assert all(math.isfinite(float(r["mse"])) for r in rows)


def test_best_marks_include_ties():
    summary = {"a": {"eu": 1.0, "hv": 2.0, "sp": None, "bill": 5.0, "comfort": 3.0},
               "b": {"eu": 1.0, "hv": 1.0, "sp": None, "bill": 4.0, "comfort": 3.0}}
    best = cli.best_per_column(summary)
    assert best == {"eu": {"a", "b"}, "hv": {"a"}, "bill": {"b"}, "comfort": {"a", "b"}}

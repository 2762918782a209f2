"""Run configuration read from plain ``key = value`` files with section headers.

Sections map onto the dataclasses they configure::

    [run]      method, seeds, contexts, dataset
    [synth]    regimes, n_days, peak_kw
    [env]      EnvConfig fields
    [agent]    AgentConfig fields
    [meta]     MetaConfig fields
    [detect]   DetectorConfig fields

Values are coerced to the type of the field's default. Tuples are written
comma-separated, booleans as true/false.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from homemorl.agent import AgentConfig
from homemorl.detect import DetectorConfig
from homemorl.env import EnvConfig
from homemorl.meta import MetaConfig

METHODS = (
    "gpi-ls-month", "gpi-pd-month",
    "finetune-gpi-ls", "finetune-gpi-pd",
    "gpi-ls-year", "gpi-pd-year",
    "joint-gpi-ls", "joint-gpi-pd",
    "r-gpi-ls", "r-gpi-pd",
    "finetune-r-gpi-ls", "finetune-r-gpi-pd",
    "rule1", "rule2",
)

DEFAULT_REGIMES = ((1, 1.0, 0.05), (120, 2.0, 0.05), (240, 0.5, 0.05))

SECTIONS = {"env": EnvConfig, "agent": AgentConfig, "meta": MetaConfig, "detect": DetectorConfig}


class ConfigError(ValueError):
    pass


def method_plan(method: str) -> tuple[str, str]:
    """Split a method name into ``(kind, variant)``.

    ``kind`` is one of month, finetune_month, year, joint, r-gpi,
    finetune-r-gpi, rule1, rule2. ``variant`` is LS, PD or ``-`` for rules.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from: {', '.join(METHODS)}")
    if method.startswith("rule"):
        return method, "-"
    variant = "PD" if "-pd" in method else "LS"
    if method.startswith("finetune-r-gpi"):
        kind = "finetune-r-gpi"
    elif method.startswith("r-gpi"):
        kind = "r-gpi"
    elif method.startswith("finetune-gpi"):
        kind = "finetune_month"
    elif method.startswith("joint"):
        kind = "joint"
    elif method.endswith("-year"):
        kind = "year"
    else:
        kind = "month"
    return kind, variant


def parse_regimes(text: str) -> tuple[tuple[int, float, float], ...]:
    """``"1:1.0:0.05, 120:2.0:0.05"`` to ``((1, 1.0, 0.05), (120, 2.0, 0.05))``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        bits = part.split(":")
        if len(bits) != 3:
            raise ConfigError(f"regime {part!r} must be start:scale:noise")
        try:
            out.append((int(bits[0]), float(bits[1]), float(bits[2])))
        except ValueError:
            raise ConfigError(f"regime {part!r} is not numeric") from None
    if not out:
        raise ConfigError("empty regime list")
    return tuple(out)


def format_regimes(regimes) -> str:
    return ", ".join(f"{s}:{k!r}:{n!r}" for s, k, n in regimes)


def _coerce(raw: str, default, name: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            val = float(raw.replace("_", ""))
            if not val.is_integer():
                raise ValueError
            return int(val)
        if isinstance(default, float) or default is None:
            return None if raw.lower() == "none" else float(raw)
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(x) for x in items)
            return tuple(int(x) for x in items)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {name}") from None


def apply_overrides(obj, values: dict, section: str):
    """Return a copy of dataclass ``obj`` with string ``values`` coerced onto it."""
    known = {f.name: f for f in dataclasses.fields(obj)}
    kw = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]; known: {', '.join(sorted(known))}")
        kw[key] = _coerce(raw, getattr(obj, key), f"{section}.{key}")
    try:
        return dataclasses.replace(obj, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


@dataclass
class RunConfig:
    method: str = "r-gpi-ls"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    contexts: str = "detect"
    dataset: str | None = None
    regimes: tuple[tuple[int, float, float], ...] = DEFAULT_REGIMES
    n_days: int = 365
    peak_kw: float = 1.0
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    meta: MetaConfig = field(default_factory=MetaConfig)
    detect: DetectorConfig = field(default_factory=DetectorConfig)

    def __post_init__(self):
        method_plan(self.method)
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    @property
    def kind(self) -> str:
        return method_plan(self.method)[0]

    @property
    def variant(self) -> str:
        return method_plan(self.method)[1]

    def agent_config(self) -> AgentConfig:
        return dataclasses.replace(self.agent, variant=self.variant if self.variant != "-" else "LS")

    def context_starts(self) -> list[int] | None:
        """Explicit start days, or ``None`` for ``detect``/``truth``."""
        if self.contexts in ("detect", "truth"):
            return None
        try:
            return sorted(int(x) for x in self.contexts.split(",") if x.strip())
        except ValueError:
            raise ConfigError(f"contexts must be detect, truth or a day list, got {self.contexts!r}") from None

    def to_text(self) -> str:
        """Render as a config file that :func:`load_config` reads back."""
        lines = ["[run]", f"method = {self.method}", f"seeds = {', '.join(map(str, self.seeds))}",
                 f"contexts = {self.contexts}"]
        if self.dataset:
            lines.append(f"dataset = {self.dataset}")
        lines += ["", "[synth]", f"regimes = {format_regimes(self.regimes)}",
                  f"n_days = {self.n_days}", f"peak_kw = {self.peak_kw!r}"]
        for name in SECTIONS:
            lines += ["", f"[{name}]"]
            for f in dataclasses.fields(getattr(self, name)):
                v = getattr(getattr(self, name), f.name)
                if isinstance(v, tuple):
                    v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
                elif isinstance(v, bool):
                    v = str(v).lower()
                elif isinstance(v, float):
                    v = repr(v)
                lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    unknown = set(cp.sections()) - {"run", "synth", *SECTIONS}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    kw = {}
    if cp.has_section("run"):
        run = dict(cp["run"])
        for key in list(run):
            if key not in ("method", "seeds", "contexts", "dataset"):
                raise ConfigError(f"unknown key {key!r} in [run]")
        if "method" in run:
            kw["method"] = run["method"].strip()
        if "seeds" in run:
            kw["seeds"] = _coerce(run["seeds"], (0,), "run.seeds")
        if "contexts" in run:
            kw["contexts"] = run["contexts"].strip()
        if run.get("dataset"):
            kw["dataset"] = run["dataset"].strip()
    if cp.has_section("synth"):
        syn = dict(cp["synth"])
        for key in syn:
            if key not in ("regimes", "n_days", "peak_kw"):
                raise ConfigError(f"unknown key {key!r} in [synth]")
        if "regimes" in syn:
            kw["regimes"] = parse_regimes(syn["regimes"])
        if "n_days" in syn:
            kw["n_days"] = _coerce(syn["n_days"], 365, "synth.n_days")
        if "peak_kw" in syn:
            kw["peak_kw"] = _coerce(syn["peak_kw"], 1.0, "synth.peak_kw")
    for name, cls in SECTIONS.items():
        base = cls()
        kw[name] = apply_overrides(base, dict(cp[name]), name) if cp.has_section(name) else base
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)

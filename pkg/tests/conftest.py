import numpy as np
import pytest

from homemorl.agent import AgentConfig
from homemorl.env import ApplianceEnv, synth_year
from homemorl.meta import MetaConfig

THREE_REGIMES = ((1, 1.0, 0.05), (120, 2.0, 0.05), (240, 0.5, 0.05))


def desk_agent_config(**kw) -> AgentConfig:
    base = dict(hidden=(64, 64), batch_size=64, lr=3e-4)
    base.update(kw)
    return AgentConfig(**base)


def desk_meta_config(**kw) -> MetaConfig:
    base = dict(outer_lr=1.0, finetune_eps_start=0.05)
    base.update(kw)
    return MetaConfig(**base)


def toy_agent_config(**kw) -> AgentConfig:
    base = dict(hidden=(64, 64), batch_size=32, lr=1e-3, steps_per_weight=100, target_update=50)
    base.update(kw)
    return AgentConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_year():
    return synth_year(0, [(1, 1.0, 0.05), (20, 2.0, 0.05)], n_days=40)


@pytest.fixture(scope="session")
def small_env(small_year):
    return ApplianceEnv(small_year)


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, ok: bool | None, detail: str) -> None:
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    ACCEPTANCE_LINES.append(f"criterion {number:>2}: {status}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)

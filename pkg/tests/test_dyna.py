import numpy as np
import pytest

from homemorl import numcore as nc
from homemorl.agent import AgentConfig, EpisodeSpec, GPIAgent, PrioritizedReplay, ReplayBuffer, make_qnet
from homemorl.dyna import (DynaComponent, DynamicsNet, Ensemble, EnvModel, PrioritizedEntry, imagine,
                           model_quality, model_train_step, priority_update, sampling_distribution,
                           write_quality_csv)
from homemorl.env import ApplianceEnv, synth_year
from homemorl.toy import ToyMOMDP
from scenarios import fill, gate_shift, random_transitions


def toy_batch(env, n, rng):
    S = rng.integers(0, 2, size=(n, 1)).astype(float)
    A = rng.integers(0, 2, size=n)
    S2, R, done = env.step_batch(S, A, np.zeros(n))
    return env.features(S), A, R, env.features(S2), done


def test_priority_examples():
    e = PrioritizedEntry(("t",), 1.0)
    assert priority_update(e, 0.0).priority == pytest.approx(1e-3 ** 0.6)
    p1 = priority_update(e, 10.0).priority
    p2 = priority_update(e, 20.0).priority
    assert p2 / p1 == pytest.approx(2 ** 0.6, rel=1e-3)
    with pytest.raises(nc.NumericError):
        priority_update(e, np.nan)
    with pytest.raises(ValueError):
        PrioritizedEntry(("t",), 0.0)
    with pytest.raises(ValueError):
        PrioritizedEntry(("t",), 1.0, synthetic=True)
    np.testing.assert_allclose(sampling_distribution([2, 2, 2, 2]), 0.25)


def test_dynamics_learns_deterministic_env():
    env = ToyMOMDP()
    rng = np.random.default_rng(0)
    net = DynamicsNet(2, 2, 2, (32, 32), rng, lr=3e-3)
    for _ in range(1500):
        net.train_step(*toy_batch(env, 32, rng))
    F, A, R, F2, done = toy_batch(env, 200, rng)
    P2, PR, pdone, _ = net.predict(F, A)
    assert np.mean((P2 - F2) ** 2) < 1e-3
    assert np.mean((PR - R) ** 2) < 1e-3
    assert np.mean(pdone == done) == 1.0


def test_identical_members_identical_losses():
    env = ToyMOMDP()
    batch = toy_batch(env, 16, np.random.default_rng(1))
    a = DynamicsNet(2, 2, 2, (8,), np.random.default_rng(5))
    b = DynamicsNet(2, 2, 2, (8,), np.random.default_rng(5))
    assert [a.train_step(*batch) for _ in range(3)] == [b.train_step(*batch) for _ in range(3)]


def test_done_bit_learned_on_stationary_context():
    data = synth_year(0, [(1, 1.0, 0.02)], n_days=30)
    env = ApplianceEnv(data)
    rng = np.random.default_rng(0)
    buf = fill(ReplayBuffer(10_000, 4, 2), random_transitions(env, data.days[:25], rng))
    ens = Ensemble([DynamicsNet(4, 2, 2, (64, 64), rng)])
    for _ in range(2000):
        model_train_step(ens, buf.get(buf.sample_idx(rng, 64)), rng)
    hold = random_transitions(env, data.days[25:], rng)
    assert model_quality(ens, hold).done_accuracy > 0.99


def test_model_train_step_rejects_empty():
    ens = Ensemble([DynamicsNet(2, 2, 2, (4,), np.random.default_rng(0))])
    empty = tuple(np.zeros((0, k)) for k in (2,)) + (np.zeros(0, int), np.zeros((0, 2)), np.zeros((0, 2)),
                                                    np.zeros(0, bool))
    with pytest.raises(ValueError):
        model_train_step(ens, empty, np.random.default_rng(0))


def test_imagine_counts_and_perfect_model():
    env = ToyMOMDP()
    rng = np.random.default_rng(0)
    replay = fill(ReplayBuffer(100, 2, 2), toy_batch(env, 20, rng))
    qnet = make_qnet(2, 2, 2, (8,), rng)
    M = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    ens = Ensemble([EnvModel(env)])
    assert imagine(ens, qnet, M, replay, rng, 10, 0) == []
    entries = imagine(ens, qnet, M, replay, rng, 10, 3)
    assert len(entries) <= 30
    for e in entries:
        f, a, r, f2, done = e.transition
        S = np.argmax(f)[None, None].astype(float)
        S2, R, D = env.step_batch(S, np.array([a]), np.zeros(1))
        np.testing.assert_array_equal(r, R[0])
        np.testing.assert_array_equal(f2, env.features(S2)[0])
        assert e.synthetic and e.priority == 1.0


def test_imagine_exogenous_copy(small_env):
    rng = np.random.default_rng(2)
    replay = fill(ReplayBuffer(1000, 4, 2), random_transitions(small_env, [1, 2], rng))
    ens = Ensemble([DynamicsNet(4, 2, 2, (8,), rng) for _ in range(2)])
    qnet = make_qnet(4, 2, 2, (8,), rng)
    entries = imagine(ens, qnet, [np.array([0.5, 0.5])], replay, rng, 5, 1, exogenous=(0, 3))
    real = {tuple(np.round(f2[[0, 3]], 12)) for f2 in replay.F2[:len(replay)]}
    for e in entries:
        assert tuple(np.round(e.transition[3][[0, 3]], 12)) in real
        assert e.priority >= 1.0


def test_quality_shift_and_validation():
    frac_a, frac_b, qa, qb = gate_shift(0)
    assert qa.state_mse < 0.01
    assert qb.feature_mse[3] > qa.feature_mse[3]
    assert frac_a == 0.5 and frac_b == 0.0
    ens = Ensemble([DynamicsNet(2, 2, 2, (4,), np.random.default_rng(0))])
    F = np.zeros((3, 2))
    with pytest.raises(ValueError):
        model_quality(ens, (F, np.zeros(3, int), np.zeros((3, 0)), F, np.zeros(3, bool)))


def test_synthetic_fraction_capped():
    env = ToyMOMDP()
    cfg = AgentConfig(hidden=(16,), batch_size=32, variant="PD", model_warmup=8, synthetic_cap=0.25)
    agent = GPIAgent(env, cfg, 0)
    agent.dyna = DynaComponent(env, cfg, agent.rng, Ensemble([EnvModel(env)]))
    agent.train(200, EpisodeSpec([0]))
    assert len(agent.dyna.synthetic) > 0
    batch, iw, handles = agent.dyna.sample_batch(agent.replay, 32, 0.4)
    assert agent.dyna.last_synthetic_fraction <= 0.25
    assert len(batch[0]) == 32 and len(iw) == 32


def test_pd_agent_runs_with_learned_ensemble():
    env = ToyMOMDP()
    cfg = AgentConfig(hidden=(16,), batch_size=16, variant="PD", model_warmup=8, ensemble_size=2,
                      model_hidden=(8,), gate_every=10)
    agent = GPIAgent(env, cfg, 0)
    agent.train(100, EpisodeSpec([0]))
    assert agent.grad_updates == 100
    assert isinstance(agent.replay, PrioritizedReplay)
    assert agent.dyna.quality_log


def test_write_quality_csv(tmp_path):
    write_quality_csv(tmp_path / "q.csv", [(10, "mean", "f0", 0.1, 0.0)])
    assert (tmp_path / "q.csv").read_text().splitlines()[0] == "step,member,feature,mse,disagreement"

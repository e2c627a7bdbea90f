import itertools

import numpy as np
import pytest

from rembo.errors import ConfigError
from rembo.envs import chicken, make_env
from rembo.learner import Learner, train_run
from rembo.learner import agent as agent_mod
from rembo.learner import train as train_mod
from rembo.learner.agent import make_rngs

from .conftest import small_cfg


def record_mechanism(monkeypatch):
    """Copy of both mechanism branches after every update."""
    trace = []
    original = agent_mod.Learner.update

    def update(self, batch):
        stats = original(self, batch)
        trace.append((self.nets["mech"].params.copy(), self.nets["opt"].params.copy()))
        return stats

    monkeypatch.setattr(agent_mod.Learner, "update", update)
    return trace


def mechanism_trajectory(cfg, monkeypatch):
    trace = record_mechanism(monkeypatch)
    train_run(cfg, 0, resume=False)
    monkeypatch.undo()
    return trace


@pytest.mark.parametrize("algo", ["dqn_t", "vdn", "ma_td3"])
def test_zero_weights_reduce_to_baseline(algo, tmp_path, monkeypatch):
    common = dict(algo=algo, total_steps=300, eval_interval=100)
    with pytest.warns(UserWarning, match="identical to the baseline"):
        rembo = small_cfg("chicken", tmp_path, rembo="true", alpha1="0", alpha2="0", train_deviation="false", **common)
    base = small_cfg("chicken", tmp_path, rembo="false", **common)
    a = mechanism_trajectory(rembo, monkeypatch)
    b = mechanism_trajectory(base, monkeypatch)
    assert len(a) == len(b) == 300
    for (ma, oa), (mb, ob) in zip(a, b):
        assert ma.tobytes() == mb.tobytes()
        # the td3 opt-out actor pairs the others with the deviator's greedy reply, so it follows q_opt
        if algo != "ma_td3":
            assert oa.tobytes() == ob.tobytes()


def test_incentive_terms_change_trajectory(tmp_path, monkeypatch):
    a = mechanism_trajectory(small_cfg("chicken", tmp_path, rembo="true", total_steps=100, eval_interval=100), monkeypatch)
    b = mechanism_trajectory(small_cfg("chicken", tmp_path, rembo="false", total_steps=100, eval_interval=100), monkeypatch)
    assert a[-1][0].tobytes() != b[-1][0].tobytes()


def test_rng_streams_independent():
    r = make_rngs(5)
    draws = {k: g.random(4) for k, g in r.items()}
    assert len({v.tobytes() for v in draws.values()}) == len(draws)
    again = make_rngs(5)
    for k, g in again.items():
        np.testing.assert_array_equal(g.random(4), draws[k])


@pytest.mark.parametrize("env,algo", [("chicken", "dqn_t"), ("stag_hunt", "ma_td3"), ("congestion3", "vdn")])
def test_deterministic_metrics(env, algo, tmp_path):
    files = []
    for k in range(2):
        cfg = small_cfg(env, tmp_path / str(k), algo=algo, total_steps=120, eval_interval=40, eval_episodes=2, eval_states=16, horizon=3)
        r = train_run(cfg, 3, resume=False)
        files.append((r.run_dir / "metrics.csv").read_bytes() + (r.run_dir / "final_estimates.csv").read_bytes())
    assert files[0] == files[1]


class Interrupt(Exception):
    pass


def test_resume_matches_uninterrupted(tmp_path, monkeypatch):
    kw = dict(total_steps=400, eval_interval=50, checkpoint_interval=100)
    full = train_run(small_cfg("chicken", tmp_path / "full", **kw), 0, resume=False)

    cfg = small_cfg("chicken", tmp_path / "cut", **kw)
    real = train_mod.evaluate

    def evaluate(learner, buffer, cfg_, seed, step, env):
        if step == 350:
            raise Interrupt
        return real(learner, buffer, cfg_, seed, step, env)

    monkeypatch.setattr(train_mod, "evaluate", evaluate)
    with pytest.raises(Interrupt):
        train_run(cfg, 0)
    monkeypatch.undo()
    assert train_mod.read_run_meta(train_mod.run_dir_for(cfg, 0))["step"] < 350
    resumed = train_run(cfg, 0)
    for name in ("metrics.csv", "final_estimates.csv", "exact.csv"):
        assert (resumed.run_dir / name).read_bytes() == (full.run_dir / name).read_bytes(), name
    np.testing.assert_array_equal(resumed.learner.nets["mech"].params, full.learner.nets["mech"].params)


def test_completed_run_is_not_retrained(tmp_path):
    cfg = small_cfg("chicken", tmp_path, total_steps=60, eval_interval=30)
    first = train_run(cfg, 0)
    again = train_run(cfg, 0)
    assert again.steps == first.steps
    np.testing.assert_array_equal(again.learner.nets["mech"].params, first.learner.nets["mech"].params)


def test_resume_rejects_changed_config(tmp_path):
    train_run(small_cfg("chicken", tmp_path, total_steps=60, eval_interval=30), 0)
    with pytest.raises(ConfigError, match="different configuration"):
        train_run(small_cfg("chicken", tmp_path, total_steps=60, eval_interval=30, lr_critic="0.01"), 0)
    # without resume the old run is simply replaced
    train_run(small_cfg("chicken", tmp_path, total_steps=60, eval_interval=30, lr_critic="0.01"), 0, resume=False)


def test_metrics_finite_and_nonnegative(tmp_path):
    import pandas as pd

    r = train_run(small_cfg("lane15", tmp_path, total_steps=100, eval_interval=25, eval_episodes=2), 0, resume=False)
    m = pd.read_csv(r.run_dir / "metrics.csv")
    assert np.isfinite(m.to_numpy()).all()
    assert (m["ic_loss"] >= 0).all() and (m["ir_loss"] >= 0).all()
    assert len(r.eval_buffer) == 4


class TestNetMechanism:
    @pytest.fixture
    def learner(self, tmp_path):
        return Learner(chicken(), small_cfg("chicken", tmp_path), seed=4)

    def test_table_matches_batch_actions(self, learner):
        mech = learner.mechanism()
        table = mech.table()
        state = chicken().reset(np.zeros(2, dtype=np.int64), np.random.default_rng(0))
        for theta in itertools.product(range(2), repeat=2):
            expect = mech.actions_batch(state[None], np.array([theta]))[0]
            np.testing.assert_array_equal(table.actions(theta), expect)
            for i in range(2):
                rest = [t for j, t in enumerate(theta) if j != i]
                full = mech.opt_out_actions_batch(state[None], i, np.array([theta]))[0]
                np.testing.assert_array_equal(table.opt_out_actions(i, rest), np.delete(full, i))

    def test_opt_out_ignores_own_type(self, learner):
        mech = learner.mechanism()
        s = np.zeros((2, 1), dtype=np.float32)
        for i in range(2):
            types = np.array([[0, 0], [0, 0]])
            types[1, i] = 1
            out = mech.opt_out_actions_batch(s, i, types)
            np.testing.assert_array_equal(out[0], out[1])

    def test_snapshot_params(self, learner):
        other = Learner(learner.env, learner.cfg, seed=11)
        snap = learner.mechanism(other.nets["mech"].params, other.nets["opt"].params).table()
        np.testing.assert_array_equal(snap.on_path_table, other.mechanism().table().on_path_table)

    def test_act_respects_epsilon(self, learner):
        s = np.zeros(1, dtype=np.float32)
        greedy = learner.recommend(s[None], np.array([[1, 0]]))[0]
        for _ in range(20):
            np.testing.assert_array_equal(learner.act(s, [1, 0], 0.0), greedy)
        acts = np.array([learner.act(s, [1, 0], 1.0) for _ in range(2000)])
        np.testing.assert_allclose(acts.mean(axis=0), 0.5, atol=0.05)


@pytest.mark.parametrize("env_id", ["lane15", "intersection"])
@pytest.mark.parametrize("algo", ["dqn_t", "ma_td3"])
def test_update_finite(env_id, algo, tmp_path):
    from rembo.replay import ReplayBuffer
    from rembo.game import sample_types

    cfg = small_cfg(env_id, tmp_path, algo=algo, agent_sample="1")
    env = make_env(env_id, horizon=3)
    ln = Learner(env, cfg, seed=0)
    rng = np.random.default_rng(0)
    buf = ReplayBuffer(100, env.spec.state_dim, env.spec.n_agents)
    for _ in range(3):
        types = sample_types(env.spec, rng)
        s = env.reset(types, rng)
        for t in range(4):
            a = ln.act(s, types, 0.5)
            s2, r = env.step(s, a, types, rng)
            buf.push(s, a, r, s2, types, t == 3)
            s = s2
    for _ in range(3):
        stats = ln.update(buf.sample(8, rng))
        assert all(np.isfinite(v) for v in stats.values())

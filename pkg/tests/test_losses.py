import numpy as np
import pytest

from rembo.envs import ENV_IDS, chicken, congestion3
from rembo.learner import (
    Learner,
    LossWeights,
    agent_rows,
    bellman_q_i,
    bellman_v_i,
    critic_td_loss,
    incentive_losses,
    loss_ic,
    loss_ir,
    self_masks,
    td_error_dqn,
    team_td_loss,
)
from rembo.nn.gumbel import sample_gumbel

from .conftest import ChainMDP, small_cfg
from .test_nn import assert_fd_close, fd_params

TEMP = 1.0


def learner_for(env, tmp_path, algo="dqn_t", **kw):
    cfg = small_cfg(env.id if env.id in ENV_IDS else "chicken", tmp_path, algo=algo, hidden="8,8", **kw)
    return Learner(env, cfg, seed=3, dtype=np.float64)


def set_constant_output(net, values):
    """Zero the last layer's weights so the network outputs ``values`` everywhere."""
    last = len(net.layers) - 1
    p = net.layer_params(last)
    p["weight"][...] = 0
    p["bias"][...] = values


def random_batch(env, rng, b):
    spec = env.spec
    types = np.stack([[rng.integers(spec.type_counts[i]) for i in range(spec.n_agents)] for _ in range(b)])
    states = np.stack([env.reset(t, rng) for t in types])
    actions = rng.integers(0, spec.max_actions, size=(b, spec.n_agents))
    nxt, rew = zip(*(env.step(s, a, t, rng) for s, a, t in zip(states, actions, types)))
    return states, types, actions, np.array(rew), np.stack(nxt)


def softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def hard_of(z):
    h = np.zeros_like(z)
    np.put_along_axis(h, z.argmax(axis=-1)[..., None], 1.0, axis=-1)
    return h


class RelaxedIncentives:
    """Independent evaluation of the IC/IR objectives for straight-through checks.

    At the anchor parameters the hard one-hots and the ReLU masks are
    recorded; the relaxed loss then uses ``hard0 + soft(phi) - soft(phi0)``
    with the masks frozen, whose exact gradient at ``phi0`` is the
    straight-through estimate.
    """

    def __init__(self, ln, feats, types, rows, w_ic, w_ir, batch, g_ic, g_o, g_m=None):
        self.ln, self.f, self.t, self.rows = ln, feats, types, rows
        self.w_ic, self.w_ir, self.b = w_ic, w_ir, batch
        self.g_ic, self.g_o, self.g_m = g_ic, g_o, g_m
        self.anchor = None
        self.anchor = self._eval()

    def _relax(self, key, z):
        soft = softmax(z / TEMP)
        if self.anchor is None:
            return hard_of(z), soft
        h0, s0 = self.anchor[key]
        return h0 + soft - s0, soft

    def _eval(self):
        ln, enc = self.ln, self.ln.enc
        nets = ln.nets
        rb, ri = self.rows
        r, n, T = len(rb), enc.n, enc.n_types
        own, others = self_masks(ri, n)
        rec = {}
        f, t = self.f[rb], self.t[rb]

        reported = np.repeat(t[:, None, :], T, axis=1)
        for k in range(T):
            reported[np.arange(r), k, ri] = k
        f_rt = np.repeat(f, T, axis=0)
        z = enc.heads(nets["mech"].forward(enc.build(f_rt, reported.reshape(r * T, n)))) + self.g_ic
        a_ic, rec["ic"] = self._relax("ic", z)
        q = nets["q_dev"].forward(
            enc.build(f_rt, np.repeat(t, T, axis=0), np.repeat(own, T, axis=0), a_ic * np.repeat(others, T, axis=0)[..., None], np.repeat(ri, T))
        ).reshape(r, T, -1)
        if self.g_m is None:
            a_true = a_ic.reshape(r, T, n, -1)[np.arange(r), t[np.arange(r), ri]]
        else:
            zm = enc.heads(nets["mech"].forward(enc.build(f, t))) + self.g_m
            a_true, rec["m"] = self._relax("m", zm)
        v = nets["v_dev"].forward(enc.build(f, t, own, a_true, ri))[:, 0]

        zo = enc.heads(nets["opt"].forward(enc.build(f, t, others, None, ri))) + self.g_o
        a_o, rec["o"] = self._relax("o", zo)
        qo = nets["q_opt"].forward(enc.build(f, t, None, a_o * others[..., None], ri))

        d_ic, d_ir = q - v[:, None, None], qo - v[:, None]
        if self.anchor is None:
            out = {"ic": (hard_of(z), rec["ic"]), "o": (hard_of(zo), rec["o"]), "mask_ic": d_ic > 0, "mask_ir": d_ir > 0}
            if self.g_m is not None:
                out["m"] = (hard_of(zm), rec["m"])
            self.values = (float((d_ic * (d_ic > 0)).sum() * self.w_ic / self.b), float((d_ir * (d_ir > 0)).sum() * self.w_ir / self.b))
            return out
        return float((d_ic * self.anchor["mask_ic"]).sum() * self.w_ic / self.b + (d_ir * self.anchor["mask_ir"]).sum() * self.w_ir / self.b)

    def grad(self, name):
        return fd_params(self.ln.nets[name], self._eval)


def gumbel(u):
    return -np.log(-np.log(u + 1e-20) + 1e-20)


def noise(shape, seed):
    return sample_gumbel(shape, np.random.default_rng(seed))


@pytest.fixture
def setup(tmp_path):
    env = chicken()
    ln = learner_for(env, tmp_path)
    rng = np.random.default_rng(0)
    # perturb critics so both loss terms have active and inactive entries
    for name in ("q_dev", "v_dev", "q_opt"):
        ln.nets[name].params += rng.normal(scale=0.5, size=ln.nets[name].size)
    states, types, actions, rew, nxt = random_batch(env, rng, 4)
    feats = ln.enc.features(states)
    rb, ri, _ = agent_rows(4, 2, 0, rng)
    return ln, feats, types, (rb, ri)


class TestStraightThroughGradients:
    def test_loss_ic(self, setup):
        ln, f, t, rows = setup
        r, T, n, A = len(rows[0]), 2, 2, 2
        ic, g = loss_ic(ln.enc, ln.nets["mech"], ln.nets["q_dev"], ln.nets["v_dev"], f, t, rows, 1.7, 4, TEMP, np.random.default_rng(11))
        oracle = RelaxedIncentives(ln, f, t, rows, 1.7, 0.0, 4, noise((r * T, n, A), 11), np.zeros((r, n, A)))
        assert ic == pytest.approx(oracle.values[0], rel=1e-12)
        assert ic > 0
        assert_fd_close(g, oracle.grad("mech"))

    def test_loss_ir(self, setup):
        ln, f, t, rows = setup
        r, n, A = len(rows[0]), 2, 2
        probe = np.random.default_rng(12)
        g_o = gumbel(probe.random((r, n, A)))
        g_m = gumbel(probe.random((r, n, A)))
        ir, gm, go = loss_ir(ln.enc, ln.nets["mech"], ln.nets["opt"], ln.nets["q_opt"], ln.nets["v_dev"], f, t, rows, 2.3, 4, TEMP, np.random.default_rng(12))
        oracle = RelaxedIncentives(ln, f, t, rows, 0.0, 2.3, 4, np.zeros((r * 2, n, A)), g_o, g_m)
        assert ir == pytest.approx(oracle.values[1], rel=1e-12)
        assert ir > 0
        assert_fd_close(gm, oracle.grad("mech"))
        assert_fd_close(go, oracle.grad("opt"))

    def test_combined(self, setup):
        ln, f, t, rows = setup
        r, T, n, A = len(rows[0]), 2, 2, 2
        probe = np.random.default_rng(13)
        u1 = probe.random((r * T, n, A))
        u2 = probe.random((r, n, A))
        ic, ir, gm, go = incentive_losses(
            ln.enc, ln.nets["mech"], ln.nets["opt"], ln.nets["q_dev"], ln.nets["v_dev"], ln.nets["q_opt"],
            f, t, rows, 1.5, 0.5, 4, TEMP, np.random.default_rng(13),
        )
        oracle = RelaxedIncentives(ln, f, t, rows, 1.5, 0.5, 4, gumbel(u1), gumbel(u2))
        assert (ic, ir) == pytest.approx(oracle.values, rel=1e-12)
        assert_fd_close(gm, oracle.grad("mech"))
        assert_fd_close(go, oracle.grad("opt"))

    def test_combined_reduces_to_ic(self, setup):
        ln, f, t, rows = setup
        args = (ln.enc, ln.nets["mech"])
        ic1, g1 = loss_ic(*args, ln.nets["q_dev"], ln.nets["v_dev"], f, t, rows, 3.0, 4, TEMP, np.random.default_rng(5))
        ic2, ir2, g2, go = incentive_losses(
            *args, ln.nets["opt"], ln.nets["q_dev"], ln.nets["v_dev"], ln.nets["q_opt"], f, t, rows, 3.0, 0.0, 4, TEMP, np.random.default_rng(5)
        )
        assert ic1 == ic2 and ir2 == 0.0
        np.testing.assert_allclose(g1, g2, atol=1e-12)
        np.testing.assert_array_equal(go, 0.0)


class TestIncentiveArithmetic:
    def _chain(self, tmp_path):
        env = ChainMDP()
        ln = learner_for(env, tmp_path)
        feats = env.features(np.zeros((1, 1)))
        return ln, feats, np.zeros((1, 1), dtype=np.int64), (np.array([0]), np.array([0]))

    def test_ic_single_slot(self, tmp_path):
        ln, f, t, rows = self._chain(tmp_path)
        set_constant_output(ln.nets["q_dev"], [4.0, 2.0])
        set_constant_output(ln.nets["v_dev"], [3.0])
        ic, _ = loss_ic(ln.enc, ln.nets["mech"], ln.nets["q_dev"], ln.nets["v_dev"], f, t, rows, 1.0, 1, TEMP, np.random.default_rng(0))
        assert ic == pytest.approx(1.0)

    def test_ir_single_slot(self, tmp_path):
        ln, f, t, rows = self._chain(tmp_path)
        set_constant_output(ln.nets["q_opt"], [5.0, -1.0])
        set_constant_output(ln.nets["v_dev"], [3.0])
        ir, _, _ = loss_ir(ln.enc, ln.nets["mech"], ln.nets["opt"], ln.nets["q_opt"], ln.nets["v_dev"], f, t, rows, 1.0, 1, TEMP, np.random.default_rng(0))
        assert ir == pytest.approx(2.0)

    def test_chicken_opt_out_dare(self, tmp_path):
        # opt-out values of an RT deviator facing Dare: Chicken 0, Dare 1; on-path value 2
        ln, f, t, rows = self._chain(tmp_path)
        set_constant_output(ln.nets["q_opt"], [0.0, 1.0])
        set_constant_output(ln.nets["v_dev"], [2.0])
        ir, _, _ = loss_ir(ln.enc, ln.nets["mech"], ln.nets["opt"], ln.nets["q_opt"], ln.nets["v_dev"], f, t, rows, 1.0, 1, TEMP, np.random.default_rng(0))
        assert ir == 0.0
        set_constant_output(ln.nets["v_dev"], [0.5])
        ir, _, _ = loss_ir(ln.enc, ln.nets["mech"], ln.nets["opt"], ln.nets["q_opt"], ln.nets["v_dev"], f, t, rows, 1.0, 1, TEMP, np.random.default_rng(0))
        assert ir == pytest.approx(0.5)

    def test_dead_zone(self, setup):
        ln, f, t, rows = setup
        set_constant_output(ln.nets["v_dev"], [1e3])
        ic, ir, gm, go = incentive_losses(
            ln.enc, ln.nets["mech"], ln.nets["opt"], ln.nets["q_dev"], ln.nets["v_dev"], ln.nets["q_opt"],
            f, t, rows, 1.0, 1.0, 4, TEMP, np.random.default_rng(0),
        )
        assert ic == 0.0 and ir == 0.0
        assert not gm.any() and not go.any()

    def test_non_negative(self, setup):
        ln, f, t, rows = setup
        for seed in range(10):
            ic, g = loss_ic(ln.enc, ln.nets["mech"], ln.nets["q_dev"], ln.nets["v_dev"], f, t, rows, 1.0, 4, TEMP, np.random.default_rng(seed))
            assert ic >= 0


class TestBellman:
    def _batch(self, ln, env, rng, b=6):
        states, types, actions, rew, nxt = random_batch(env, rng, b)
        return ln.enc.features(states), ln.enc.features(nxt), types, actions, rew

    def test_q_i_fixed_point(self, tmp_path):
        env = chicken(horizon=0)
        ln = learner_for(env, tmp_path)
        f, fn, t, a, _ = self._batch(ln, env, np.random.default_rng(0))
        rows = agent_rows(len(f), 2, 0, None)[:2]
        set_constant_output(ln.nets["q_dev"], [1.5, 1.5])
        rew = np.full(a.shape, 1.5)
        done = np.ones(len(f), dtype=bool)
        loss, _ = bellman_q_i(ln.enc, ln.nets["q_dev"], ln.targets["q_dev"], f, fn, t, a, rew, done, rows, a, 0.99)
        assert loss == 0.0
        # myopic target: gamma 0 with Q = r on non-terminal rows
        loss, _ = bellman_q_i(ln.enc, ln.nets["q_dev"], ln.targets["q_dev"], f, fn, t, a, rew, ~done, rows, a, 0.0)
        assert loss == 0.0

    def test_v_i_terminal(self, tmp_path):
        env = chicken(horizon=0)
        ln = learner_for(env, tmp_path)
        f, fn, t, a, _ = self._batch(ln, env, np.random.default_rng(1))
        rows = agent_rows(len(f), 2, 0, None)[:2]
        set_constant_output(ln.nets["v_dev"], [-0.25])
        loss, _ = bellman_v_i(ln.enc, ln.nets["v_dev"], ln.targets["v_dev"], f, fn, t, a, np.full(a.shape, -0.25), np.ones(len(f), bool), rows, a, 0.99)
        assert loss == 0.0

    @pytest.mark.parametrize("own_type_only", [True, False])
    def test_q_i_gradient(self, tmp_path, own_type_only):
        env = congestion3()
        ln = learner_for(env, tmp_path)
        rng = np.random.default_rng(2)
        f, fn, t, a, rew = self._batch(ln, env, rng, 3)
        rows = agent_rows(3, 10, 1, rng)[:2]
        done = np.array([False, True, False])
        nxt = rng.integers(0, 6, size=a.shape)
        args = (ln.enc, ln.nets["q_dev"], ln.targets["q_dev"], f, fn, t, a, rew, done, rows, nxt, 0.9, own_type_only)
        _, g = bellman_q_i(*args)
        assert_fd_close(g, fd_params(ln.nets["q_dev"], lambda: bellman_q_i(*args)[0]))

    def test_v_i_gradient(self, tmp_path):
        env = chicken()
        ln = learner_for(env, tmp_path)
        f, fn, t, a, rew = self._batch(ln, env, np.random.default_rng(3))
        rows = agent_rows(len(f), 2, 0, None)[:2]
        args = (ln.enc, ln.nets["v_dev"], ln.targets["v_dev"], f, fn, t, a, rew, np.zeros(len(f), bool), rows, a[::-1], 0.9)
        _, g = bellman_v_i(*args)
        assert_fd_close(g, fd_params(ln.nets["v_dev"], lambda: bellman_v_i(*args)[0]))

    def test_v_i_geometric_fixed_point(self, tmp_path):
        # one state, reward 1 forever, gamma 0.5: V = 2
        env = ChainMDP()
        ln = learner_for(env, tmp_path)
        f = env.features(np.ones((8, 1)))
        a = np.zeros((8, 1), dtype=np.int64)
        t = np.zeros((8, 1), dtype=np.int64)
        rows = (np.arange(8), np.zeros(8, dtype=np.int64))
        net, tgt = ln.nets["v_dev"], ln.targets["v_dev"]
        ln.optims["v_dev"].lr = 1e-2
        for _ in range(3000):
            loss, g = bellman_v_i(ln.enc, net, tgt, f, f, t, a, np.ones((8, 1)), np.zeros(8, bool), rows, a, 0.5)
            ln.optims["v_dev"].step(net.params, g)
            tgt.params[:] = net.params
        assert loss < 1e-6
        v = net.forward(ln.enc.build(f, t, np.ones((8, 1)), ln.enc.one_hot_actions(a), rows[1]))
        np.testing.assert_allclose(v, 2.0, atol=1e-2)


class TestTeamLosses:
    @pytest.mark.parametrize("mode", ["dqn_t", "vdn"])
    def test_gradient(self, tmp_path, mode):
        env = chicken()
        ln = learner_for(env, tmp_path)
        rng = np.random.default_rng(4)
        states, types, actions, rew, nxt = random_batch(env, rng, 5)
        f, fn = ln.enc.features(states), ln.enc.features(nxt)
        x, xn = ln.enc.build(f, types), ln.enc.build(fn, types)
        done = np.array([0, 1, 0, 0, 1], dtype=bool)
        active = np.array([[1, 1], [1, 0], [0, 1], [1, 1], [1, 1]], dtype=np.float64)
        args = (ln.nets["mech"], ln.targets["mech"], x, xn, actions, rew.sum(axis=1), done, 0.9, active, mode)
        _, g = team_td_loss(*args)
        assert_fd_close(g, fd_params(ln.nets["mech"], lambda: team_td_loss(*args)[0]))

    def test_fixed_point_zero(self, tmp_path):
        env = ChainMDP()
        ln = learner_for(env, tmp_path)
        x = ln.enc.build(env.features(np.zeros((3, 1))), np.zeros((3, 1), dtype=np.int64))
        a = np.array([[0], [1], [1]])
        q = ln.nets["mech"].forward(x)
        y = q[np.arange(3), a[:, 0]]
        loss, g = team_td_loss(ln.nets["mech"], ln.targets["mech"], x, x, a, y, np.ones(3, bool), 0.99)
        assert loss == pytest.approx(0.0, abs=1e-20)
        assert not np.any(g)

    def test_team_reward_is_sum(self, tmp_path):
        env = chicken()
        ln = learner_for(env, tmp_path)
        rng = np.random.default_rng(6)
        states, types, actions, rew, nxt = random_batch(env, rng, 4)
        f, fn = ln.enc.features(states), ln.enc.features(nxt)
        done = np.zeros(4, bool)
        stats, grads = {}, {}
        g = ln.loss_rl(f, fn, types, actions, rew, done, stats, grads)
        ref, gref = team_td_loss(ln.nets["mech"], ln.targets["mech"], ln.enc.build(f, types), ln.enc.build(fn, types), actions, rew[:, 0] + rew[:, 1], done, ln.gamma)
        assert stats["rl"] == ref
        np.testing.assert_array_equal(g, gref)
        # the base loss never touches the deviation learners
        assert set(grads) == set()

    def test_td_error(self):
        q = np.array([[1.0, 2.0], [0.5, 0.0]])
        err = td_error_dqn(q, np.array([1, 0]), np.array([1.0, 0.5]), np.array([2.0, 4.0]), np.array([0.0, 1.0]), 0.5)
        np.testing.assert_allclose(err, [2.0 - 2.0, 0.0])

    def test_critic_td_gradient(self, tmp_path):
        env = chicken()
        ln = learner_for(env, tmp_path, algo="ma_td3")
        rng = np.random.default_rng(8)
        states, types, actions, rew, nxt = random_batch(env, rng, 5)
        x = ln.enc.build(ln.enc.features(states), types, None, ln.enc.one_hot_actions(actions))
        xn = ln.enc.build(ln.enc.features(nxt), types, None, ln.enc.one_hot_actions(actions[::-1]))
        crit = [ln.nets["critic1"], ln.nets["critic2"]]
        tg = [ln.targets["critic1"], ln.targets["critic2"]]
        _, (g1, g2) = critic_td_loss(crit, tg, x, xn, rew.sum(1), np.zeros(5, bool), 0.9)
        loss = lambda: critic_td_loss(crit, tg, x, xn, rew.sum(1), np.zeros(5, bool), 0.9)[0]  # noqa: E731
        assert_fd_close(g1, fd_params(crit[0], loss))
        assert_fd_close(g2, fd_params(crit[1], loss))

    def test_td3_rl_loss_leaves_deviation_nets(self, tmp_path):
        env = chicken()
        ln = learner_for(env, tmp_path, algo="ma_td3")
        rng = np.random.default_rng(9)
        states, types, actions, rew, nxt = random_batch(env, rng, 4)
        grads = {}
        ln.loss_rl(ln.enc.features(states), ln.enc.features(nxt), types, actions, rew, np.zeros(4, bool), {}, grads)
        assert set(grads) == {"critic1", "critic2"}


class TestLossWeights:
    def test_rescale(self):
        w = LossWeights(2.0, 10.0, 4.0).rescaled()
        assert (w.alpha0, w.alpha1, w.alpha2) == (1.0, 5.0, 2.0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            LossWeights(1.0, -1.0, 0.0)
        with pytest.raises(ValueError):
            LossWeights(0.0, 1.0, 1.0)

"""The bi-level learner: mechanism branches, critics and one-step updates."""

import numpy as np

from ..game import Mechanism, TableMechanism, constant_policy
from ..nn import NetSpec, Network, make_optimizer, polyak_update
from ..nn.gumbel import gumbel_softmax_st
from .encoding import Encoder, agent_rows, self_masks
from .losses import (
    actor_loss,
    bellman_q_i,
    bellman_v_i,
    critic_td_loss,
    incentive_losses,
    loss_ic,
    loss_ir,
    team_td_loss,
)

RNG_STREAMS = ("init", "env", "explore", "replay", "rl", "incentive", "deviation")

# td3 critics of the on-path and opt-out games
TD3_CRITICS = ("critic1", "critic2", "ocritic1", "ocritic2")


def make_rngs(seed):
    """Independent generators per consumer, so switching one part of training
    off never shifts the random numbers another part sees."""
    children = np.random.SeedSequence(seed).spawn(len(RNG_STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(RNG_STREAMS, children)}


class Learner:
    """Owns every network of one run and performs the per-step updates.

    Networks:

    ``mech``      on-path mechanism, ``(s, theta) -> n x A`` (Q-heads or logits)
    ``opt``       opt-out mechanism, same output with agent i's type hidden
    ``q_dev``     deviation critic ``Q_i(s, a_-i, theta_i)[a_i]``
    ``v_dev``     on-path critic ``V_i(s, a, theta_i)``
    ``q_opt``     opt-out deviation critic ``Q^{n-1}_i(s, a_-i, theta)[a_i]``
    ``critic*``   (ma_td3) twin team critics; ``ocritic*`` for the opt-out game
    """

    def __init__(self, env, cfg, seed, dtype=np.float32):
        self.env = env
        self.cfg = cfg
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.enc = Encoder(env, self.dtype)
        self.rngs = make_rngs(seed)
        _, self.alpha1, self.alpha2 = cfg.loss_weights()
        self.td3 = cfg.algo == "ma_td3"
        self.gamma = cfg.gamma
        self.updates = 0

        n, a = self.enc.n, self.enc.n_actions
        mech_lr = cfg.lr_actor if self.td3 else cfg.lr_critic
        self.nets, self.targets, self.optims = {}, {}, {}
        self._add("mech", n * a, mech_lr, self.enc.policy_input_shape)
        self._add("opt", n * a, mech_lr, self.enc.policy_input_shape)
        if self.td3:
            for name in TD3_CRITICS:
                self._add(name, 1, cfg.lr_critic)
        self._add("q_dev", a, cfg.lr_critic)
        self._add("v_dev", 1, cfg.lr_critic)
        self._add("q_opt", a, cfg.lr_critic)

    def _add(self, name, out, lr, input_shape=None):
        c = self.cfg
        spec = NetSpec(self.env.net_kind, input_shape or self.enc.input_shape, out, tuple(c.hidden), c.filters, tuple(c.kernel), tuple(c.stride))
        net = Network(spec, rng=self.rngs["init"], dtype=self.dtype)
        self.nets[name] = net
        self.targets[name] = net.clone()
        self.optims[name] = make_optimizer(c.optimizer, net.size, lr, dtype=self.dtype)

    # ------------------------------------------------------------------
    # acting

    def recommend(self, states, types, net="mech"):
        """Greedy on-path recommendation for a batch, ``(B, n)``."""
        feats = self.enc.features(states)
        out = self.nets[net].forward(self.enc.build(feats, types))
        return self.enc.heads(out).argmax(axis=-1)

    def act(self, state, types, eps):
        """Epsilon-greedy joint action from the on-path mechanism.

        Each agent explores independently. Both random draws are always made so
        the exploration stream advances the same way at every step.
        """
        greedy = self.recommend(np.asarray(state)[None], np.asarray(types)[None])[0]
        rng = self.rngs["explore"]
        n, a = self.enc.n, self.enc.n_actions
        explore = rng.random(n) < eps
        random_actions = rng.integers(0, a, size=n)
        return np.where(explore, random_actions, greedy).astype(np.int64)

    def _greedy(self, name, feats, types, type_mask=None, self_index=None, target=False):
        net = self.targets[name] if target else self.nets[name]
        out = net.forward(self.enc.build(feats, types, type_mask, None, self_index))
        return self.enc.heads(out).argmax(axis=-1)

    def _deviator_action(self, feats, types, others_actions, rows_i, target=False):
        """Greedy opt-out deviation ``argmax_a Q^{n-1}_i`` given the others' one-hot actions."""
        _, others = self_masks(rows_i, self.enc.n)
        net = self.targets["q_opt"] if target else self.nets["q_opt"]
        q = net.forward(self.enc.build(feats, types, None, others_actions * others[..., None], rows_i))
        return q.argmax(axis=-1)

    # ------------------------------------------------------------------
    # updates

    def update(self, batch):
        """One gradient step on every subproblem from a single minibatch."""
        enc = self.enc
        f = enc.features(batch.states)
        fn = enc.features(batch.next_states)
        types = batch.types
        rewards = batch.rewards.astype(self.dtype)
        done = batch.done
        actor_step = (not self.td3) or (self.updates % self.cfg.td3_policy_delay == 0)
        stats = {}
        next_mech = self._greedy("mech", fn, types)

        grads = {}
        self._update_deviation(
            f, fn, types, batch.actions, rewards, done, next_mech, stats, grads, actor_step, critics=self.cfg.train_deviation
        )
        self._update_mechanism(f, fn, types, batch.actions, rewards, done, stats, grads, actor_step)

        for name, g in grads.items():
            self.optims[name].step(self.nets[name].params, g)
        for name in grads:
            if name in ("mech", "opt") and not actor_step:
                continue
            polyak_update(self.targets[name], self.nets[name], self.cfg.tau)
        self.updates += 1
        return stats

    def _update_deviation(self, f, fn, types, actions, rewards, done, next_mech, stats, grads, actor_step, critics=True):
        """Deviation critics plus the opt-out branch's own RL step.

        With ``critics`` off only the opt-out branch trains; the random draws
        are the same either way.
        """
        enc, n, gamma = self.enc, self.enc.n, self.gamma
        rng = self.rngs["deviation"]
        rb, ri, _ = agent_rows(len(f), n, self.cfg.agent_sample, rng)
        own, others = self_masks(ri, n)
        fr, fnr, tr, ar, rr, dr = f[rb], fn[rb], types[rb], actions[rb], rewards[rb], done[rb]
        local = (np.arange(len(rb)), ri)

        if critics:
            # opt-out game: the n-1 remaining agents follow the opt-out branch
            next_opt = self._greedy("opt", fnr, tr, others, ri)
            stats["q_opt"], grads["q_opt"] = bellman_q_i(
                enc, self.nets["q_opt"], self.targets["q_opt"], fr, fnr, tr, ar, rr, dr, local, next_opt, gamma, own_type_only=False
            )
            stats["q_dev"], grads["q_dev"] = bellman_q_i(
                enc, self.nets["q_dev"], self.targets["q_dev"], f, fn, types, actions, rewards, done, (rb, ri), next_mech, gamma
            )
            stats["v_dev"], grads["v_dev"] = bellman_v_i(
                enc, self.nets["v_dev"], self.targets["v_dev"], f, fn, types, actions, rewards, done, (rb, ri), next_mech, gamma
            )

        team = rr.sum(axis=1) - rr[np.arange(len(rb)), ri]
        if not self.td3:
            x = enc.build(fr, tr, others, None, ri)
            xn = enc.build(fnr, tr, others, None, ri)
            stats["opt_td"], grads["opt"] = team_td_loss(
                self.nets["opt"], self.targets["opt"], x, xn, ar, team, dr, gamma, active=others, mode=self._td_mode()
            )
            return

        x = enc.build(fr, tr, others, enc.one_hot_actions(ar), ri)
        logits = self.targets["opt"].forward(enc.build(fnr, tr, others, None, ri))
        hard, _ = gumbel_softmax_st(enc.heads(logits), 1.0, rng, noise_scale=self.cfg.td3_target_noise)
        dev = self._deviator_action(fnr, tr, hard, ri, target=True)
        nxt = hard * others[..., None] + enc.one_hot_actions(dev)[:, None, :] * own[..., None]
        xn = enc.build(fnr, tr, others, nxt, ri)
        crit = [self.nets["ocritic1"], self.nets["ocritic2"]]
        stats["ocritic"], (grads["ocritic1"], grads["ocritic2"]) = critic_td_loss(
            crit, [self.targets["ocritic1"], self.targets["ocritic2"]], x, xn, team, dr, gamma
        )
        if actor_step:
            greedy_o = enc.one_hot_actions(self._greedy("opt", fr, tr, others, ri))
            dev_now = self._deviator_action(fr, tr, greedy_o, ri)
            fixed = enc.one_hot_actions(dev_now)[:, None, :] * own[..., None]
            stats["opt_actor"], grads["opt"] = actor_loss(
                enc, self.nets["opt"], crit[0], fr, tr, self.cfg.gumbel_temperature, rng, others, ri, fixed
            )

    def _td_mode(self):
        return "vdn" if self.cfg.algo == "vdn" else "dqn_t"

    def loss_rl(self, f, fn, types, actions, rewards, done, stats=None, grads=None, actor_step=True):
        """Base-algorithm loss for the on-path mechanism (and td3 critics).

        Returns the mechanism gradient (``None`` on td3 steps without an actor update).
        """
        enc, gamma = self.enc, self.gamma
        stats = {} if stats is None else stats
        grads = {} if grads is None else grads
        team = rewards.sum(axis=1)
        if not self.td3:
            x, xn = enc.build(f, types), enc.build(fn, types)
            stats["rl"], g = team_td_loss(self.nets["mech"], self.targets["mech"], x, xn, actions, team, done, gamma, mode=self._td_mode())
            return g
        rng = self.rngs["rl"]
        x = enc.build(f, types, None, enc.one_hot_actions(actions))
        logits = self.targets["mech"].forward(enc.build(fn, types))
        hard, _ = gumbel_softmax_st(enc.heads(logits), 1.0, rng, noise_scale=self.cfg.td3_target_noise)
        xn = enc.build(fn, types, None, hard)
        crit = [self.nets["critic1"], self.nets["critic2"]]
        stats["critic"], (grads["critic1"], grads["critic2"]) = critic_td_loss(
            crit, [self.targets["critic1"], self.targets["critic2"]], x, xn, team, done, gamma
        )
        if not actor_step:
            return None
        stats["rl"], g = actor_loss(enc, self.nets["mech"], crit[0], f, types, self.cfg.gumbel_temperature, rng)
        return g

    def _update_mechanism(self, f, fn, types, actions, rewards, done, stats, grads, actor_step):
        g = self.loss_rl(f, fn, types, actions, rewards, done, stats, grads, actor_step)
        if g is None:
            return
        b, n = len(f), self.enc.n
        temp = self.cfg.gumbel_temperature
        rng = self.rngs["incentive"]
        if self.alpha1 > 0 and self.alpha2 > 0:
            rb, ri, w = agent_rows(b, n, self.cfg.agent_sample, rng)
            stats["ic"], stats["ir"], g_m, g_o = incentive_losses(
                self.enc, self.nets["mech"], self.nets["opt"], self.nets["q_dev"], self.nets["v_dev"], self.nets["q_opt"],
                f, types, (rb, ri), w * self.alpha1, w * self.alpha2, b, temp, rng,
            )
            g += g_m
            self._add_grad(grads, "opt", g_o)
        elif self.alpha1 > 0:
            rb, ri, w = agent_rows(b, n, self.cfg.agent_sample, rng)
            stats["ic"], g_ic = loss_ic(
                self.enc, self.nets["mech"], self.nets["q_dev"], self.nets["v_dev"], f, types, (rb, ri), w * self.alpha1, b, temp, rng
            )
            g += g_ic
        elif self.alpha2 > 0:
            rb, ri, w = agent_rows(b, n, self.cfg.agent_sample, rng)
            stats["ir"], g_m, g_o = loss_ir(
                self.enc, self.nets["mech"], self.nets["opt"], self.nets["q_opt"], self.nets["v_dev"],
                f, types, (rb, ri), w * self.alpha2, b, temp, rng,
            )
            g += g_m
            self._add_grad(grads, "opt", g_o)
        grads["mech"] = g

    @staticmethod
    def _add_grad(grads, name, g):
        if name in grads:
            grads[name] += g
        else:
            grads[name] = g

    # ------------------------------------------------------------------
    # persistence

    def state_arrays(self):
        arrays = {}
        for name, net in self.nets.items():
            arrays[f"{name}.params"] = net.params
            arrays[f"{name}.target"] = self.targets[name].params
            for k, v in self.optims[name].state_arrays().items():
                arrays[f"{name}.opt_{k}"] = v
        return arrays

    def state_meta(self):
        return {
            "updates": self.updates,
            "optimizer_steps": {k: o.t for k, o in self.optims.items()},
            "rng": {k: r.bit_generator.state for k, r in self.rngs.items()},
        }

    def load_state(self, arrays, meta):
        for name, net in self.nets.items():
            net.load_flat(arrays[f"{name}.params"])
            self.targets[name].load_flat(arrays[f"{name}.target"])
            opt = self.optims[name]
            opt.load_state({k: arrays[f"{name}.opt_{k}"] for k in opt.state_arrays()}, meta["optimizer_steps"][name])
        for k, state in meta["rng"].items():
            self.rngs[k].bit_generator.state = state
        self.updates = meta["updates"]

    def mechanism(self, on_path=None, opt_out=None):
        """Greedy mechanism view, optionally with snapshot parameters."""
        return NetMechanism(self, on_path, opt_out)


class NetMechanism(Mechanism):
    """Deterministic (argmax) mechanism read off the mechanism networks."""

    def __init__(self, learner, on_path_params=None, opt_out_params=None):
        self.enc = learner.enc
        self.env = learner.env
        self.n_agents = self.enc.n
        self.mech = learner.nets["mech"].clone()
        self.opt = learner.nets["opt"].clone()
        if on_path_params is not None:
            self.mech.load_flat(on_path_params)
        if opt_out_params is not None:
            self.opt.load_flat(opt_out_params)

    def actions_batch(self, states, types):
        feats = self.enc.features(states)
        return self.enc.heads(self.mech.forward(self.enc.build(feats, types))).argmax(axis=-1)

    def opt_out_actions_batch(self, states, agent, types):
        """Actions of all n slots of the opt-out branch (slot ``agent`` is meaningless)."""
        b = len(states)
        ri = np.full(b, agent)
        _, others = self_masks(ri, self.n_agents)
        feats = self.enc.features(states)
        out = self.opt.forward(self.enc.build(feats, types, others, None, ri))
        return self.enc.heads(out).argmax(axis=-1)

    def _default_state(self):
        return self.env.reset(np.zeros(self.n_agents, dtype=np.int64), np.random.default_rng(0))

    def on_path(self, types, state=None):
        state = self._default_state() if state is None else state
        acts = self.actions_batch(np.asarray(state)[None], np.asarray(types)[None])[0]
        return [constant_policy(int(a)) for a in acts]

    def opt_out(self, agent, others_types, state=None):
        state = self._default_state() if state is None else state
        full = np.insert(np.asarray(others_types, dtype=np.int64), agent, 0)
        acts = self.opt_out_actions_batch(np.asarray(state)[None], agent, full[None])[0]
        return [constant_policy(int(a)) for j, a in enumerate(acts) if j != agent]

    def table(self):
        """Tabulate both branches at the initial state (exact for matrix games)."""
        counts = self.env.spec.type_counts
        profiles = np.array(list(np.ndindex(*counts)), dtype=np.int64)
        state = self._default_state()
        states = np.repeat(np.asarray(state)[None], len(profiles), axis=0)
        on_path = self.actions_batch(states, profiles).reshape(*counts, self.n_agents)
        tables = []
        for i in range(self.n_agents):
            acts = self.opt_out_actions_batch(states, i, profiles).reshape(*counts, self.n_agents)
            acts = np.take(acts, 0, axis=i)
            tables.append(np.delete(acts, i, axis=-1))
        return TableMechanism(on_path, tables)

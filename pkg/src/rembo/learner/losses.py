"""Loss terms of the bi-level objective and their gradients.

All functions take already-encoded batches (see :class:`Encoder`) and return
the scalar loss together with flat parameter gradients for the networks the
loss is meant to train. Networks a loss only reads are never updated here.
"""

from dataclasses import dataclass

import numpy as np

from ..nn.gumbel import gumbel_softmax_st, gumbel_softmax_st_backward
from ..nn.optim import TrainingDiverged
from .encoding import self_masks


@dataclass(frozen=True)
class LossWeights:
    alpha0: float = 1.0
    alpha1: float = 0.0
    alpha2: float = 0.0

    def __post_init__(self):
        if min(self.alpha0, self.alpha1, self.alpha2) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")

    def rescaled(self):
        """Weights with ``alpha0 = 1`` (``lambda1 = a1 / a0``, ``lambda2 = a2 / a0``)."""
        return LossWeights(1.0, self.alpha1 / self.alpha0, self.alpha2 / self.alpha0)


def _finite(loss, what):
    if not np.isfinite(loss):
        raise TrainingDiverged(f"{what} loss is not finite")
    return float(loss)


# --------------------------------------------------------------------------
# welfare (base RL) losses


def team_td_loss(q_net, q_target, x, x_next, actions, reward, done, gamma, active=None, mode="dqn_t"):
    """TD loss on per-agent action-value heads trained with a shared team reward.

    ``mode="dqn_t"``: every active head regresses on
    ``reward + gamma * max_a Q_target_i(s', a)`` independently.
    ``mode="vdn"``: the sum of active heads regresses on
    ``reward + gamma * sum_i max_a Q_target_i(s', a)``.
    ``active`` ``(B, n)`` masks heads of absent agents.
    """
    b, n = actions.shape
    out, tape = q_net.forward_train(x)
    q = out.reshape(b, n, -1)
    q_next = q_target.forward(x_next).reshape(b, n, -1).max(axis=-1)
    if active is None:
        active = np.ones((b, n), dtype=q.dtype)
    q_taken = np.take_along_axis(q, actions[..., None], axis=-1)[..., 0]
    cont = gamma * (1.0 - done.astype(q.dtype))
    g = np.zeros_like(q)
    if mode == "dqn_t":
        y = reward[:, None] + cont[:, None] * q_next
        err = (q_taken - y) * active
        loss = (err**2).sum() / b
        gsel = 2.0 * err / b
    elif mode == "vdn":
        y = reward + cont * (q_next * active).sum(axis=1)
        err = (q_taken * active).sum(axis=1) - y
        loss = (err**2).mean()
        gsel = (2.0 * err / b)[:, None] * active
    else:
        raise ValueError(f"unknown TD mode {mode!r}")
    np.put_along_axis(g, actions[..., None], gsel[..., None].astype(g.dtype), axis=-1)
    grad, _ = q_net.backward(tape, g.reshape(b, -1), input_grad=False)
    return _finite(loss, "team TD"), grad


def td_error_dqn(q_values, actions, reward, q_next_max, done, gamma):
    """Plain TD errors, exposed for tests: ``Q(s,a) - (r + gamma * max Q(s', .))``."""
    y = reward + gamma * (1.0 - done) * q_next_max
    return q_values[np.arange(len(actions)), actions] - y


def critic_td_loss(critics, targets, x, x_next, reward, done, gamma):
    """Clipped double-Q critic loss for scalar critics (TD3)."""
    q_next = np.minimum(*(t.forward(x_next)[:, 0] for t in targets))
    y = reward + gamma * (1.0 - done.astype(np.float32)) * q_next
    total, grads = 0.0, []
    b = len(reward)
    for c in critics:
        q, tape = c.forward_train(x)
        err = q[:, 0] - y
        total += float((err**2).mean())
        grad, _ = c.backward(tape, (2.0 * err / b)[:, None], input_grad=False)
        grads.append(grad)
    return _finite(total, "critic"), grads


def actor_loss(enc, actor, critic, feats, types, temperature, rng, type_mask=None, self_index=None, fixed=None):
    """Deterministic policy gradient loss ``-Q(s, ST-GumbelSoftmax(actor(s)))``.

    ``fixed`` ``(B, n, A)`` overrides the actor's action for rows where it is
    non-zero (used for the deviator's slot in the opt-out game).
    """
    b = len(feats)
    logits, tape_a = actor.forward_train(enc.build(feats, types, type_mask, None, self_index))
    hard, soft = gumbel_softmax_st(enc.heads(logits), temperature, rng)
    acts = hard
    keep = None
    if fixed is not None:
        keep = 1.0 - fixed.sum(axis=-1, keepdims=True)
        acts = hard * keep + fixed
    q, tape_c = critic.forward_train(enc.build(feats, types, type_mask, acts, self_index))
    loss = -float(q.mean())
    _, gx = critic.backward(tape_c, np.full((b, 1), -1.0 / b, dtype=q.dtype), param_grad=False)
    g_hard = enc.action_grad(gx)
    if keep is not None:
        g_hard = g_hard * keep
    g_logits = gumbel_softmax_st_backward(soft, g_hard, temperature)
    grad, _ = actor.backward(tape_a, g_logits.reshape(b, -1), input_grad=False)
    return _finite(loss, "actor"), grad


# --------------------------------------------------------------------------
# deviation critics


def bellman_q_i(enc, q_net, q_target, feats, next_feats, types, actions, rewards, done, rows, next_actions, gamma, own_type_only=True):
    """Squared TD error of the deviation critic ``Q_i(s, a_-i, theta_i)[a_i]``.

    The bootstrap maximises over the agent's own next action while the
    others follow ``next_actions`` (the mechanism's recommendation at s').
    Terminal rows bootstrap nothing. With ``own_type_only=False`` the critic
    sees the whole type profile (the opt-out deviation critic).
    """
    rb, ri = rows
    r = len(rb)
    own, others = self_masks(ri, enc.n)
    tmask = own if own_type_only else None
    a_i = actions[rb, ri]
    a_oh = enc.one_hot_actions(actions[rb]) * others[..., None]
    q, tape = q_net.forward_train(enc.build(feats[rb], types[rb], tmask, a_oh, ri))
    an_oh = enc.one_hot_actions(next_actions[rb]) * others[..., None]
    q_next = q_target.forward(enc.build(next_feats[rb], types[rb], tmask, an_oh, ri)).max(axis=-1)
    y = rewards[rb, ri] + gamma * (1.0 - done[rb].astype(np.float32)) * q_next
    err = q[np.arange(r), a_i] - y
    loss = float((err**2).mean())
    g = np.zeros_like(q)
    g[np.arange(r), a_i] = 2.0 * err / r
    grad, _ = q_net.backward(tape, g, input_grad=False)
    return _finite(loss, "Q_i"), grad


def bellman_v_i(enc, v_net, v_target, feats, next_feats, types, actions, rewards, done, rows, next_actions, gamma):
    """Squared TD error of the on-path critic ``V_i(s, a, theta_i)``."""
    rb, ri = rows
    r = len(rb)
    own, _ = self_masks(ri, enc.n)
    v, tape = v_net.forward_train(enc.build(feats[rb], types[rb], own, enc.one_hot_actions(actions[rb]), ri))
    v_next = v_target.forward(enc.build(next_feats[rb], types[rb], own, enc.one_hot_actions(next_actions[rb]), ri))[:, 0]
    y = rewards[rb, ri] + gamma * (1.0 - done[rb].astype(np.float32)) * v_next
    err = v[:, 0] - y
    loss = float((err**2).mean())
    grad, _ = v_net.backward(tape, (2.0 * err / r)[:, None], input_grad=False)
    return _finite(loss, "V_i"), grad


# --------------------------------------------------------------------------
# incentive terms


def ic_values(enc, mech, q_net, v_net, feats, types, rows, temperature, rng, noise=True, keep_tape=False):
    """Evaluate deviation and on-path values for every misreport.

    Returns a dict with ``q`` ``(R, T, A)`` (agent i's action values when it
    reports each type and the others follow the resulting recommendation)
    and ``v`` ``(R,)`` (value of the truthful recommendation).
    """
    rb, ri = rows
    r = len(rb)
    n, n_types = enc.n, enc.n_types
    own, others = self_masks(ri, n)
    true_t = types[rb, ri]

    reported = np.repeat(types[rb][:, None, :], n_types, axis=1)
    reported[np.arange(r)[:, None], np.arange(n_types)[None, :], ri[:, None]] = np.arange(n_types)[None, :]
    feats_rt = np.repeat(feats[rb], n_types, axis=0)
    x_m = enc.build(feats_rt, reported.reshape(r * n_types, n))
    if keep_tape:
        logits, tape_m = mech.forward_train(x_m)
    else:
        logits, tape_m = mech.forward(x_m), None
    hard, soft = gumbel_softmax_st(enc.heads(logits), temperature, rng, noise=noise)
    hard4 = hard.reshape(r, n_types, n, -1)

    types_rt = np.repeat(types[rb], n_types, axis=0)
    own_rt = np.repeat(own, n_types, axis=0)
    others_rt = np.repeat(others, n_types, axis=0)
    ri_rt = np.repeat(ri, n_types)
    x_q = enc.build(feats_rt, types_rt, own_rt, hard * others_rt[..., None], ri_rt)
    a_v = hard4[np.arange(r), true_t]
    x_v = enc.build(feats[rb], types[rb], own, a_v, ri)
    if keep_tape:
        q, tape_q = q_net.forward_train(x_q)
        v, tape_v = v_net.forward_train(x_v)
    else:
        q, tape_q = q_net.forward(x_q), None
        v, tape_v = v_net.forward(x_v), None
    return {
        "q": q.reshape(r, n_types, -1),
        "v": v[:, 0],
        "soft": soft,
        "tapes": (tape_m, tape_q, tape_v),
        "others_rt": others_rt,
        "true_t": true_t,
    }


def loss_ic(enc, mech, q_net, v_net, feats, types, rows, weight, batch_size, temperature, rng):
    """Sum over agents, misreports and actions of ``ReLU(Q_i - V_i)``, averaged over states.

    Gradients reach the mechanism through the Gumbel-Softmax encodings of
    both the misreport-induced recommendations (inputs of ``Q_i``) and the
    truthful one (input of ``V_i``); critic parameters are held fixed.
    Returns ``(loss, mechanism_grad)``.
    """
    vals = ic_values(enc, mech, q_net, v_net, feats, types, rows, temperature, rng, noise=True, keep_tape=True)
    q, v = vals["q"], vals["v"]
    r, n_types, n_actions = q.shape
    diff = q - v[:, None, None]
    active = diff > 0
    scale = weight / batch_size
    loss = float((diff * active).sum() * scale)

    tape_m, tape_q, tape_v = vals["tapes"]
    gq = (active * scale).astype(q.dtype).reshape(r * n_types, n_actions)
    _, gx_q = q_net.backward(tape_q, gq, param_grad=False)
    g_hard = enc.action_grad(gx_q) * vals["others_rt"][..., None]
    gv = -(active.sum(axis=(1, 2)) * scale).astype(q.dtype)[:, None]
    _, gx_v = v_net.backward(tape_v, gv, param_grad=False)
    g_hard4 = g_hard.reshape(r, n_types, enc.n, n_actions).copy()
    g_hard4[np.arange(r), vals["true_t"]] += enc.action_grad(gx_v)
    g_logits = gumbel_softmax_st_backward(vals["soft"], g_hard4.reshape(r * n_types, enc.n, n_actions), temperature)
    grad, _ = mech.backward(tape_m, g_logits.reshape(r * n_types, -1), input_grad=False)
    return _finite(loss, "IC"), grad


def ir_values(enc, mech, opt, q_opt, v_net, feats, types, rows, temperature, rng, noise=True, keep_tape=False):
    """Opt-out deviation values ``(R, A)`` and on-path values ``(R,)``."""
    rb, ri = rows
    own, others = self_masks(ri, enc.n)
    f, t = feats[rb], types[rb]
    fwd = (lambda net, x: net.forward_train(x)) if keep_tape else (lambda net, x: (net.forward(x), None))

    lo, tape_o = fwd(opt, enc.build(f, t, others, None, ri))
    hard_o, soft_o = gumbel_softmax_st(enc.heads(lo), temperature, rng, noise=noise)
    q, tape_q = fwd(q_opt, enc.build(f, t, None, hard_o * others[..., None], ri))
    lm, tape_m = fwd(mech, enc.build(f, t))
    hard_m, soft_m = gumbel_softmax_st(enc.heads(lm), temperature, rng, noise=noise)
    v, tape_v = fwd(v_net, enc.build(f, t, own, hard_m, ri))
    return {
        "q": q,
        "v": v[:, 0],
        "soft_o": soft_o,
        "soft_m": soft_m,
        "tapes": (tape_o, tape_q, tape_m, tape_v),
        "others": others,
    }


def loss_ir(enc, mech, opt, q_opt, v_net, feats, types, rows, weight, batch_size, temperature, rng):
    """Sum over agents and actions of ``ReLU(Q_i^{opt-out} - V_i)``.

    Returns ``(loss, mechanism_grad, opt_out_grad)``: the opt-out branch is
    pushed towards recommendations that lower the deviator's value, the
    on-path branch towards ones that raise ``V_i``.
    """
    vals = ir_values(enc, mech, opt, q_opt, v_net, feats, types, rows, temperature, rng, noise=True, keep_tape=True)
    q, v = vals["q"], vals["v"]
    r, n_actions = q.shape
    diff = q - v[:, None]
    active = diff > 0
    scale = weight / batch_size
    loss = float((diff * active).sum() * scale)
    tape_o, tape_q, tape_m, tape_v = vals["tapes"]

    _, gx_q = q_opt.backward(tape_q, (active * scale).astype(q.dtype), param_grad=False)
    g_hard_o = enc.action_grad(gx_q) * vals["others"][..., None]
    g_lo = gumbel_softmax_st_backward(vals["soft_o"], g_hard_o, temperature)
    grad_opt, _ = opt.backward(tape_o, g_lo.reshape(r, -1), input_grad=False)

    gv = -(active.sum(axis=1) * scale).astype(q.dtype)[:, None]
    _, gx_v = v_net.backward(tape_v, gv, param_grad=False)
    g_lm = gumbel_softmax_st_backward(vals["soft_m"], enc.action_grad(gx_v), temperature)
    grad_mech, _ = mech.backward(tape_m, g_lm.reshape(r, -1), input_grad=False)
    return _finite(loss, "IR"), grad_mech, grad_opt


def incentive_losses(enc, mech, opt, q_dev, v_dev, q_opt, feats, types, rows, w_ic, w_ir, batch_size, temperature, rng):
    """``loss_ic`` and ``loss_ir`` on the same agent rows, sharing one on-path pass.

    The truthful recommendation and ``V_i`` computed for the IC term are reused
    by the IR term, which saves a mechanism and a critic pass per update.
    Returns ``(ic, ir, mechanism_grad, opt_out_grad)``.
    """
    vals = ic_values(enc, mech, q_dev, v_dev, feats, types, rows, temperature, rng, noise=True, keep_tape=True)
    q, v = vals["q"], vals["v"]
    r, n_types, n_actions = q.shape
    tape_m, tape_q, tape_v = vals["tapes"]
    diff = q - v[:, None, None]
    act_ic = diff > 0
    s_ic = w_ic / batch_size
    ic = float((diff * act_ic).sum() * s_ic)

    rb, ri = rows
    own, others = self_masks(ri, enc.n)
    f, t = feats[rb], types[rb]
    lo, tape_o = opt.forward_train(enc.build(f, t, others, None, ri))
    hard_o, soft_o = gumbel_softmax_st(enc.heads(lo), temperature, rng)
    qo, tape_qo = q_opt.forward_train(enc.build(f, t, None, hard_o * others[..., None], ri))
    diff_o = qo - v[:, None]
    act_ir = diff_o > 0
    s_ir = w_ir / batch_size
    ir = float((diff_o * act_ir).sum() * s_ir)

    _, gx_qo = q_opt.backward(tape_qo, (act_ir * s_ir).astype(qo.dtype), param_grad=False)
    g_lo = gumbel_softmax_st_backward(soft_o, enc.action_grad(gx_qo) * others[..., None], temperature)
    grad_opt, _ = opt.backward(tape_o, g_lo.reshape(r, -1), input_grad=False)

    _, gx_q = q_dev.backward(tape_q, (act_ic * s_ic).astype(q.dtype).reshape(r * n_types, n_actions), param_grad=False)
    g_hard4 = (enc.action_grad(gx_q) * vals["others_rt"][..., None]).reshape(r, n_types, enc.n, n_actions)
    gv = -(act_ic.sum(axis=(1, 2)) * s_ic + act_ir.sum(axis=1) * s_ir).astype(q.dtype)[:, None]
    _, gx_v = v_dev.backward(tape_v, gv, param_grad=False)
    g_hard4[np.arange(r), vals["true_t"]] += enc.action_grad(gx_v)
    g_logits = gumbel_softmax_st_backward(vals["soft"], g_hard4.reshape(r * n_types, enc.n, n_actions), temperature)
    grad_mech, _ = mech.backward(tape_m, g_logits.reshape(r * n_types, -1), input_grad=False)
    return _finite(ic, "IC"), _finite(ir, "IR"), grad_mech, grad_opt

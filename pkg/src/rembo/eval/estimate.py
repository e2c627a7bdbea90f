"""Critic-based incentive estimates for games too large to enumerate."""

from dataclasses import dataclass

import numpy as np

from ..learner.losses import ic_values, ir_values


class NoSnapshots(LookupError):
    pass


@dataclass
class IncentiveReport:
    """Violation estimates in the max form of the incentive definitions.

    ``*_per_agent`` averages ``max_{report, action} ReLU(Q - V)`` over sampled
    states for each agent; ``*_max`` averages the maximum over agents.
    """

    ic_per_agent: np.ndarray
    ir_per_agent: np.ndarray
    ic_max: float
    ir_max: float
    welfare: float = float("nan")
    step: int = -1
    seed: int = -1


def _gaps(values_fn, feats, types, n, chunk):
    out = []
    for lo in range(0, len(feats), chunk):
        f, t = feats[lo : lo + chunk], types[lo : lo + chunk]
        b = len(f)
        rb = np.repeat(np.arange(b), n)
        ri = np.tile(np.arange(n), b)
        q, v = values_fn(f, t, (rb, ri))
        gap = np.maximum(q.reshape(len(rb), -1) - v[:, None], 0.0).max(axis=1)
        out.append(gap.reshape(b, n))
    return np.concatenate(out).astype(np.float64)


def incentive_gaps(learner, feats, types, mech=None, opt=None, chunk=64):
    """Per-sample, per-agent clamped IC and IR gaps, each ``(B, n)``."""
    enc = learner.enc
    mech = mech or learner.nets["mech"]
    opt = opt or learner.nets["opt"]
    temp = learner.cfg.gumbel_temperature
    nets = learner.nets

    def ic(f, t, rows):
        vals = ic_values(enc, mech, nets["q_dev"], nets["v_dev"], f, t, rows, temp, None, noise=False)
        return vals["q"], vals["v"]

    def ir(f, t, rows):
        vals = ir_values(enc, mech, opt, nets["q_opt"], nets["v_dev"], f, t, rows, temp, None, noise=False)
        return vals["q"], vals["v"]

    return _gaps(ic, feats, types, enc.n, chunk), _gaps(ir, feats, types, enc.n, chunk)


def estimate_incentives(learner, states, types, mech=None, opt=None):
    feats = learner.enc.features(states)
    ic, ir = incentive_gaps(learner, feats, np.asarray(types), mech, opt)
    return IncentiveReport(ic.mean(axis=0), ir.mean(axis=0), float(ic.max(axis=1).mean()), float(ir.max(axis=1).mean()))


def _snapshot_nets(learner, entry):
    mech = learner.nets["mech"].clone()
    opt = learner.nets["opt"].clone()
    mech.load_flat(entry.on_path)
    opt.load_flat(entry.opt_out)
    return mech, opt


def _entries(eval_buffer):
    entries = eval_buffer.entries if hasattr(eval_buffer, "entries") else [eval_buffer]
    if not entries:
        raise NoSnapshots("no snapshots recorded")
    return entries


def estimated_ic(eval_buffer, learner, states, types):
    """IC estimate of saved snapshots under the learner's (converged) critics.

    Accepts a single snapshot or a buffer; for a buffer the estimate is the
    mean over its entries.
    """
    vals = []
    for e in _entries(eval_buffer):
        mech, opt = _snapshot_nets(learner, e)
        vals.append(estimate_incentives(learner, states, types, mech, opt).ic_max)
    return float(np.mean(vals))


def estimated_ir(eval_buffer, learner, states, types):
    vals = []
    for e in _entries(eval_buffer):
        mech, opt = _snapshot_nets(learner, e)
        vals.append(estimate_incentives(learner, states, types, mech, opt).ir_max)
    return float(np.mean(vals))

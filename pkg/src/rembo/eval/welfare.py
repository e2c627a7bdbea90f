"""Greedy Monte-Carlo welfare of a mechanism."""

from dataclasses import dataclass

import numpy as np

from ..game import sample_types


@dataclass
class WelfareReport:
    welfare: float  # mean discounted social welfare U
    per_step: float  # mean undiscounted welfare per stage
    per_agent: np.ndarray
    stderr: float


class RandomMechanism:
    """Recommends a uniformly random action to every agent at every step."""

    def __init__(self, env, rng_seed=0):
        self.spec = env.spec
        self.rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)

    def actions_batch(self, states, types):
        counts = np.asarray(self.spec.action_counts)
        return (self.rng.random((len(states), len(counts))) * counts).astype(np.int64)


def joint_actions(mechanism, states, types):
    """Recommended joint actions for a batch of (state, type profile) pairs."""
    if hasattr(mechanism, "actions_batch"):
        return np.asarray(mechanism.actions_batch(states, types), dtype=np.int64)
    out = np.empty(types.shape, dtype=np.int64)
    for e, (s, th) in enumerate(zip(states, types)):
        pols = mechanism.on_path(th)
        out[e] = [pi(s, int(th[i])) for i, pi in enumerate(pols)]
    return out


def welfare_eval(env, mechanism, n_episodes, rng_seed, types=None):
    """Play ``n_episodes`` greedy episodes, all episodes advanced in lockstep.

    Fresh type profiles are drawn per episode unless ``types`` fixes one.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    spec = env.spec
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    if types is None:
        profiles = np.stack([sample_types(spec, rng) for _ in range(n_episodes)])
    else:
        profiles = np.repeat(np.asarray(types, dtype=np.int64)[None], n_episodes, axis=0)
    states = np.stack([env.reset(th, rng) for th in profiles])
    disc = np.zeros((n_episodes, spec.n_agents))
    undisc = np.zeros((n_episodes, spec.n_agents))
    for t in range(spec.horizon + 1):
        acts = joint_actions(mechanism, states, profiles)
        for e in range(n_episodes):
            ns, r = env.step(states[e], acts[e], profiles[e], rng)
            states[e] = ns
            disc[e] += spec.discount**t * np.asarray(r)
            undisc[e] += r
    w = disc.sum(axis=1)
    se = float((w - w[0]).std(ddof=1) / np.sqrt(n_episodes)) if n_episodes > 1 else 0.0
    return WelfareReport(
        welfare=float(w.mean()),
        per_step=float(undisc.sum(axis=1).mean() / (spec.horizon + 1)),
        per_agent=disc.mean(axis=0),
        stderr=se,
    )

"""Shared environment interface and observation layout.

Every observation is a grid with one row per agent. Columns are, in order:
state features, type one-hot, action one-hot and a single "self" flag that
marks the agent a per-agent network is evaluated for. Matrix games flatten
this grid into a vector; the other games feed it to a CNN as-is.
"""

import numpy as np


class Env:
    id = "env"
    net_kind = "mlp"
    spec = None

    def reset(self, types, rng):
        raise NotImplementedError

    def step(self, state, actions, types, rng=None):
        raise NotImplementedError

    def features(self, states):
        """Per-agent state features, shape ``(batch, n_agents, n_features)``."""
        raise NotImplementedError

    @property
    def n_features(self):
        return self.features(self.reset(np.zeros(self.spec.n_agents, dtype=np.int64), np.random.default_rng(0))[None]).shape[-1]

    @property
    def is_matrix(self):
        return False

    def layout(self):
        return RowLayout(self.spec.n_agents, self.n_features, self.spec.max_types, self.spec.max_actions)


class RowLayout:
    """Column bookkeeping for the per-agent observation grid."""

    def __init__(self, n_agents, n_features, n_types, n_actions):
        self.n = n_agents
        self.f = n_features
        self.t = n_types
        self.a = n_actions
        self.type_cols = slice(self.f, self.f + self.t)
        self.action_cols = slice(self.f + self.t, self.f + self.t + self.a)
        self.self_col = self.f + self.t + self.a
        self.width = self.self_col + 1

    @property
    def shape(self):
        return (self.n, self.width)

    def assemble(self, feats, types=None, type_mask=None, actions=None, self_index=None, dtype=np.float32):
        """Build the grid for a batch.

        ``types`` is an int array ``(B, n)``; ``type_mask`` ``(B, n)`` zeroes
        the type one-hot of hidden agents. ``actions`` is an already one-hot
        float array ``(B, n, A)`` (so gradients can be taken w.r.t. it).
        ``self_index`` ``(B,)`` sets the self flag on one row.
        """
        b = feats.shape[0]
        x = np.zeros((b, self.n, self.width), dtype=dtype)
        x[:, :, : self.f] = feats
        if types is not None:
            oh = one_hot(types, self.t, dtype)
            if type_mask is not None:
                oh *= type_mask[..., None]
            x[:, :, self.type_cols] = oh
        if actions is not None:
            x[:, :, self.action_cols] = actions
        if self_index is not None:
            x[np.arange(b), self_index, self.self_col] = 1.0
        return x


def one_hot(indices, depth, dtype=np.float32):
    indices = np.asarray(indices)
    out = np.zeros(indices.shape + (depth,), dtype=dtype)
    np.put_along_axis(out, indices[..., None], 1.0, axis=-1)
    return out


def encode_state(env, state, types, actions=None, agent=None, flat=None):
    """Observation for a single state.

    ``flat`` defaults to the env's network kind: a vector for matrix games,
    a ``(n_agents, width)`` grid otherwise.
    """
    layout = env.layout()
    types = np.asarray(types, dtype=np.int64)[None]
    acts = None if actions is None else one_hot(np.asarray(actions)[None], layout.a)
    self_index = None if agent is None else np.array([agent])
    x = layout.assemble(env.features(np.asarray(state)[None]), types, None, acts, self_index)[0]
    if flat is None:
        flat = env.net_kind == "mlp"
    return x.reshape(-1) if flat else x

import numpy as np

from ..envs.base import RowLayout, one_hot


class Encoder:
    """Turns batches of states/types/actions into network inputs for one env.

    Networks that never read actions (the mechanism branches) get rows
    without the action block; ``build`` picks that layout whenever
    ``actions`` is ``None``.
    """

    def __init__(self, env, dtype=np.float32):
        self.env = env
        self.dtype = np.dtype(dtype)
        self.layout = env.layout()
        self.n = self.layout.n
        self.n_actions = self.layout.a
        self.n_types = self.layout.t
        if len(set(env.spec.action_counts)) != 1 or len(set(env.spec.type_counts)) != 1:
            raise ValueError("all agents must share action and type set sizes")
        self.policy_layout = RowLayout(self.n, self.layout.f, self.n_types, 0)
        self.flat = env.net_kind == "mlp"
        self.input_shape = self._shape(self.layout)
        self.policy_input_shape = self._shape(self.policy_layout)

    def _shape(self, layout):
        return (self.n * layout.width,) if self.flat else (self.n, layout.width)

    def features(self, states):
        return self.env.features(states)

    def build(self, feats, types=None, type_mask=None, actions=None, self_index=None):
        layout = self.policy_layout if actions is None else self.layout
        x = layout.assemble(feats, types, type_mask, actions, self_index, self.dtype)
        return x.reshape(len(x), -1) if self.flat else x

    def action_grad(self, gx):
        g = gx.reshape(gx.shape[0], self.n, self.layout.width)
        return g[:, :, self.layout.action_cols]

    def one_hot_actions(self, actions):
        return one_hot(actions, self.n_actions, self.dtype)

    def heads(self, out):
        return out.reshape(out.shape[0], self.n, self.n_actions)


def agent_rows(batch_size, n_agents, sample, rng):
    """Pair batch rows with agents.

    ``sample == 0`` enumerates every agent for every row (weight 1);
    otherwise one agent per row is drawn uniformly and weighted by ``n``
    so sums over agents stay unbiased.
    """
    if sample == 0 or n_agents == 1:
        b = np.repeat(np.arange(batch_size), n_agents)
        i = np.tile(np.arange(n_agents), batch_size)
        return b, i, 1.0
    b = np.arange(batch_size)
    i = rng.integers(0, n_agents, size=batch_size)
    return b, i, float(n_agents)


def self_masks(rows_i, n_agents):
    """``(own, others)`` float masks of shape ``(R, n)``."""
    own = np.zeros((len(rows_i), n_agents), dtype=np.float32)
    own[np.arange(len(rows_i)), rows_i] = 1.0
    return own, 1.0 - own

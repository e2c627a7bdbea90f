import numpy as np
import pytest

from rembo.config import load_config
from rembo.envs.base import Env
from rembo.game import GameSpec


class ChainMDP(Env):
    """Two states, two actions, one agent, deterministic transitions.

    Action 0 stays, action 1 moves to the other state. Reward is 1 for
    staying in state 1 and 0 otherwise. Episodes run ``horizon + 1`` steps
    and start in state 0.
    """

    id = "chain"
    net_kind = "mlp"

    def __init__(self, horizon=20, discount=0.9):
        self.spec = GameSpec(1, 1, (2,), (1,), ((1.0,),), horizon, discount)

    def reset(self, types, rng=None):
        return np.zeros(1, dtype=np.float32)

    def step(self, state, actions, types, rng=None):
        s = int(state[0])
        a = int(actions[0])
        nxt = s if a == 0 else 1 - s
        return np.array([nxt], dtype=np.float32), np.array([1.0 if (s == 1 and a == 0) else 0.0])

    @property
    def n_features(self):
        return 2

    def features(self, states):
        s = np.asarray(states)[:, 0].astype(np.int64)
        f = np.zeros((len(s), 1, 2), dtype=np.float32)
        f[np.arange(len(s)), 0, s] = 1.0
        return f


class CoinFlipEnv(Env):
    """One agent, one step; the initial state is 0 or 1 with equal chance and pays its own value."""

    net_kind = "mlp"

    def __init__(self):
        self.spec = GameSpec(1, 1, (1,), (1,), ((1.0,),), 0, 0.9)

    def reset(self, types, rng):
        return np.array([float(rng.integers(0, 2))], dtype=np.float32)

    def step(self, state, actions, types, rng=None):
        return state, np.array([float(state[0])])


@pytest.fixture
def chain():
    return ChainMDP()


def small_cfg(env, tmp_path, **kw):
    """Shipped defaults for ``env`` shrunk for fast tests."""
    over = dict(total_steps=200, eval_interval=50, eval_episodes=4, seeds="0", output_dir=str(tmp_path))
    over.update(kw)
    return load_config(env, overrides=over)


@pytest.fixture
def tiny_cfg(tmp_path):
    def make(env="chicken", **kw):
        return small_cfg(env, tmp_path, **kw)

    return make

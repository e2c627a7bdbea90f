"""Repeated two-player matrix games with private types."""

import numpy as np

from ..game import GameSpec, uniform_prior
from .base import Env

CHICKEN, DARE = 0, 1
RA, RT = 0, 1
STAG, RABBIT = 0, 1
S, R = 0, 1

# payoff[row type][column type] = 2x2 table of (row, column) payoffs,
# rows/columns ordered (Chicken, Dare) or (Stag, Rabbit)
CHICKEN_PAYOFFS = {
    (RA, RA): [[(2, 2), (1, 3)], [(3, 1), (0, 0)]],
    (RA, RT): [[(2, 1), (1, 3)], [(3, 0), (0, 1)]],
    (RT, RA): [[(1, 2), (0, 3)], [(3, 1), (1, 0)]],
    (RT, RT): [[(1, 1), (0, 3)], [(3, 0), (1, 1)]],
}

STAG_HUNT_PAYOFFS = {
    (S, S): [[(3, 3), (0, 1)], [(1, 0), (1, 1)]],
    (S, R): [[(3, 2), (0, 3)], [(1, 0), (1, 3)]],
    (R, S): [[(2, 3), (0, 1)], [(3, 0), (3, 1)]],
    (R, R): [[(2, 2), (0, 3)], [(3, 0), (3, 3)]],
}


class MatrixGame(Env):
    """Bayesian bimatrix game repeated over ``horizon + 1`` stages.

    There is a single dummy state, so the state vector is ``[0.0]``.
    """

    net_kind = "mlp"

    def __init__(self, env_id, payoffs, type_names, action_names, horizon=9, discount=0.99, prior=None):
        self.id = env_id
        self.type_names = tuple(type_names)
        self.action_names = tuple(action_names)
        table = np.zeros((2, 2, 2, 2, 2), dtype=np.float64)
        for (t0, t1), rows in payoffs.items():
            table[t0, t1] = np.array(rows, dtype=np.float64)
        self.payoff_tables = table
        self.spec = GameSpec(
            n_agents=2,
            state_dim=1,
            action_counts=(2, 2),
            type_counts=(2, 2),
            type_prior=prior or uniform_prior((2, 2)),
            horizon=horizon,
            discount=discount,
        )

    @property
    def is_matrix(self):
        return True

    def stage_rewards(self, types, actions):
        return self.payoff_tables[types[0], types[1], actions[0], actions[1]]

    def reset(self, types, rng=None):
        return np.zeros(1, dtype=np.float32)

    def step(self, state, actions, types, rng=None):
        return state, self.stage_rewards(types, actions).copy()

    @property
    def n_features(self):
        return 1

    def features(self, states):
        states = np.asarray(states, dtype=np.float32)
        return np.repeat(states[:, None, :1], self.spec.n_agents, axis=1)


def matrix_step(game, types, actions):
    return game.stage_rewards(types, actions).copy()


def chicken(horizon=9, discount=0.99, prior=None):
    return MatrixGame("chicken", CHICKEN_PAYOFFS, ("RA", "RT"), ("Chicken", "Dare"), horizon, discount, prior)


def stag_hunt(horizon=9, discount=0.99, prior=None):
    return MatrixGame("stag_hunt", STAG_HUNT_PAYOFFS, ("S", "R"), ("Stag", "Rabbit"), horizon, discount, prior)

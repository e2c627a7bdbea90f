"""Two-lane road where drivers enter in waves and race to private targets.

Road layout per lane: Start -> part 0 -> change point -> part 1 -> change
point -> part 2 -> target. Target 1 ends Lane 1 and Target 2 ends Lane 2.

State vector: ``[position(N), lane(N), t]`` with positions ``-1`` (not yet
entered), ``0..2`` (road part) and ``3`` (exited).
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..game import GameSpec, uniform_prior
from .base import Env

log = logging.getLogger(__name__)

NOT_ENTERED, EXITED = -1, 3
N_PARTS = 3
STAY, SWITCH = 0, 1


@dataclass(frozen=True)
class LaneGameConfig:
    n_total: int = 15
    entrants_per_step: int = 5
    lane_coefficients: tuple = (1.0, 3.0)
    target_reward: float = 20.0
    change_points: tuple = (1, 2)

    def __post_init__(self):
        if self.n_total != 3 * self.entrants_per_step:
            raise ValueError("n_total must be three waves of entrants_per_step drivers")
        if abs(self.lane_coefficients[1] - 3 * self.lane_coefficients[0]) > 1e-12:
            raise ValueError("Lane 2 delay coefficient must be 3x Lane 1")

    @property
    def n_waves(self):
        return self.n_total // self.entrants_per_step


class LaneGame(Env):
    net_kind = "cnn"

    def __init__(self, env_id="lane15", config=None, horizon=None, discount=0.99, prior=None):
        self.id = env_id
        self.config = config or LaneGameConfig()
        n = self.config.n_total
        self.wave = np.arange(n) // self.config.entrants_per_step
        if horizon is None:
            # last wave enters at n_waves - 1 and needs three more steps to exit
            horizon = self.config.n_waves + N_PARTS - 1
        self.coef = np.asarray(self.config.lane_coefficients, dtype=np.float64)
        self.spec = GameSpec(
            n_agents=n,
            state_dim=2 * n + 1,
            action_counts=(2,) * n,
            type_counts=(2,) * n,
            type_prior=prior or uniform_prior((2,) * n),
            horizon=horizon,
            discount=discount,
        )
        self._warned = False

    def reset(self, types, rng=None):
        n = self.spec.n_agents
        self._warned = False
        state = np.zeros(2 * n + 1, dtype=np.float32)
        state[:n] = NOT_ENTERED
        state[n : 2 * n] = -1
        return state

    def decode(self, state):
        n = self.spec.n_agents
        return state[:n].astype(np.int64), state[n : 2 * n].astype(np.int64), int(state[-1])

    def step(self, state, actions, types, rng=None):
        n = self.spec.n_agents
        k = self.config.entrants_per_step
        pos, lane, t = self.decode(state)
        actions = np.asarray(actions, dtype=np.int64)
        types = np.asarray(types, dtype=np.int64)

        new_pos, new_lane = pos.copy(), lane.copy()
        entering = (pos == NOT_ENTERED) & (self.wave == t)
        new_pos[entering] = 0
        new_lane[entering] = actions[entering]

        moving = (pos >= 0) & (pos < N_PARTS - 1)
        switch = moving & (actions == SWITCH)
        new_lane[switch] = 1 - lane[switch]
        new_pos[moving] = pos[moving] + 1

        exiting = pos == N_PARTS - 1
        if not self._warned and np.any(exiting & (actions == SWITCH)):
            log.debug("switch requested past the last change point; treated as stay")
            self._warned = True
        new_pos[exiting] = EXITED
        reached = exiting & (lane == types)

        on_road = (new_pos >= 0) & (new_pos < N_PARTS)
        occ = np.zeros((2, N_PARTS))
        np.add.at(occ, (new_lane[on_road], new_pos[on_road]), 1.0)
        utilization = occ[:, ::-1].cumsum(axis=1)[:, ::-1]
        # a change across boundary b affects everyone on parts 0..b
        boundaries = pos[switch] + 1
        affected = np.array([np.count_nonzero(boundaries >= p) for p in range(N_PARTS)], dtype=np.float64)

        rewards = np.zeros(n)
        idx = np.flatnonzero(on_road)
        l, p = new_lane[idx], new_pos[idx]
        rewards[idx] = -((utilization[l, p] + affected[p]) / k) * self.coef[l]
        rewards += self.config.target_reward * reached

        next_state = np.empty_like(state)
        next_state[:n] = new_pos
        next_state[n : 2 * n] = new_lane
        next_state[-1] = t + 1
        return next_state, rewards

    def features(self, states):
        states = np.asarray(states)
        n = self.spec.n_agents
        b = states.shape[0]
        pos = states[:, :n].astype(np.int64)
        lane = states[:, n : 2 * n].astype(np.int64)
        t = states[:, -1]
        f = np.zeros((b, n, 9), dtype=np.float32)
        np.put_along_axis(f[:, :, :5], (pos + 1)[..., None], 1.0, axis=-1)
        entered = lane >= 0
        f[:, :, 5] = entered & (lane == 0)
        f[:, :, 6] = entered & (lane == 1)
        f[:, :, 7] = (pos == NOT_ENTERED) & (self.wave[None, :] == t[:, None])
        f[:, :, 8] = (t / max(self.spec.horizon, 1))[:, None]
        return f

    @property
    def n_features(self):
        return 9


def lane_step(env, state, actions, types):
    return env.step(state, actions, types)


def lane15(**kw):
    return LaneGame("lane15", LaneGameConfig(15, 5), **kw)


def lane30(**kw):
    return LaneGame("lane30", LaneGameConfig(30, 10), **kw)

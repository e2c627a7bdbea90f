"""Bayesian stochastic games, Markov policies, mechanisms and utilities."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

# (state, own type) -> own action index
Policy = Callable[[np.ndarray, int], int]


@dataclass(frozen=True)
class GameSpec:
    n_agents: int
    state_dim: int
    action_counts: tuple
    type_counts: tuple
    type_prior: tuple
    horizon: int
    discount: float

    def __post_init__(self):
        n = self.n_agents
        if n < 1:
            raise ValueError("n_agents must be positive")
        if len(self.action_counts) != n or len(self.type_counts) != n or len(self.type_prior) != n:
            raise ValueError("per-agent fields must have n_agents entries")
        if min(self.action_counts) < 1 or min(self.type_counts) < 1:
            raise ValueError("every agent needs at least one action and one type")
        for i, row in enumerate(self.type_prior):
            if len(row) != self.type_counts[i]:
                raise ValueError(f"prior of agent {i} has {len(row)} entries, expected {self.type_counts[i]}")
            if min(row) < 0 or abs(sum(row) - 1.0) > 1e-9:
                raise ValueError(f"prior of agent {i} is not a distribution")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie strictly inside (0, 1)")

    @property
    def max_actions(self):
        return max(self.action_counts)

    @property
    def max_types(self):
        return max(self.type_counts)


def uniform_prior(type_counts):
    return tuple(tuple(1.0 / k for _ in range(k)) for k in type_counts)


@dataclass
class Transition:
    state: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_state: np.ndarray
    types: np.ndarray
    done: bool


@dataclass
class UtilityReport:
    per_agent: np.ndarray
    welfare: float
    per_agent_stderr: Optional[np.ndarray] = None
    welfare_stderr: Optional[float] = None


def constant_policy(action):
    def policy(state, own_type):
        return action

    return policy


def table_policy(table):
    """Policy choosing ``table[own_type]`` regardless of state."""
    table = tuple(int(a) for a in table)

    def policy(state, own_type):
        return table[own_type]

    return policy


class Mechanism(ABC):
    """Maps reported type profiles to policy profiles.

    ``on_path`` covers the all-report contingency; ``opt_out(i, ...)`` covers
    the case where agent ``i`` withholds its report and returns policies for
    the remaining agents in increasing index order.
    """

    n_agents: int

    @abstractmethod
    def on_path(self, types) -> list:
        ...

    @abstractmethod
    def opt_out(self, agent, others_types) -> list:
        ...


class TableMechanism(Mechanism):
    """Stateless mechanism given as lookup tables (repeated matrix games).

    ``on_path_table`` has shape ``(*type_counts, n)``. ``opt_out_tables[i]``
    has shape ``(*type_counts without i, n - 1)``.
    """

    def __init__(self, on_path_table, opt_out_tables=None):
        self.on_path_table = np.asarray(on_path_table, dtype=np.int64)
        self.n_agents = self.on_path_table.shape[-1]
        if self.on_path_table.ndim != self.n_agents + 1:
            raise ValueError("on-path table must have one axis per agent plus the action axis")
        if opt_out_tables is None:
            opt_out_tables = [default_opt_out_table(self.on_path_table, i) for i in range(self.n_agents)]
        self.opt_out_tables = [np.asarray(t, dtype=np.int64) for t in opt_out_tables]
        for i, t in enumerate(self.opt_out_tables):
            if t.ndim != self.n_agents or t.shape[-1] != self.n_agents - 1:
                raise ValueError(f"opt-out table for agent {i} has shape {t.shape}")

    def actions(self, types):
        return self.on_path_table[tuple(types)]

    def opt_out_actions(self, agent, others_types):
        return self.opt_out_tables[agent][tuple(others_types)]

    def on_path(self, types):
        profile = self.actions(types)
        return [constant_policy(int(a)) for a in profile]

    def opt_out(self, agent, others_types):
        profile = self.opt_out_actions(agent, others_types)
        return [constant_policy(int(a)) for a in profile]


def default_opt_out_table(on_path_table, agent):
    """Opt-out behaviour copying the on-path recommendation with the absent report set to type 0."""
    table = np.take(on_path_table, 0, axis=agent)
    return np.delete(table, agent, axis=-1)


def sample_types(spec, rng_seed):
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return np.array(
        [rng.choice(spec.type_counts[i], p=spec.type_prior[i]) for i in range(spec.n_agents)],
        dtype=np.int64,
    )


def rollout(env, policies: Sequence[Policy], types, rng_seed):
    """Play one episode of ``H + 1`` steps with a fixed policy profile."""
    spec = env.spec
    if len(policies) != spec.n_agents:
        raise ValueError(f"need {spec.n_agents} policies, got {len(policies)}")
    types = np.asarray(types, dtype=np.int64)
    for i, th in enumerate(types):
        if not 0 <= th < spec.type_counts[i]:
            raise ValueError(f"type {th} of agent {i} outside its type space")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    state = env.reset(types, rng)
    trajectory = []
    for t in range(spec.horizon + 1):
        actions = np.empty(spec.n_agents, dtype=np.int64)
        for i, pi in enumerate(policies):
            a = int(pi(state, int(types[i])))
            if not 0 <= a < spec.action_counts[i]:
                raise RuntimeError(f"policy of agent {i} emitted action {a} outside [0, {spec.action_counts[i]})")
            actions[i] = a
        next_state, rewards = env.step(state, actions, types, rng)
        trajectory.append(
            Transition(state, actions, np.asarray(rewards, dtype=np.float64), next_state, types.copy(), t == spec.horizon)
        )
        state = next_state
    return trajectory


def utility(trajectory, discount):
    if not trajectory:
        raise ValueError("empty trajectory")
    rewards = np.array([tr.rewards for tr in trajectory], dtype=np.float64)
    weights = discount ** np.arange(len(trajectory))
    per_agent = weights @ rewards
    return UtilityReport(per_agent=per_agent, welfare=float(per_agent.sum()))


def mc_utility(env, policies, types, n_rollouts, rng_seed):
    """Monte-Carlo estimate of expected utilities with standard errors."""
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be at least 1")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    samples = np.array(
        [utility(rollout(env, policies, types, rng), env.spec.discount).per_agent for _ in range(n_rollouts)]
    )
    welfare = samples.sum(axis=1)
    if n_rollouts > 1:
        # centring first keeps the spread of identical samples exactly zero
        se = (samples - samples[0]).std(axis=0, ddof=1) / np.sqrt(n_rollouts)
        wse = float((welfare - welfare[0]).std(ddof=1) / np.sqrt(n_rollouts))
    else:
        se = np.zeros(samples.shape[1])
        wse = 0.0
    per_agent = samples.mean(axis=0)
    return UtilityReport(per_agent=per_agent, welfare=float(per_agent.sum()), per_agent_stderr=se, welfare_stderr=wse)

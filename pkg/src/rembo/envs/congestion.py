"""Atomic congestion games on small directed graphs.

Types are (origin, destination) pairs. An action is an index into the
outgoing edges of the agent's current node; out-of-range indices fall back
to the first outgoing edge. Edge cost is ``c(x) = x`` (linear) or
``c(x) = 1`` (constant) with ``x`` the fraction of all agents taking that
edge in the same step. An agent stuck on a dead end that is not its
destination pays the constant cost 1 each step.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..game import GameSpec, uniform_prior
from .base import Env

log = logging.getLogger(__name__)

LINEAR, CONSTANT = "linear", "constant"


@dataclass
class CongestionGraph:
    n_nodes: int
    edges: list  # (tail, head, kind)
    od_pairs: list  # type index -> (origin, destination)
    n_agents: int = 10
    node_names: tuple = ()
    out_edges: list = field(init=False)

    def __post_init__(self):
        self.out_edges = [[e for e, (u, _, _) in enumerate(self.edges) if u == node] for node in range(self.n_nodes)]
        self.heads = np.array([v for _, v, _ in self.edges], dtype=np.int64)
        self.linear = np.array([kind == LINEAR for _, _, kind in self.edges])
        for o, d in self.od_pairs:
            if not self.connected(o, d):
                raise ValueError(f"destination {d} unreachable from {o}")

    def connected(self, src, dst):
        seen, frontier = {src}, [src]
        while frontier:
            u = frontier.pop()
            for e in self.out_edges[u]:
                v = self.edges[e][1]
                if v not in seen:
                    seen.add(v)
                    frontier.append(v)
        return dst in seen

    @property
    def max_out_degree(self):
        return max(len(o) for o in self.out_edges)


def edge_cost(kind, fraction):
    return fraction if kind == LINEAR else 1.0


def three_destination_graph(n_agents=10):
    # s=0 with destinations 1..3, each behind a linear and a constant edge
    edges = []
    for d in (1, 2, 3):
        edges += [(0, d, LINEAR), (0, d, CONSTANT)]
    return CongestionGraph(4, edges, [(0, 1), (0, 2), (0, 3)], n_agents, ("s", "d1", "d2", "d3"))


def intersection_graph(n_agents=10):
    # boundary nodes 0..3 around centre 4: spokes are linear, ring roads constant
    edges = []
    for b in range(4):
        edges += [(b, 4, LINEAR), (4, b, LINEAR)]
    for b in range(4):
        nxt = (b + 1) % 4
        edges += [(b, nxt, CONSTANT), (nxt, b, CONSTANT)]
    od = [(o, d) for o in range(4) for d in range(4) if o != d]
    return CongestionGraph(5, edges, od, n_agents, ("n", "e", "s", "w", "c"))


class CongestionGame(Env):
    """State vector: ``[node(n), arrived(n), t]``."""

    net_kind = "cnn"

    def __init__(self, env_id, graph, horizon, discount=0.99, prior=None):
        self.id = env_id
        self.graph = graph
        n = graph.n_agents
        n_types = len(graph.od_pairs)
        self.origins = np.array([o for o, _ in graph.od_pairs], dtype=np.int64)
        self.destinations = np.array([d for _, d in graph.od_pairs], dtype=np.int64)
        self.spec = GameSpec(
            n_agents=n,
            state_dim=2 * n + 1,
            action_counts=(graph.max_out_degree,) * n,
            type_counts=(n_types,) * n,
            type_prior=prior or uniform_prior((n_types,) * n),
            horizon=horizon,
            discount=discount,
        )
        self._warned = False

    def reset(self, types, rng=None):
        n = self.spec.n_agents
        types = np.asarray(types, dtype=np.int64)
        self._warned = False
        state = np.zeros(2 * n + 1, dtype=np.float32)
        state[:n] = self.origins[types]
        state[n : 2 * n] = self.origins[types] == self.destinations[types]
        return state

    def resolve_edges(self, nodes, actions):
        """Edge id per agent (-1 for agents on a dead end)."""
        edges = np.full(len(nodes), -1, dtype=np.int64)
        for j, (node, a) in enumerate(zip(nodes, actions)):
            outs = self.graph.out_edges[node]
            if not outs:
                continue
            if 0 <= a < len(outs):
                edges[j] = outs[a]
            else:
                if not self._warned:
                    log.debug("action %d not an outgoing edge of node %d; using edge %d", a, node, outs[0])
                    self._warned = True
                edges[j] = outs[0]
        return edges

    def step(self, state, actions, types, rng=None):
        n = self.spec.n_agents
        nodes = state[:n].astype(np.int64)
        arrived = state[n : 2 * n] > 0.5
        t = state[-1]
        types = np.asarray(types, dtype=np.int64)
        dest = self.destinations[types]

        moving = ~arrived
        edges = self.resolve_edges(nodes, np.asarray(actions, dtype=np.int64))
        travelling = moving & (edges >= 0)
        stranded = moving & (edges < 0)

        load = np.bincount(edges[travelling], minlength=len(self.graph.edges)).astype(np.float64)
        frac = load / n
        cost = np.zeros(n)
        e = edges[travelling]
        cost[travelling] = np.where(self.graph.linear[e], frac[e], 1.0)
        cost[stranded] = 1.0

        new_nodes = nodes.copy()
        new_nodes[travelling] = self.graph.heads[e]
        next_state = np.empty_like(state)
        next_state[:n] = new_nodes
        next_state[n : 2 * n] = arrived | (new_nodes == dest)
        next_state[-1] = t + 1
        return next_state, -cost

    def features(self, states):
        states = np.asarray(states)
        n = self.spec.n_agents
        v = self.graph.n_nodes
        b = states.shape[0]
        f = np.zeros((b, n, v + 2), dtype=np.float32)
        np.put_along_axis(f[:, :, :v], states[:, :n].astype(np.int64)[..., None], 1.0, axis=-1)
        f[:, :, v] = states[:, n : 2 * n]
        f[:, :, v + 1] = (states[:, -1] / max(self.spec.horizon, 1))[:, None]
        return f

    @property
    def n_features(self):
        return self.graph.n_nodes + 2


def congestion_step(env, state, actions, types):
    return env.step(state, actions, types)


def congestion3(horizon=3, discount=0.99, prior=None, n_agents=10):
    return CongestionGame("congestion3", three_destination_graph(n_agents), horizon, discount, prior)


def intersection(horizon=5, discount=0.99, prior=None, n_agents=10):
    return CongestionGame("intersection", intersection_graph(n_agents), horizon, discount, prior)

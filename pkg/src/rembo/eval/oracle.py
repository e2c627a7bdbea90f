"""Brute-force incentive oracles for repeated matrix games.

Mechanisms in matrix games recommend constant actions, so the undiscounted
per-step average of any deviation equals its stage payoff; the oracles work
on stage payoffs directly.
"""

import itertools

import numpy as np


def _profiles(type_counts):
    return list(itertools.product(*(range(c) for c in type_counts)))


def _prior_weight(spec, types):
    return float(np.prod([spec.type_prior[i][t] for i, t in enumerate(types)]))


def exact_ic_matrix(game, mechanism):
    """Prior-weighted per-agent IC violation of a table mechanism.

    For each type profile and agent the gain is the best payoff over
    misreports and actions against the others' recommendations induced by the
    misreport, minus the truthful on-path payoff, clamped at 0.
    """
    spec = game.spec
    n = spec.n_agents
    out = np.zeros(n)
    for theta in _profiles(spec.type_counts):
        w = _prior_weight(spec, theta)
        if w == 0:
            continue
        on_path = np.asarray(mechanism.actions(theta))
        base = game.stage_rewards(theta, on_path)
        for i in range(n):
            best = -np.inf
            for report in range(spec.type_counts[i]):
                reported = list(theta)
                reported[i] = report
                rec = np.array(mechanism.actions(tuple(reported)))
                for a in range(spec.action_counts[i]):
                    rec[i] = a
                    best = max(best, game.stage_rewards(theta, rec)[i])
            out[i] += w * max(0.0, best - base[i])
    return out


def exact_ir_matrix(game, mechanism):
    """Prior-weighted per-agent IR violation against the opt-out branch."""
    spec = game.spec
    n = spec.n_agents
    out = np.zeros(n)
    for theta in _profiles(spec.type_counts):
        w = _prior_weight(spec, theta)
        if w == 0:
            continue
        base = game.stage_rewards(theta, np.asarray(mechanism.actions(theta)))
        for i in range(n):
            others_types = tuple(t for j, t in enumerate(theta) if j != i)
            others = list(mechanism.opt_out_actions(i, others_types))
            best = -np.inf
            for a in range(spec.action_counts[i]):
                acts = np.array(others[:i] + [a] + others[i:])
                best = max(best, game.stage_rewards(theta, acts)[i])
            out[i] += w * max(0.0, best - base[i])
    return out


def exact_welfare_matrix(game, mechanism):
    """Prior-expected per-step welfare of the on-path recommendation."""
    spec = game.spec
    total = 0.0
    for theta in _profiles(spec.type_counts):
        total += _prior_weight(spec, theta) * float(game.stage_rewards(theta, np.asarray(mechanism.actions(theta))).sum())
    return total

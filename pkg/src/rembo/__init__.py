"""Bi-level reinforcement learning of recommender mechanisms for Bayesian stochastic games."""

from .config import RunConfig, load_config
from .envs import ENV_IDS, make_env
from .game import GameSpec, TableMechanism, mc_utility, rollout, sample_types, utility

__version__ = "0.1.0"

__all__ = [
    "ENV_IDS",
    "GameSpec",
    "RunConfig",
    "TableMechanism",
    "load_config",
    "make_env",
    "mc_utility",
    "rollout",
    "sample_types",
    "utility",
]

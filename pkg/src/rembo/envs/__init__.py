from .base import Env, RowLayout, encode_state, one_hot
from .congestion import CongestionGame, CongestionGraph, congestion3, congestion_step, edge_cost, intersection
from .lane import LaneGame, LaneGameConfig, lane15, lane30, lane_step
from .matrix import MatrixGame, chicken, matrix_step, stag_hunt

ENVIRONMENTS = {
    "chicken": chicken,
    "stag_hunt": stag_hunt,
    "lane15": lane15,
    "lane30": lane30,
    "congestion3": congestion3,
    "intersection": intersection,
}

ENV_IDS = tuple(ENVIRONMENTS)


def make_env(env_id, **kwargs):
    """Instantiate a registered environment; ``None`` keyword values are dropped."""
    try:
        factory = ENVIRONMENTS[env_id]
    except KeyError:
        raise ValueError(f"unknown env {env_id!r}; valid ids: {', '.join(ENV_IDS)}") from None
    return factory(**{k: v for k, v in kwargs.items() if v is not None})


__all__ = [
    "ENVIRONMENTS",
    "ENV_IDS",
    "CongestionGame",
    "CongestionGraph",
    "Env",
    "LaneGame",
    "LaneGameConfig",
    "MatrixGame",
    "RowLayout",
    "chicken",
    "congestion3",
    "congestion_step",
    "edge_cost",
    "encode_state",
    "intersection",
    "lane15",
    "lane30",
    "lane_step",
    "make_env",
    "matrix_step",
    "one_hot",
    "stag_hunt",
]

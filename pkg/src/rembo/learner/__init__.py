from .agent import Learner, NetMechanism, make_rngs
from .encoding import Encoder, agent_rows, self_masks
from .losses import (
    LossWeights,
    actor_loss,
    bellman_q_i,
    bellman_v_i,
    critic_td_loss,
    ic_values,
    incentive_losses,
    ir_values,
    loss_ic,
    loss_ir,
    td_error_dqn,
    team_td_loss,
)
from .schedule import SCHEDULES, ExplorationSchedule, epsilon
from .train import RunResult, run_dir_for, train_run

__all__ = [
    "SCHEDULES",
    "Encoder",
    "ExplorationSchedule",
    "Learner",
    "LossWeights",
    "NetMechanism",
    "RunResult",
    "actor_loss",
    "agent_rows",
    "bellman_q_i",
    "bellman_v_i",
    "critic_td_loss",
    "epsilon",
    "ic_values",
    "incentive_losses",
    "ir_values",
    "loss_ic",
    "loss_ir",
    "make_rngs",
    "run_dir_for",
    "self_masks",
    "td_error_dqn",
    "team_td_loss",
    "train_run",
]

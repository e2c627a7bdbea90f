from .aggregate import EWMA_ALPHA, RaggedStreams, aggregate
from .estimate import IncentiveReport, NoSnapshots, estimate_incentives, estimated_ic, estimated_ir, incentive_gaps
from .oracle import exact_ic_matrix, exact_ir_matrix, exact_welfare_matrix
from .welfare import RandomMechanism, WelfareReport, joint_actions, welfare_eval

__all__ = [
    "EWMA_ALPHA",
    "IncentiveReport",
    "NoSnapshots",
    "RaggedStreams",
    "RandomMechanism",
    "WelfareReport",
    "aggregate",
    "estimate_incentives",
    "estimated_ic",
    "estimated_ir",
    "exact_ic_matrix",
    "exact_ir_matrix",
    "exact_welfare_matrix",
    "incentive_gaps",
    "joint_actions",
    "welfare_eval",
]

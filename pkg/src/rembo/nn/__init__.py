from .checkpoint import has_checkpoint, load_arrays, save_arrays
from .gumbel import gumbel_softmax_st, gumbel_softmax_st_backward
from .layers import Conv2d, Flatten, Linear, ReLU, Reshape, ShapeError
from .network import NetSpec, Network, build_network
from .optim import SGD, Adam, TrainingDiverged, make_optimizer, polyak_update, sgd_step

__all__ = [
    "Adam",
    "Conv2d",
    "Flatten",
    "Linear",
    "NetSpec",
    "Network",
    "ReLU",
    "Reshape",
    "SGD",
    "ShapeError",
    "TrainingDiverged",
    "build_network",
    "gumbel_softmax_st",
    "gumbel_softmax_st_backward",
    "has_checkpoint",
    "load_arrays",
    "make_optimizer",
    "polyak_update",
    "save_arrays",
    "sgd_step",
]

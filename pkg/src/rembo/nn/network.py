"""Feed-forward networks backed by a single flat parameter buffer."""

from dataclasses import dataclass, field

import numpy as np

from .layers import Conv2d, Flatten, Linear, ReLU, Reshape, ShapeError


@dataclass(frozen=True)
class NetSpec:
    """Architecture description.

    ``input_shape`` excludes the batch dimension. For ``cnn`` the input is a
    2-D ``(rows, cols)`` grid which gets a single channel prepended.
    """

    kind: str
    input_shape: tuple
    output_size: int
    hidden: tuple = (64, 64)
    filters: int = 6
    kernel: tuple = (3, 3)
    stride: tuple = (1, 1)

    def __post_init__(self):
        if self.kind not in ("mlp", "cnn"):
            raise ShapeError(f"unknown network kind {self.kind!r}")
        if self.output_size < 1:
            raise ShapeError("output_size must be positive")


def _layers_for(spec):
    layers = []
    if spec.kind == "mlp":
        n_in = int(np.prod(spec.input_shape))
        if len(spec.input_shape) != 1:
            layers.append(Flatten())
    else:
        if len(spec.input_shape) != 2:
            raise ShapeError(f"cnn input must be 2-D, got {spec.input_shape}")
        rows, cols = spec.input_shape
        layers.append(Reshape((1, rows, cols)))
        conv = Conv2d(1, spec.filters, spec.kernel, spec.stride)
        c, h, w = conv.output_shape((1, rows, cols))
        layers += [conv, ReLU(), Flatten()]
        n_in = c * h * w
    for width in spec.hidden:
        layers += [Linear(n_in, width), ReLU()]
        n_in = width
    layers.append(Linear(n_in, spec.output_size))
    return layers


class Network:
    """A stack of layers evaluated on batches.

    ``params`` and ``grad`` are flat arrays; ``named_arrays()`` exposes the
    per-layer views (``"3.weight"`` etc.) for checkpointing.
    """

    def __init__(self, spec, rng=None, dtype=np.float32, layers=None):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.layers = layers if layers is not None else _layers_for(spec)
        shape = tuple(spec.input_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
        if shape != (spec.output_size,):
            raise ShapeError(f"network output {shape} != ({spec.output_size},)")

        self._layout = []
        offset = 0
        for li, layer in enumerate(self.layers):
            for name, pshape in layer.param_shapes.items():
                size = int(np.prod(pshape))
                self._layout.append((li, name, offset, pshape))
                offset += size
        self.size = offset
        self.params = np.zeros(offset, dtype=self.dtype)
        self._pviews = self._views(self.params)
        if rng is not None:
            for li, layer in enumerate(self.layers):
                tmp = {k: np.zeros(s, dtype=np.float64) for k, s in layer.param_shapes.items()}
                layer.init_params(tmp, rng)
                for k, v in tmp.items():
                    self._pviews[li][k][...] = v

    def _views(self, flat):
        views = [dict() for _ in self.layers]
        for li, name, offset, pshape in self._layout:
            views[li][name] = flat[offset : offset + int(np.prod(pshape))].reshape(pshape)
        return views

    def named_arrays(self):
        return {f"{li}.{name}": self._pviews[li][name] for li, name, _, _ in self._layout}

    def layer_params(self, index):
        return self._pviews[index]

    def check_input(self, x):
        if tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise ShapeError(f"input {tuple(x.shape[1:])} != {tuple(self.spec.input_shape)}")

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        x = np.asarray(x, dtype=self.dtype)
        self.check_input(x)
        for layer, p in zip(self.layers, self._pviews):
            x, _ = layer.forward(p, x)
        return x

    def forward_train(self, x):
        """Forward pass that also returns the tape needed by :meth:`backward`."""
        x = np.asarray(x, dtype=self.dtype)
        self.check_input(x)
        tape = []
        for layer, p in zip(self.layers, self._pviews):
            x, cache = layer.forward(p, x)
            tape.append(cache)
        return x, tape

    def backward(self, tape, gy, out=None, input_grad=True, param_grad=True):
        """Backpropagate ``gy``; returns ``(param_grad_flat, input_grad)``.

        Parameter gradients are accumulated into ``out`` when given. Either
        half can be switched off, in which case ``None`` is returned for it.
        """
        grad = None
        gviews = [None] * len(self.layers)
        if param_grad:
            grad = np.zeros(self.size, dtype=self.dtype) if out is None else out
            gviews = self._views(grad)
        g = np.asarray(gy, dtype=self.dtype)
        # below the first parametric layer only the input gradient matters
        first = min(i for i, layer in enumerate(self.layers) if layer.param_shapes)
        stop = 0 if input_grad else first
        for k in range(len(self.layers) - 1, stop - 1, -1):
            g = self.layers[k].backward(self._pviews[k], gviews[k], tape[k], g, need_input=input_grad or k > first)
        return grad, g if input_grad else None

    def clone(self):
        other = Network(self.spec, rng=None, dtype=self.dtype)
        other.params[...] = self.params
        return other

    def load_flat(self, flat):
        flat = np.asarray(flat)
        if flat.shape != self.params.shape:
            raise ShapeError(f"parameter vector {flat.shape} != {self.params.shape}")
        self.params[...] = flat


def build_network(spec, rng, dtype=np.float32):
    return Network(spec, rng=rng, dtype=dtype)

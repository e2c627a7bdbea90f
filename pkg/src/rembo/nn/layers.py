"""Layers with explicit forward/backward passes.

Every layer declares its parameter shapes up front; the owning
:class:`~rembo.nn.network.Network` allocates one flat buffer and hands each
layer views into it, so optimizers and target averaging touch a single array.
"""

import numpy as np


class ShapeError(ValueError):
    """Raised at construction time when layer shapes do not line up."""


class Layer:
    param_shapes: dict = {}

    def output_shape(self, input_shape):
        return input_shape

    def init_params(self, params, rng):
        pass

    def forward(self, params, x):
        raise NotImplementedError

    def backward(self, params, grads, cache, gy, need_input=True):
        """Accumulate parameter gradients into ``grads`` (skipped when ``None``)
        and return the input gradient (``None`` when ``need_input`` is false)."""
        raise NotImplementedError


class Linear(Layer):
    def __init__(self, n_in, n_out):
        self.n_in = n_in
        self.n_out = n_out
        self.param_shapes = {"weight": (n_in, n_out), "bias": (n_out,)}

    def output_shape(self, input_shape):
        if tuple(input_shape) != (self.n_in,):
            raise ShapeError(f"Linear expects input ({self.n_in},), got {tuple(input_shape)}")
        return (self.n_out,)

    def init_params(self, params, rng):
        bound = 1.0 / np.sqrt(self.n_in)
        params["weight"][...] = rng.uniform(-bound, bound, size=params["weight"].shape)
        params["bias"][...] = rng.uniform(-bound, bound, size=params["bias"].shape)

    def forward(self, params, x):
        return x @ params["weight"] + params["bias"], x

    def backward(self, params, grads, x, gy, need_input=True):
        if grads is not None:
            grads["weight"] += x.T @ gy
            grads["bias"] += gy.sum(axis=0)
        return gy @ params["weight"].T if need_input else None


class ReLU(Layer):
    def forward(self, params, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, params, grads, mask, gy, need_input=True):
        return gy * mask


class Reshape(Layer):
    def __init__(self, shape):
        self.shape = tuple(shape)

    def output_shape(self, input_shape):
        if int(np.prod(input_shape)) != int(np.prod(self.shape)):
            raise ShapeError(f"cannot reshape {tuple(input_shape)} into {self.shape}")
        return self.shape

    def forward(self, params, x):
        return x.reshape((x.shape[0],) + self.shape), x.shape

    def backward(self, params, grads, in_shape, gy, need_input=True):
        return gy.reshape(in_shape)


class Flatten(Layer):
    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, params, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, grads, in_shape, gy, need_input=True):
        return gy.reshape(in_shape)


class Conv2d(Layer):
    """Valid (unpadded) 2-D convolution over ``(batch, channels, rows, cols)``."""

    def __init__(self, in_channels, out_channels, kernel=(3, 3), stride=(1, 1)):
        self.cin = in_channels
        self.cout = out_channels
        self.kernel = tuple(kernel)
        self.stride = tuple(stride)
        kh, kw = self.kernel
        self.param_shapes = {"weight": (out_channels, in_channels, kh, kw), "bias": (out_channels,)}

    def output_shape(self, input_shape):
        if len(input_shape) != 3 or input_shape[0] != self.cin:
            raise ShapeError(f"Conv2d expects ({self.cin}, rows, cols), got {tuple(input_shape)}")
        _, h, w = input_shape
        kh, kw = self.kernel
        sh, sw = self.stride
        if h < kh or w < kw:
            raise ShapeError(f"input {h}x{w} smaller than kernel {kh}x{kw}")
        return (self.cout, (h - kh) // sh + 1, (w - kw) // sw + 1)

    def init_params(self, params, rng):
        fan_in = self.cin * self.kernel[0] * self.kernel[1]
        bound = 1.0 / np.sqrt(fan_in)
        params["weight"][...] = rng.uniform(-bound, bound, size=params["weight"].shape)
        params["bias"][...] = rng.uniform(-bound, bound, size=params["bias"].shape)

    def forward(self, params, x):
        kh, kw = self.kernel
        sh, sw = self.stride
        b, c, h, w = x.shape
        ho, wo = (h - kh) // sh + 1, (w - kw) // sw + 1
        # patches[b, c, offset, y, x] built from kh*kw strided slices
        patches = np.empty((b, c, kh * kw, ho, wo), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                patches[:, :, i * kw + j] = x[:, :, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw]
        patches = patches.reshape(b, c * kh * kw, ho * wo)
        y = np.matmul(params["weight"].reshape(self.cout, -1), patches) + params["bias"][:, None]
        return y.reshape(b, self.cout, ho, wo), (patches, x.shape, ho, wo)

    def backward(self, params, grads, cache, gy, need_input=True):
        patches, in_shape, ho, wo = cache
        kh, kw = self.kernel
        sh, sw = self.stride
        b = in_shape[0]
        gflat = gy.reshape(b, self.cout, ho * wo)
        if grads is not None:
            grads["weight"] += np.matmul(gflat, patches.transpose(0, 2, 1)).sum(axis=0).reshape(grads["weight"].shape)
            grads["bias"] += gflat.sum(axis=(0, 2))
        if not need_input:
            return None
        gp = np.matmul(params["weight"].reshape(self.cout, -1).T, gflat).reshape(b, self.cin, kh * kw, ho, wo)
        gx = np.zeros(in_shape, dtype=gy.dtype)
        for i in range(kh):
            for j in range(kw):
                gx[:, :, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw] += gp[:, :, i * kw + j]
        return gx

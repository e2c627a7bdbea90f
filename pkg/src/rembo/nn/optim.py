"""Parameter updates and target-network averaging on flat buffers."""

import numpy as np


class TrainingDiverged(FloatingPointError):
    """A gradient or loss stopped being finite."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


def _check_finite(grads, what="gradient"):
    if not np.all(np.isfinite(grads)):
        bad = int(np.count_nonzero(~np.isfinite(grads)))
        raise TrainingDiverged(f"non-finite {what}: {bad} of {grads.size} entries")


class SGD:
    def __init__(self, size, lr, dtype=np.float32):
        self.lr = lr
        self.t = 0

    def step(self, params, grads):
        _check_finite(grads)
        self.t += 1
        params -= self.lr * grads
        return params

    def state_arrays(self):
        return {}

    def load_state(self, arrays, t):
        self.t = t


class Adam:
    """Adaptive moment estimation with the usual defaults."""

    def __init__(self, size, lr, beta1=0.9, beta2=0.999, eps=1e-8, dtype=np.float32):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size, dtype=dtype)
        self.v = np.zeros(size, dtype=dtype)
        self._tmp = np.zeros(size, dtype=dtype)
        self.t = 0

    def step(self, params, grads):
        _check_finite(grads)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        m, v, tmp = self.m, self.v, self._tmp
        m *= b1
        np.multiply(grads, 1 - b1, out=tmp)
        m += tmp
        v *= b2
        np.multiply(grads, grads, out=tmp)
        tmp *= 1 - b2
        v += tmp
        # params -= lr * mhat / (sqrt(vhat) + eps), with the bias corrections folded in
        np.sqrt(v, out=tmp)
        tmp *= 1.0 / np.sqrt(1 - b2**self.t)
        tmp += self.eps
        np.divide(m, tmp, out=tmp)
        tmp *= self.lr / (1 - b1**self.t)
        params -= tmp
        return params

    def state_arrays(self):
        return {"m": self.m, "v": self.v}

    def load_state(self, arrays, t):
        self.m[...] = arrays["m"]
        self.v[...] = arrays["v"]
        self.t = t


def make_optimizer(kind, size, lr, dtype=np.float32):
    if kind == "adam":
        return Adam(size, lr, dtype=dtype)
    if kind == "sgd":
        return SGD(size, lr, dtype=dtype)
    raise ValueError(f"unknown optimizer {kind!r}")


def sgd_step(params, grads, learning_rate, optimizer_state=None):
    """One update of ``params`` in place; ``optimizer_state=None`` means plain SGD."""
    if optimizer_state is None:
        _check_finite(grads)
        params -= learning_rate * grads
        return params
    optimizer_state.lr = learning_rate
    return optimizer_state.step(params, grads)


def polyak_update(target, online, tau):
    """``target <- tau * online + (1 - tau) * target`` in place."""
    t = target.params if hasattr(target, "params") else target
    o = online.params if hasattr(online, "params") else online
    if t.shape != o.shape:
        raise ValueError(f"target {t.shape} and online {o.shape} differ")
    t *= 1.0 - tau
    t += tau * o
    return target

"""Straight-through Gumbel-Softmax for discrete recommendations."""

import numpy as np


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sample_gumbel(shape, rng, eps=1e-20):
    u = rng.random(shape)
    return -np.log(-np.log(u + eps) + eps)


def gumbel_softmax_st(logits, temperature=1.0, rng=None, noise=True, noise_scale=1.0):
    """Draw a hard one-hot sample along the last axis.

    Returns ``(hard, soft)``. ``hard`` is exactly one-hot at
    ``argmax(logits + g)``; ``soft = softmax((logits + g) / temperature)`` is
    the relaxed path used by :func:`gumbel_softmax_st_backward`. With
    ``noise=False`` the sample is the plain argmax (lowest index on ties).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    logits = np.asarray(logits)
    if noise:
        if rng is None:
            raise ValueError("noise requires an rng")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        z = logits + noise_scale * sample_gumbel(logits.shape, rng).astype(logits.dtype)
    else:
        z = logits
    soft = _softmax(z / temperature)
    idx = z.argmax(axis=-1)
    hard = np.zeros_like(soft)
    np.put_along_axis(hard, idx[..., None], 1.0, axis=-1)
    return hard, soft


def gumbel_softmax_st_backward(soft, grad_hard, temperature=1.0):
    """Gradient w.r.t. logits, passing ``grad_hard`` straight through the softmax."""
    inner = (grad_hard * soft).sum(axis=-1, keepdims=True)
    return soft * (grad_hard - inner) / temperature

"""Pure-numpy twin of the compiled kernel in ``_kernels.pyx``."""

import numpy as np

from .model import MLP, SOFTMAX, ModelSpec, per_sample_gradients

_KINDS = {0: SOFTMAX, 1: MLP}


def clipped_grad_sum(kind, params, x, y, num_classes, hidden, clip_bound):
    """Sum over rows of ``x`` of g / max(1, ||g|| / clip_bound)."""
    spec = ModelSpec(_KINDS[kind], x.shape[1], num_classes, hidden)
    if x.shape[0] == 0:
        return np.zeros(spec.dim, dtype=np.float64)
    grads = per_sample_gradients(spec, params, x, y)
    norms = np.sqrt((grads * grads).sum(axis=1))
    grads /= np.maximum(1.0, norms / clip_bound)[:, None]
    return grads.sum(axis=0)

"""Small classifiers with exact per-sample gradients.

Parameters live in one flat float64 vector. Layouts:

* ``softmax-regression``: ``W`` (classes x features, row-major) then ``b`` (classes).
* ``mlp-1-hidden``: ``W1`` (hidden x features), ``b1`` (hidden), ``W2``
  (classes x hidden), ``b2`` (classes); tanh hidden activation.

The loss is multiclass cross-entropy. Every reduction over samples runs in
index order or with exactly rounded sums, so results do not depend on BLAS
blocking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .data import Dataset

SOFTMAX = "softmax-regression"
MLP = "mlp-1-hidden"
MODEL_KINDS = (SOFTMAX, MLP)


class DimensionError(ValueError):
    """Raised when a vector's length does not match what the model expects."""

    def __init__(self, what: str, expected: int, actual: int):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected length {expected}, got {actual}")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    num_features: int
    num_classes: int
    hidden_width: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.num_features < 1 or self.num_classes < 2:
            raise ValueError("need num_features >= 1 and num_classes >= 2")
        if self.kind == MLP and self.hidden_width < 1:
            raise ValueError("mlp-1-hidden needs hidden_width >= 1")

    @property
    def dim(self) -> int:
        f, k, h = self.num_features, self.num_classes, self.hidden_width
        if self.kind == SOFTMAX:
            return k * f + k
        return h * f + h + k * h + k


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    label: int


def check_params(spec: ModelSpec, params) -> np.ndarray:
    """Return ``params`` as a float64 vector, validating length and finiteness."""
    w = np.asarray(params, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != spec.dim:
        raise DimensionError("params", spec.dim, int(w.size))
    if not np.all(np.isfinite(w)):
        raise ValueError("params contain NaN or Inf")
    return w


def _check_batch(spec: ModelSpec, features, labels) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if x.shape[1] != spec.num_features:
        raise DimensionError("features", spec.num_features, x.shape[1])
    if y.shape[0] != x.shape[0]:
        raise DimensionError("labels", x.shape[0], y.shape[0])
    if y.size and (y.min() < 0 or y.max() >= spec.num_classes):
        raise ValueError(f"label outside [0, {spec.num_classes})")
    return x, y


def unpack(spec: ModelSpec, params: np.ndarray) -> tuple[np.ndarray, ...]:
    """Views of the weight blocks inside ``params``."""
    f, k, h = spec.num_features, spec.num_classes, spec.hidden_width
    if spec.kind == SOFTMAX:
        return params[: k * f].reshape(k, f), params[k * f:]
    o = 0
    w1 = params[o:o + h * f].reshape(h, f); o += h * f
    b1 = params[o:o + h]; o += h
    w2 = params[o:o + k * h].reshape(k, h); o += k * h
    b2 = params[o:o + k]
    return w1, b1, w2, b2


def _affine(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Elementwise product then a last-axis reduction: each output depends only
    # on its own row, unlike a BLAS matmul whose blocking may vary with shape.
    return (x[:, None, :] * w[None, :, :]).sum(axis=2) + b


def _forward(spec: ModelSpec, params: np.ndarray, x: np.ndarray):
    if spec.kind == SOFTMAX:
        w, b = unpack(spec, params)
        return _affine(x, w, b), None
    w1, b1, w2, b2 = unpack(spec, params)
    hidden = np.tanh(_affine(x, w1, b1))
    return _affine(hidden, w2, b2), hidden


def _log_softmax_parts(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted, log_norm


def losses(spec: ModelSpec, params, features, labels) -> np.ndarray:
    """Per-sample cross-entropy for a batch of rows."""
    w = check_params(spec, params)
    x, y = _check_batch(spec, features, labels)
    logits, _ = _forward(spec, w, x)
    shifted, log_norm = _log_softmax_parts(logits)
    # (max - z_y) >= 0 and log_norm >= 0, so the sum is never negative.
    return -shifted[np.arange(y.size), y] + log_norm[:, 0]


def loss(spec: ModelSpec, params, sample: LabeledSample) -> float:
    return float(losses(spec, params, sample.features, [sample.label])[0])


def per_sample_gradients(spec: ModelSpec, params, features, labels) -> np.ndarray:
    """Analytic gradients, one row per sample, shape ``(n, dim)``."""
    w = check_params(spec, params)
    x, y = _check_batch(spec, features, labels)
    n = x.shape[0]
    logits, hidden = _forward(spec, w, x)
    shifted, log_norm = _log_softmax_parts(logits)
    resid = np.exp(shifted - log_norm)
    resid[np.arange(n), y] -= 1.0
    if spec.kind == SOFTMAX:
        dw = resid[:, :, None] * x[:, None, :]
        return np.concatenate([dw.reshape(n, dw.shape[1] * dw.shape[2]), resid], axis=1)
    _, _, w2, _ = unpack(spec, w)
    dw2 = resid[:, :, None] * hidden[:, None, :]
    dhidden = (resid[:, :, None] * w2[None, :, :]).sum(axis=1)
    dpre = dhidden * (1.0 - hidden * hidden)
    dw1 = dpre[:, :, None] * x[:, None, :]
    return np.concatenate(
        [dw1.reshape(n, dw1.shape[1] * dw1.shape[2]), dpre,
         dw2.reshape(n, dw2.shape[1] * dw2.shape[2]), resid], axis=1
    )


def per_sample_gradient(spec: ModelSpec, params, sample: LabeledSample) -> np.ndarray:
    return per_sample_gradients(spec, params, sample.features, [sample.label])[0]


def exact_column_mean(rows: np.ndarray) -> np.ndarray:
    """Column means from exactly rounded sums; independent of row order."""
    n = rows.shape[0]
    return np.array([math.fsum(col) / n for col in rows.T.tolist()], dtype=np.float64)


def full_batch_gradient(spec: ModelSpec, params, dataset: "Dataset") -> np.ndarray:
    """Mean per-sample gradient over a whole dataset.

    Raises:
        ValueError: if the dataset is empty.
    """
    if len(dataset) == 0:
        raise ValueError("full_batch_gradient needs a nonempty dataset")
    grads = per_sample_gradients(spec, params, dataset.features, dataset.labels)
    return exact_column_mean(grads)


def mean_loss(spec: ModelSpec, params, dataset: "Dataset") -> float:
    if len(dataset) == 0:
        raise ValueError("mean_loss needs a nonempty dataset")
    return math.fsum(losses(spec, params, dataset.features, dataset.labels)) / len(dataset)


def predict(spec: ModelSpec, params, features) -> np.ndarray:
    w = check_params(spec, params)
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != spec.num_features:
        raise DimensionError("features", spec.num_features, x.shape[1])
    logits, _ = _forward(spec, w, x)
    return logits.argmax(axis=1)


def accuracy(spec: ModelSpec, params, dataset: "Dataset") -> float:
    if len(dataset) == 0:
        return float("nan")
    return float(np.mean(predict(spec, params, dataset.features) == dataset.labels))


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x1A17])))
    params = np.zeros(spec.dim, dtype=np.float64)
    blocks = unpack(spec, params)
    if spec.kind == SOFTMAX:
        fan_ins = [(blocks[0], spec.num_features)]
    else:
        fan_ins = [(blocks[0], spec.num_features), (blocks[2], spec.hidden_width)]
    for block, fan_in in fan_ins:
        bound = 1.0 / math.sqrt(fan_in)
        block[...] = rng.uniform(-bound, bound, size=block.shape)
    return params

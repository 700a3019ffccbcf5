"""One client's DPSGD local training: Poisson batches, clipping, noise, step."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import kernels
from .data import Dataset
from .model import ModelSpec, check_params

_STREAM_TAG = 0xD95


class NonPrivateWarning(UserWarning):
    """Emitted when training runs with noise multiplier 0."""


@dataclass(frozen=True)
class DpsgdHyper:
    learning_rate: float = 0.5
    clip_bound: float = 1.0
    noise_multiplier: float = 1.0
    sampling_rate: float = 0.015

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not self.clip_bound > 0:
            raise ValueError("clip_bound must be > 0")
        if not self.noise_multiplier >= 0:
            raise ValueError("noise_multiplier must be >= 0")
        if not 0 < self.sampling_rate <= 1:
            raise ValueError("sampling_rate must be in (0, 1]")
        if self.noise_multiplier == 0:
            warnings.warn("noise_multiplier=0: non-private diagnostic run",
                          NonPrivateWarning, stacklevel=3)

    @property
    def diagnostic(self) -> bool:
        return self.noise_multiplier == 0


@dataclass(frozen=True)
class RngStream:
    """Names one disjoint random stream: (seed, client, iteration).

    Streams are keyed through ``SeedSequence`` into a counter-based Philox
    generator, so draws depend only on the key, never on call order.
    """

    seed: int
    client: int = 0
    iteration: int = 0

    def generator(self) -> np.random.Generator:
        key = np.random.SeedSequence([_STREAM_TAG, self.seed, self.client, self.iteration])
        return np.random.Generator(np.random.Philox(key))

    def advance(self, steps: int) -> "RngStream":
        return replace(self, iteration=self.iteration + steps)


def _as_generator(rng) -> np.random.Generator:
    return rng.generator() if isinstance(rng, RngStream) else rng


def poisson_sample(dataset_size: int, q: float, rng) -> np.ndarray:
    """Indices kept independently with probability ``q`` (possibly none)."""
    if not 0 < q <= 1:
        raise ValueError(f"sampling rate must be in (0, 1], got {q}")
    if q == 1:
        return np.arange(dataset_size)
    return np.flatnonzero(_as_generator(rng).random(dataset_size) < q)


def clip(grad, clip_bound: float) -> np.ndarray:
    """Scale ``grad`` to L2 norm at most ``clip_bound``; inside the ball it is returned as is."""
    if not clip_bound > 0:
        raise ValueError("clip_bound must be > 0")
    g = np.asarray(grad, dtype=np.float64)
    norm = float(np.linalg.norm(g))
    if norm <= clip_bound:
        return g.copy()
    out = g * (clip_bound / norm)
    # Rounding can leave the product one ulp outside the ball.
    while float(np.linalg.norm(out)) > clip_bound:
        out = out * (1.0 - 2.0**-52)
    return out


def noisy_batch_sum(clipped_grads: Sequence[np.ndarray], sigma: float, clip_bound: float,
                    rng, dim: int | None = None) -> np.ndarray:
    """Sum of the clipped gradients plus one N(0, (sigma*C)^2 I) vector.

    ``dim`` is required when ``clipped_grads`` is empty.
    """
    grads = [np.asarray(g, dtype=np.float64) for g in clipped_grads]
    if grads:
        d = grads[0].shape[0]
        if any(g.shape != (d,) for g in grads) or (dim is not None and dim != d):
            raise ValueError("clipped gradients have mismatched lengths")
        total = np.zeros(d)
        for g in grads:
            total += g
    else:
        if dim is None:
            raise ValueError("dim is required for an empty gradient list")
        total = np.zeros(dim)
    return _add_noise(total, sigma, clip_bound, rng)


def _add_noise(total: np.ndarray, sigma: float, clip_bound: float, rng) -> np.ndarray:
    if sigma > 0:
        total = total + _as_generator(rng).normal(0.0, sigma * clip_bound, size=total.shape[0])
    return total


def local_step(params, noisy_sum, batch_size: int, learning_rate: float) -> np.ndarray:
    """w - eta * noisy_sum / |B|; an empty batch leaves ``params`` unchanged."""
    w = np.asarray(params, dtype=np.float64)
    if batch_size == 0:
        return w.copy()
    return w - learning_rate * np.asarray(noisy_sum, dtype=np.float64) / batch_size


def dpsgd_iteration(spec: ModelSpec, params: np.ndarray, dataset: Dataset,
                    hyper: DpsgdHyper, stream: RngStream) -> tuple[np.ndarray, int]:
    """One sample-clip-noise-step iteration; returns new params and |B|."""
    gen = stream.generator()
    batch = poisson_sample(len(dataset), hyper.sampling_rate, gen)
    if batch.size == 0:
        # The release still happened; it only moves nothing.
        return params.copy(), 0
    summed = kernels.clipped_grad_sum(spec, params, dataset.features[batch],
                                      dataset.labels[batch], hyper.clip_bound)
    noisy = _add_noise(summed, hyper.noise_multiplier, hyper.clip_bound, gen)
    return local_step(params, noisy, batch.size, hyper.learning_rate), int(batch.size)


def local_train(spec: ModelSpec, params, dataset: Dataset, tau: int, hyper: DpsgdHyper,
                stream: RngStream) -> tuple[np.ndarray, int]:
    """Run exactly ``tau`` DPSGD iterations; iteration j uses ``stream.advance(j)``."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    w = check_params(spec, params).copy()
    for j in range(tau):
        w, _ = dpsgd_iteration(spec, w, dataset, hyper, stream.advance(j))
    return w, tau

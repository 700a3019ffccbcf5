"""Data sources and client partitioning (IID or Dirichlet)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

IID = "iid"
DIRICHLET = "dirichlet"
MAX_REDRAWS = 100


class DataFormatError(ValueError):
    """Malformed dataset file; ``line`` is 1-based, or None for whole-file problems."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features must be (n, width) with one label per row")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass
class ClientDataset(Dataset):
    client_id: int = 0
    source_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


@dataclass(frozen=True)
class PartitionSpec:
    scheme: str = DIRICHLET
    beta: float = 0.05
    num_clients: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in (IID, DIRICHLET):
            raise ValueError(f"unknown partition scheme {self.scheme!r}")
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if self.scheme == DIRICHLET and not self.beta > 0:
            raise ValueError("Dirichlet beta must be > 0")


def _simplex_means(num_classes: int, num_features: int, separation: float) -> np.ndarray:
    # Regular simplex with edge length `separation`, centred at the origin and
    # written in an orthonormal basis of its (num_classes - 1)-dim span.
    centred = np.eye(num_classes) - 1.0 / num_classes
    _, _, vt = np.linalg.svd(centred)
    coords = centred @ vt[: num_classes - 1].T * (separation / math.sqrt(2.0))
    means = np.zeros((num_classes, num_features))
    width = min(num_features, num_classes - 1)
    means[:, :width] = coords[:, :width]
    return means


def generate_synthetic(num_classes: int, num_features: int, samples_per_class: int,
                       class_separation: float, seed: int) -> Dataset:
    """Unit-covariance Gaussian blobs, one per class, on a scaled simplex.

    When ``num_features < num_classes - 1`` the simplex is truncated to the
    available coordinates, so class means are no longer equidistant.
    """
    if min(num_classes, num_features, samples_per_class) < 1 or not class_separation > 0:
        raise ValueError("counts must be >= 1 and separation > 0")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xDA7A])))
    means = _simplex_means(max(num_classes, 2), num_features, class_separation)[:num_classes]
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    features = means[labels] + rng.standard_normal((labels.size, num_features))
    order = rng.permutation(labels.size)
    return Dataset(features[order], labels[order], max(num_classes, 2))


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0 <= test_fraction < 1:
        raise ValueError("test_fraction must be in [0, 1)")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x7E57])))
    order = rng.permutation(len(dataset))
    n_test = int(round(test_fraction * len(dataset)))
    return dataset.subset(np.sort(order[n_test:])), dataset.subset(np.sort(order[:n_test]))


def _dirichlet_assignment(labels: np.ndarray, num_classes: int, num_clients: int,
                          beta: float, rng: np.random.Generator) -> list[list[np.ndarray]]:
    shards: list[list[np.ndarray]] = [[] for _ in range(num_clients)]
    for c in range(num_classes):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            continue
        idx = rng.permutation(idx)
        props = rng.dirichlet(np.full(num_clients, beta))
        cuts = (np.cumsum(props)[:-1] * idx.size).astype(np.int64)
        for i, part in enumerate(np.split(idx, cuts)):
            shards[i].append(part)
    return shards


def partition(dataset: Dataset, spec: PartitionSpec) -> list[ClientDataset]:
    """Split ``dataset`` across ``spec.num_clients`` clients, none of them empty.

    IID splits a random permutation into near-equal parts. Dirichlet draws a
    Dir(beta) vector over clients for every class and cuts that class's
    samples by it; a draw that leaves a client empty is redrawn up to 100
    times, after which each empty client takes one sample from the largest.
    """
    n, num_clients = len(dataset), spec.num_clients
    if n < num_clients:
        raise ValueError(f"dataset of {n} samples cannot feed {num_clients} clients")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, 0x9A27])))
    if spec.scheme == IID:
        groups = np.array_split(rng.permutation(n), num_clients)
    else:
        for _ in range(MAX_REDRAWS):
            shards = _dirichlet_assignment(dataset.labels, dataset.num_classes,
                                           num_clients, spec.beta, rng)
            groups = [np.concatenate(s) if s else np.zeros(0, np.int64) for s in shards]
            if min(g.size for g in groups) > 0:
                break
        else:
            for i in range(num_clients):
                if groups[i].size == 0:
                    big = max(range(num_clients), key=lambda j: groups[j].size)
                    groups[i] = groups[big][-1:]
                    groups[big] = groups[big][:-1]
    clients = []
    for i, g in enumerate(groups):
        g = np.sort(g)
        clients.append(ClientDataset(dataset.features[g], dataset.labels[g],
                                     dataset.num_classes, client_id=i, source_indices=g))
    return clients


def load_csv(path, num_classes: int | None = None) -> Dataset:
    """Read rows of ``label,f1,f2,...``; a first line starting with '#' is a header.

    Raises:
        DataFormatError: malformed content such as ragged rows or bad labels.
    """
    labels, rows = [], []
    width = None
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno == 1 and row and row[0].lstrip().startswith("#"):
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DataFormatError("need a label and at least one feature", lineno)
            if width is None:
                width = len(row) - 1
            elif len(row) - 1 != width:
                raise DataFormatError(f"expected {width} features, found {len(row) - 1}", lineno)
            try:
                label_value = float(row[0])
                feats = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise DataFormatError(f"non-numeric field ({exc})", lineno) from None
            if not label_value.is_integer() or label_value < 0:
                raise DataFormatError(f"label {row[0]!r} is not a nonnegative integer", lineno)
            if num_classes is not None and label_value >= num_classes:
                raise DataFormatError(f"label {int(label_value)} >= num_classes {num_classes}", lineno)
            if not all(math.isfinite(v) for v in feats):
                raise DataFormatError("non-finite feature", lineno)
            labels.append(int(label_value))
            rows.append(feats)
    if not rows:
        raise DataFormatError("no data rows")
    k = num_classes if num_classes is not None else max(max(labels) + 1, 2)
    return Dataset(np.array(rows), np.array(labels), k)


def client_weights(clients: Sequence[Dataset]) -> list[float]:
    """p_i = |D_i| / |D| for every client."""
    if not clients:
        raise ValueError("no clients")
    total = sum(len(c) for c in clients)
    return [float(Fraction(len(c), total)) for c in clients]

"""Round orchestration: broadcast, local DPSGD, weighted aggregation, tau update."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .accountant import DEFAULT_ALPHAS, rdp_curve, rdp_to_dp, compose
from .data import ClientDataset, Dataset, client_weights
from .dpsgd import DpsgdHyper, RngStream, local_train
from .model import ModelSpec, accuracy, check_params, full_batch_gradient, mean_loss
from .scheduler import MuReport, mu_report

WEIGHT_TOLERANCE = 1e-12


class RoundError(RuntimeError):
    """A client failed during a round; nothing from that round was aggregated."""


@dataclass
class ClientHandle:
    client_id: int
    dataset: ClientDataset
    weight: float
    seed: int


@dataclass(frozen=True)
class RoundMetrics:
    k: int
    t: int
    tau_executed: int
    tau_star_real: float
    mu_est: float
    epsilon_spent: float
    train_loss: float
    test_accuracy: float

    FIELDS = ("k", "t", "tau_executed", "tau_star_real", "mu_est",
              "epsilon_spent", "train_loss", "test_accuracy")

    def as_row(self) -> list[str]:
        return [format_value(getattr(self, name)) for name in self.FIELDS]


def format_value(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


@dataclass
class FederationState:
    global_model: np.ndarray
    r_s: int
    r_c: int
    k: int = 0
    t: int = 0
    current_tau: int = 1
    epsilon_spent: float = 0.0
    history: list[RoundMetrics] = field(default_factory=list)
    models: list[np.ndarray] = field(default_factory=list)

    @property
    def active(self) -> bool:
        return self.k < self.r_s and self.t < self.r_c


class PrivacyLedger:
    """Recomputes epsilon from scratch for a total iteration count."""

    def __init__(self, q: float, sigma: float, delta: float, alphas=DEFAULT_ALPHAS):
        self.q, self.sigma, self.delta = q, sigma, delta
        self._curve = rdp_curve(q, sigma, alphas) if sigma > 0 else None

    def epsilon(self, iterations: int) -> float:
        if self._curve is None:
            return 0.0 if iterations == 0 else math.inf
        return rdp_to_dp(compose(self._curve, iterations), self.delta)[0]


def make_clients(datasets: Sequence[ClientDataset], seed: int) -> list[ClientHandle]:
    weights = client_weights(datasets)
    return [ClientHandle(d.client_id, d, w, seed) for d, w in zip(datasets, weights)]


def aggregate(models: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Weighted average sum_i p_i w_i, accumulated in client order."""
    if not models or len(models) != len(weights):
        raise ValueError("need one weight per model and at least one model")
    total = math.fsum(weights)
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        raise ValueError(f"weights sum to {total!r}, not 1")
    d = np.asarray(models[0]).shape
    if any(np.asarray(m).shape != d for m in models):
        raise ValueError("models have mismatched lengths")
    if all(np.array_equal(models[0], m) for m in models[1:]):
        return np.array(models[0], dtype=np.float64)
    out = np.zeros(d, dtype=np.float64)
    for m, w in zip(models, weights):
        out += (w / total) * np.asarray(m, dtype=np.float64)
    return out


def collect_mu_reports(spec: ModelSpec, clients: Sequence[ClientHandle],
                       w_global_prev: np.ndarray, w_locals: Sequence[np.ndarray]) -> list[MuReport]:
    """Per-client ||grad F_i(w_i) - grad F_i(w)|| / ||w_i - w||."""
    reports = []
    for client, w_local in zip(clients, w_locals):
        displacement = float(np.linalg.norm(w_local - w_global_prev))
        if displacement < 1e-9 or len(client.dataset) == 0:
            reports.append(MuReport(client.client_id, 0.0, False))
            continue
        g_local = full_batch_gradient(spec, w_local, client.dataset)
        g_global = full_batch_gradient(spec, w_global_prev, client.dataset)
        reports.append(mu_report(client.client_id,
                                 float(np.linalg.norm(g_local - g_global)), displacement))
    return reports


def global_loss(spec: ModelSpec, params, clients: Sequence[ClientHandle]) -> float:
    """F(w) = sum_i p_i F_i(w)."""
    return math.fsum(c.weight * mean_loss(spec, params, c.dataset) for c in clients)


@dataclass
class Federation:
    spec: ModelSpec
    clients: list[ClientHandle]
    hyper: DpsgdHyper
    scheduler: object
    ledger: PrivacyLedger
    test_set: Dataset | None = None
    workers: int = 1
    keep_models: bool = False

    def _train_one(self, client: ClientHandle, w: np.ndarray, tau: int, t0: int) -> np.ndarray:
        stream = RngStream(client.seed, client.client_id, t0)
        try:
            w_new, _ = local_train(self.spec, w, client.dataset, tau, self.hyper, stream)
        except ValueError as exc:
            raise RoundError(f"client {client.client_id}: {exc}") from exc
        return w_new

    def run_round(self, state: FederationState) -> RoundMetrics:
        """Advance ``state`` by one communication round and return its metrics row."""
        if not state.active:
            raise RuntimeError("no resources left for another round")
        tau = min(state.current_tau, state.r_c - state.t)
        w_prev = state.global_model
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                locals_ = list(pool.map(lambda c: self._train_one(c, w_prev, tau, state.t),
                                        self.clients))
        else:
            locals_ = [self._train_one(c, w_prev, tau, state.t) for c in self.clients]

        weights = [c.weight for c in self.clients]
        reports = (collect_mu_reports(self.spec, self.clients, w_prev, locals_)
                   if self.scheduler.needs_mu else [])
        state.global_model = aggregate(locals_, weights)
        state.k += 1
        state.t += tau
        state.epsilon_spent = self.ledger.epsilon(state.t)
        nxt, tau_real, mu = self.scheduler.update(
            reports=reports, weights=weights, tau_prev=tau,
            rounds_done=state.k, iterations_done=state.t,
        )
        state.current_tau = nxt
        row = RoundMetrics(
            k=state.k, t=state.t, tau_executed=tau, tau_star_real=tau_real, mu_est=mu,
            epsilon_spent=state.epsilon_spent,
            train_loss=global_loss(self.spec, state.global_model, self.clients),
            test_accuracy=(accuracy(self.spec, state.global_model, self.test_set)
                           if self.test_set is not None else math.nan),
        )
        state.history.append(row)
        if self.keep_models:
            state.models.append(state.global_model.copy())
        return row

    def run(self, initial_model: np.ndarray, r_s: int, r_c: int) -> FederationState:
        """Iterate rounds while k < R_s and t < R_c."""
        state = FederationState(check_params(self.spec, initial_model).copy(), r_s, r_c,
                                current_tau=self.scheduler.initial_tau())
        while state.active:
            self.run_round(state)
        return state

"""Adaptive local-iteration scheduling from the DPFL convergence bound.

The bound is a quadratic in tau,

    h(tau) = (a tau^2 + b tau + c) / T,   G(tau) = a tau + b + c / tau,

with S = C^2 + sigma^2 C^2 d / B^2 and

    a = L (2 + eta mu) S / 2
    b = (L Delta1 - 2 L (2 + eta mu) S) / 2
    c = L ((2 + eta mu) S + 4/mu^2 + 3 C^2 + 2 Gamma / eta + sigma^2 C^2 d / B^2) / 2

so T h(tau) = tau G(tau). The per-round target is the closed form

    tau* = sqrt(1 + (4/mu^2 + 3C^2 + 2 Gamma T mu + sigma^2 C^2 d / B^2)
                    / ((2 + 1/T) S)).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

log = logging.getLogger(__name__)

MU_MIN = 1e-4
MU_MAX = 1e4
MIN_DISPLACEMENT = 1e-9
DEFAULT_TAU_CAP = 64

# Heterogeneity presets keyed by partition setting.
GAMMA_PRESETS = {"iid": 0.0, "dir0.05": 10.0, "dir0.5": 5.0, "dir1": 1.0}


@dataclass(frozen=True)
class SchedulerContext:
    mu: float
    gamma: float
    clip_bound: float
    sigma: float
    model_dim: int
    b_hat: float
    r_s: int
    r_c: int
    tau_prev: int = 1
    t_horizon: int | None = None
    tau_cap: int = DEFAULT_TAU_CAP

    def __post_init__(self):
        if self.t_horizon is None:
            object.__setattr__(self, "t_horizon", effective_T(self.r_s, self.r_c, self.tau_prev))
        for name in ("mu", "clip_bound", "b_hat"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("gamma", "sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("model_dim", "tau_prev"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def refreshed(self, **changes) -> "SchedulerContext":
        """Copy with ``changes`` applied and T recomputed."""
        return replace(self, t_horizon=None, **changes)

    @property
    def noise_term(self) -> float:
        """sigma^2 C^2 d / B_hat^2."""
        return self.sigma**2 * self.clip_bound**2 * self.model_dim / self.b_hat**2


@dataclass(frozen=True)
class DiagnosticBoundParams:
    lipschitz: float
    delta1: float
    eta: float

    def __post_init__(self):
        if not (self.lipschitz > 0 and self.eta > 0 and self.delta1 >= 0):
            raise ValueError("need lipschitz > 0, eta > 0, delta1 >= 0")


@dataclass(frozen=True)
class MuReport:
    client_id: int
    ratio: float
    valid: bool


def mu_report(client_id: int, grad_diff_norm: float, displacement_norm: float) -> MuReport:
    if displacement_norm < MIN_DISPLACEMENT or not math.isfinite(grad_diff_norm):
        return MuReport(client_id, 0.0, False)
    return MuReport(client_id, grad_diff_norm / displacement_norm, True)


def estimate_mu(reports: Sequence[MuReport], weights: Sequence[float],
                previous: float | None = None) -> float | None:
    """Weighted mean of valid ratios, renormalised over valid clients, clamped.

    Falls back to ``previous`` (with a warning) when no report is valid.
    """
    if len(reports) != len(weights):
        raise ValueError("one weight per report is required")
    pairs = [(w, r.ratio) for r, w in zip(reports, weights) if r.valid]
    total_w = math.fsum(w for w, _ in pairs)
    if not pairs or total_w <= 0:
        log.warning("no valid strong-convexity reports; keeping previous mu=%s", previous)
        return previous
    mu = math.fsum(w * r for w, r in pairs) / total_w
    return min(max(mu, MU_MIN), MU_MAX)


def effective_T(r_s: int, r_c: int, tau_prev: int) -> int:
    return min(r_s * tau_prev, r_c)


def effective_Bhat(q: float, client_sizes: Sequence[int]) -> float:
    if not client_sizes:
        raise ValueError("no clients")
    if not 0 < q <= 1:
        raise ValueError("q must be in (0, 1]")
    return q * min(client_sizes)


def tau_star_real(ctx: SchedulerContext) -> float:
    t = ctx.t_horizon
    assert ctx.mu > 0, "mu must be positive after clamping"
    if t < 1:
        raise ValueError("horizon T must be >= 1")
    noise = ctx.noise_term
    c2 = ctx.clip_bound**2
    num = 4.0 / ctx.mu**2 + 3.0 * c2 + 2.0 * ctx.gamma * t * ctx.mu + noise
    den = (2.0 + 1.0 / t) * (c2 + noise)
    return math.sqrt(1.0 + num / den)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def clamp_tau(tau_real: float, remaining: int, tau_cap: int = DEFAULT_TAU_CAP) -> int:
    return max(1, min(round_half_up(tau_real), tau_cap, remaining))


def next_tau(ctx: SchedulerContext, rounds_done: int, iterations_done: int) -> int:
    """Integer local-iteration count for the next round."""
    if ctx.r_s >= ctx.r_c:
        return 1
    remaining = max(1, ctx.r_c - iterations_done)
    return clamp_tau(tau_star_real(ctx), remaining, ctx.tau_cap)


def _bound_coefficients(ctx: SchedulerContext, diag: DiagnosticBoundParams):
    L, eta, mu = diag.lipschitz, diag.eta, ctx.mu
    noise = ctx.noise_term
    c2 = ctx.clip_bound**2
    s = c2 + noise
    lead = (2.0 + eta * mu) * s
    a = L * lead / 2.0
    b = (L * diag.delta1 - 2.0 * L * lead) / 2.0
    c = L * (lead + 4.0 / mu**2 + 3.0 * c2 + 2.0 * ctx.gamma / eta + noise) / 2.0
    return a, b, c


def bound_h(tau: float, ctx: SchedulerContext, diag: DiagnosticBoundParams) -> float:
    """Convergence upper bound after T iterations with ``tau`` local steps per round."""
    a, b, c = _bound_coefficients(ctx, diag)
    t = ctx.t_horizon
    return a / t * tau**2 + b / t * tau + c / t


def bound_G(tau: float, ctx: SchedulerContext, diag: DiagnosticBoundParams) -> float:
    a, b, c = _bound_coefficients(ctx, diag)
    return a * tau + b + c / tau


def bound_G_coefficients(ctx: SchedulerContext, diag: DiagnosticBoundParams) -> tuple[float, float, float]:
    """(a, b, c) with G(tau) = a tau + b + c / tau."""
    return _bound_coefficients(ctx, diag)


class FixedScheduler:
    """Constant tau every round."""

    needs_mu = False

    def __init__(self, tau: int):
        if tau < 1:
            raise ValueError("fixed tau must be >= 1")
        self.tau = int(tau)

    def initial_tau(self) -> int:
        return self.tau

    def update(self, **_) -> tuple[int, float, float]:
        return self.tau, float(self.tau), math.nan


class AdaptiveScheduler:
    """Recomputes tau after every aggregation from the closed-form optimum.

    Round one runs with tau = 1. When R_s >= R_c the answer is always 1 and no
    strong-convexity estimate is needed.
    """

    def __init__(self, *, gamma: float, clip_bound: float, sigma: float, model_dim: int,
                 b_hat: float, r_s: int, r_c: int, tau_cap: int = DEFAULT_TAU_CAP):
        self.base = dict(gamma=gamma, clip_bound=clip_bound, sigma=sigma,
                         model_dim=model_dim, b_hat=b_hat, r_s=r_s, r_c=r_c, tau_cap=tau_cap)
        self.mu: float | None = None
        self.context: SchedulerContext | None = None

    @property
    def needs_mu(self) -> bool:
        return self.base["r_s"] < self.base["r_c"]

    def initial_tau(self) -> int:
        return 1

    def update(self, *, reports=(), weights=(), tau_prev: int = 1, rounds_done: int = 0,
               iterations_done: int = 0) -> tuple[int, float, float]:
        """Returns (next integer tau, real-valued tau*, mu estimate or NaN)."""
        if not self.needs_mu:
            return 1, 1.0, math.nan
        self.mu = estimate_mu(reports, weights, self.mu)
        if self.mu is None:
            return 1, 1.0, math.nan
        self.context = SchedulerContext(mu=self.mu, tau_prev=tau_prev, **self.base)
        real = tau_star_real(self.context)
        return next_tau(self.context, rounds_done, iterations_done), real, self.mu

"""Renyi-DP accounting for the sampled Gaussian mechanism.

Per-iteration RDP at integer order alpha is ``log(A_alpha) / (alpha - 1)`` with

    A_alpha = sum_k C(alpha, k) (1-q)^(alpha-k) q^k exp((k^2 - k) / (2 sigma^2)),

evaluated in log space. Identical iterations compose linearly, and an RDP
curve converts to (epsilon, delta)-DP through ``eps(alpha) + log(1/delta)/(alpha-1)``
minimised over the order grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

DEFAULT_ALPHAS: tuple[int, ...] = tuple(range(2, 65))
SEARCH_UPPER = 10**10


class InfeasibleBudgetError(ValueError):
    """The target epsilon is below what zero iterations already cost."""


@dataclass(frozen=True)
class PrivacySpec:
    epsilon: float
    delta: float = 1e-5
    q: float = 0.015
    sigma: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not 0 < self.delta < 1:
            raise ValueError("delta must be in (0, 1)")
        if not 0 < self.q <= 1:
            raise ValueError("q must be in (0, 1]")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0 for accounting")


@dataclass(frozen=True)
class RdpCurve:
    alphas: tuple[int, ...]
    eps: tuple[float, ...]

    def __post_init__(self):
        if len(self.alphas) != len(self.eps):
            raise ValueError("alphas and eps must align")
        if any(a < 2 for a in self.alphas) or any(
            b <= a for a, b in zip(self.alphas, self.alphas[1:])
        ):
            raise ValueError("alpha grid must be strictly increasing integers >= 2")
        if any(not (e >= 0 and math.isfinite(e)) for e in self.eps):
            raise ValueError("RDP values must be finite and nonnegative")


def _log_add(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = max(a, b), min(a, b)
    return hi + math.log1p(math.exp(lo - hi))


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def log_a_alpha(q: float, sigma: float, alpha: int) -> float:
    """log A_alpha(q, sigma) for integer alpha."""
    if q == 0:
        return 0.0
    if q == 1:
        return (alpha * alpha - alpha) / (2 * sigma * sigma)
    log_q, log_1mq = math.log(q), math.log1p(-q)
    terms = [
        _log_comb(alpha, k) + k * log_q + (alpha - k) * log_1mq
        + (k * k - k) / (2 * sigma * sigma)
        for k in range(alpha + 1)
    ]
    # Two-pass log-sum-exp: shift by the largest term, then sum exactly.
    top = max(terms)
    return top + math.log(math.fsum(math.exp(t - top) for t in terms))


def rdp_sgm_order(q: float, sigma: float, alpha: int) -> float:
    """Per-iteration RDP of the sampled Gaussian mechanism at order ``alpha``."""
    if isinstance(alpha, bool) or int(alpha) != alpha or alpha < 2:
        raise ValueError(f"alpha must be an integer >= 2, got {alpha!r}")
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    if not 0 <= q <= 1:
        raise ValueError("q must be in [0, 1]")
    alpha = int(alpha)
    return max(0.0, log_a_alpha(q, sigma, alpha) / (alpha - 1))


def rdp_curve(q: float, sigma: float, alphas: Sequence[int] = DEFAULT_ALPHAS) -> RdpCurve:
    alphas = tuple(int(a) for a in alphas)
    return RdpCurve(alphas, tuple(rdp_sgm_order(q, sigma, a) for a in alphas))


def compose(curve: RdpCurve, iterations: int) -> RdpCurve:
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    return RdpCurve(curve.alphas, tuple(iterations * e for e in curve.eps))


def rdp_to_dp(curve: RdpCurve, delta: float) -> tuple[float, int]:
    """Best (epsilon, alpha) over the grid; ties go to the smallest alpha."""
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1)")
    if not curve.alphas:
        raise ValueError("empty alpha grid")
    log_inv_delta = math.log(1 / delta)
    best_eps, best_alpha = math.inf, curve.alphas[0]
    for a, e in zip(curve.alphas, curve.eps):
        eps = e + log_inv_delta / (a - 1)
        if eps < best_eps:
            best_eps, best_alpha = eps, a
    return best_eps, best_alpha


def epsilon_and_order(q: float, sigma: float, iterations: int, delta: float,
                      alphas: Sequence[int] = DEFAULT_ALPHAS) -> tuple[float, int]:
    return rdp_to_dp(compose(rdp_curve(q, sigma, alphas), iterations), delta)


def total_epsilon(q: float, sigma: float, iterations: int, delta: float,
                  alphas: Sequence[int] = DEFAULT_ALPHAS) -> float:
    """(epsilon, delta)-DP cost of ``iterations`` sampled-Gaussian steps."""
    return epsilon_and_order(q, sigma, iterations, delta, alphas)[0]


def calibrate_iterations(spec: PrivacySpec, alphas: Sequence[int] = DEFAULT_ALPHAS,
                         upper: int = SEARCH_UPPER) -> int:
    """Largest T in [0, upper] with total_epsilon(T) <= spec.epsilon.

    Raises:
        InfeasibleBudgetError: if even T = 0 exceeds the target.
    """
    base = rdp_curve(spec.q, spec.sigma, alphas)

    def cost(t: int) -> float:
        return rdp_to_dp(compose(base, t), spec.delta)[0]

    floor = cost(0)
    if floor > spec.epsilon:
        raise InfeasibleBudgetError(
            f"infeasible budget: epsilon={spec.epsilon} is below the conversion floor {floor:.6g}"
        )
    if cost(upper) <= spec.epsilon:
        return upper
    lo, hi = 0, upper
    eps_lo, eps_hi = floor, cost(upper)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        eps_mid = cost(mid)
        assert eps_lo <= eps_mid <= eps_hi, "privacy cost is not monotone in T"
        if eps_mid <= spec.epsilon:
            lo, eps_lo = mid, eps_mid
        else:
            hi, eps_hi = mid, eps_mid
    return lo

"""Step sizes, rate factors and speedup conditions in closed form.

Step sizes are expressed through a dimensionless ``a``: ``gamma = a / L``
for SAGA-type and SGD-type methods, ``gamma = a / (4 L)`` for SVRG-type
methods. Big-O conditions are evaluated with unit constants and are meant
as advice, never as hard gates on a run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple


class RegimeError(ValueError):
    """Inputs outside the range where a formula holds."""


class DivergentConfigError(ValueError):
    """Step/epoch combination for which no contraction is guaranteed."""


@dataclass(frozen=True)
class ProblemConstants:
    n: int
    L: float
    mu: float
    delta: float
    tau: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 1.0 / self.n - 1e-15 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [1/n, 1]")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if not 0 < self.mu <= self.L:
            raise ValueError("need 0 < mu <= L")

    @property
    def kappa(self) -> float:
        return self.L / self.mu


def _check_tau_delta(tau: float, delta: float) -> None:
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")


def saga_rate(n: int, kappa: float, a: float) -> float:
    """Rate factor ``(1/5) min(1/n, a/kappa)`` of (A)SAGA at ``gamma = a/L``."""
    if not 0 < a <= 1:
        raise ValueError("a must lie in (0, 1]")
    return min(1.0 / n, a / kappa) / 5.0


def asaga_max_a(tau: float, delta: float, kappa: float, n: int | None = None) -> float:
    """Largest admissible ``a`` for ASAGA under overlap ``tau``.

    The bound only holds for ``tau < n/10``; beyond that the admissible step
    size picks up an ``exp(tau/n)`` factor, so passing ``n`` turns this into a
    hard check.
    """
    _check_tau_delta(tau, delta)
    if n is not None and tau >= n / 10:
        raise RegimeError(f"tau={tau} is not below n/10={n / 10}")
    sd = math.sqrt(delta)
    xi = math.sqrt(1.0 + min(1.0 / sd, tau) / (8.0 * kappa))
    return 1.0 / (32.0 * (1.0 + tau * sd) * xi)


class SpeedupVerdict(NamedTuple):
    ok: bool
    regime: str
    threshold: float  # largest tau passing both conditions


def asaga_speedup_ok(n: int, kappa: float, delta: float, tau: float) -> SpeedupVerdict:
    """Linear speedup condition ``tau <= n`` and ``tau <= max(1, n/kappa)/sqrt(delta)``."""
    _check_tau_delta(tau, delta)
    regime = "well-conditioned" if n > kappa else "ill-conditioned"
    threshold = min(float(n), max(1.0, n / kappa) / math.sqrt(delta))
    return SpeedupVerdict(tau <= threshold, regime, threshold)


def svrg_theta(gamma: float, m: int, L: float, mu: float, delta: float, tau: float) -> float:
    """Per-epoch contraction of (asynchronous) SVRG; ``tau = 0`` is the serial rate."""
    _check_tau_delta(tau, delta)
    if gamma <= 0 or m < 1:
        raise ValueError("need gamma > 0 and m >= 1")
    c = 2.0 * L * (1.0 + 2.0 * math.sqrt(delta) * tau) * (gamma + tau * mu * gamma * gamma)
    den = 1.0 - c
    if den <= 0:
        raise DivergentConfigError(f"denominator {den:.3g} is not positive")
    return (1.0 / (mu * gamma * m) + c) / den


def svrg_rate(n: int, kappa: float, a: float) -> float:
    """Rate factor per gradient computation ``(1/4) min(1/n, a/(64 kappa))``."""
    if not 0 < a:
        raise ValueError("a must be positive")
    return min(1.0 / n, a / (64.0 * kappa)) / 4.0


@dataclass(frozen=True)
class SvrgParams:
    a: float
    m: float
    rho: float | None

    def gamma(self, L: float) -> float:
        return self.a / (4.0 * L)


def kromagnon_max_a(tau: float, delta: float, kappa: float, n: int | None = None) -> SvrgParams:
    """Admissible ``a`` (``gamma = a/(4L)``) and epoch size ``m = 32 kappa / a``."""
    _check_tau_delta(tau, delta)
    a = 1.0 / (4.0 * (1.0 + 2.0 * math.sqrt(delta) * tau) * (1.0 + tau / (16.0 * kappa)))
    rho = svrg_rate(n, kappa, a) if n is not None else None
    return SvrgParams(a, 32.0 * kappa / a, rho)


def sgd_rate(kappa: float, a: float) -> float:
    """Rate factor ``a/kappa`` of SGD and Hogwild at ``gamma = a/L``."""
    return a / kappa


def sgd_ball_radius(gamma: float, mu: float, sigma2: float) -> float:
    """Radius ``2 gamma sigma^2 / mu`` of the ball serial SGD converges to."""
    return 2.0 * gamma * sigma2 / mu


def hogwild_max_a(tau: float, delta: float, kappa: float) -> float:
    """``min(a*(tau), kappa/tau)``; serial SGD allows ``a <= 1/2``."""
    _check_tau_delta(tau, delta)
    sd = math.sqrt(delta)
    xi = math.sqrt(1.0 + min(1.0 / sd, tau) / (2.0 * kappa))
    a_star = 1.0 / (5.0 * (1.0 + 2.0 * tau * sd) * xi)
    return min(a_star, kappa / tau) if tau > 0 else a_star


def hogwild_ball_radius(gamma: float, mu: float, sigma2: float, delta: float, tau: float) -> float:
    """Squared-distance radius of the ball Hogwild converges to."""
    _check_tau_delta(tau, delta)
    sd = math.sqrt(delta)
    c1 = 1.0 + sd * tau
    c2 = sd + gamma * mu * c1
    return (8.0 * gamma * (c1 + tau * c2) / mu + 4.0 * gamma * gamma * c1 * tau) * sigma2


def tau_upper_bound(p: int, R: float) -> float:
    """Overlap bound ``(p - 1) R`` from the max/min iteration duration ratio."""
    return (p - 1) * R

"""Normalisation constant of the quantile Huber density and the normalised loss.

The density ``p(r | tau) = exp(-rho_tau(r)) / c(tau)`` turns the loss into a
negative log-likelihood. Adding ``log c(tau)`` makes the per-sample loss
strongly convex in tau for ``kappa`` in [0, 1], which is what allows tau to
be inferred from data at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError
from .losses import LossParams, quantile_huber, total_loss

__all__ = [
    "TAU_LO",
    "TAU_HI",
    "NormalizationEval",
    "NormalizedTauCalculus",
    "std_normal_cdf",
    "normalization",
    "normalized_loss",
    "convexity_certificate",
    "default_certificate_grid",
    "c_quadrature_oracle",
]

TAU_LO = 0.001
TAU_HI = 0.999

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class NormalizationEval:
    c: float
    c_prime: float
    c_double_prime: float
    log_c: float
    dlog_c: float
    d2log_c: float


@dataclass(frozen=True)
class NormalizedTauCalculus:
    value: float
    d_tau: float
    d2_tau: float


def std_normal_cdf(x: float) -> float:
    """Standard normal CDF through the complementary error function."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError("std_normal_cdf requires a finite argument")
    return 0.5 * math.erfc(-x / _SQRT2)


def _normal_mass(a: float, b: float) -> float:
    # P(a < Z < b) for a <= 0 <= b; erf avoids cancelling two values near 0.5
    return 0.5 * (math.erf(b / _SQRT2) - math.erf(a / _SQRT2))


def _check_open_tau(tau):
    if not (math.isfinite(tau) and 0.0 < tau < 1.0):
        raise DomainError(f"tau must lie strictly inside (0, 1), got {tau!r}")


def normalization(p: LossParams) -> NormalizationEval:
    """Closed-form ``c(tau)`` with first and second derivatives in tau.

    ``c(tau) = exp(-kappa tau^2 / 2) / tau + exp(-kappa (1 - tau)^2 / 2) / (1 - tau)
    + sqrt(2 pi kappa) (F((1 - tau) sqrt(kappa)) - F(-tau sqrt(kappa)))``

    The derivatives of the Gaussian middle term cancel against the kappa
    terms of the exponential tails, which is why ``c'`` has no kappa prefactor.
    """
    tau, kappa = p.tau, p.kappa
    _check_open_tau(tau)
    s = 1.0 - tau
    el = math.exp(-0.5 * kappa * tau * tau)
    er = math.exp(-0.5 * kappa * s * s)
    c = el / tau + er / s
    if kappa > 0.0:
        rk = math.sqrt(kappa)
        c += math.sqrt(2.0 * math.pi * kappa) * _normal_mass(-tau * rk, s * rk)
    c1 = -el / tau**2 + er / s**2
    c2 = (kappa / tau + 2.0 / tau**3) * el + (kappa / s + 2.0 / s**3) * er
    return NormalizationEval(
        c=c,
        c_prime=c1,
        c_double_prime=c2,
        log_c=math.log(c),
        dlog_c=c1 / c,
        d2log_c=(c * c2 - c1 * c1) / (c * c),
    )


def normalized_loss(rv, p: LossParams) -> NormalizedTauCalculus:
    """Total loss plus ``n log c(tau)`` and its tau-derivatives for an n-vector of residuals."""
    _check_open_tau(p.tau)
    tc = total_loss(rv, p)
    n = np.size(rv)
    ne = normalization(p)
    return NormalizedTauCalculus(
        value=tc.value + n * ne.log_c,
        d_tau=tc.d_tau + n * ne.dlog_c,
        d2_tau=tc.d2_tau + n * ne.d2log_c,
    )


def default_certificate_grid():
    """0.01 to 0.99 in steps of 0.001."""
    return np.linspace(0.01, 0.99, 981)


def convexity_certificate(kappa: float, tau_grid=None) -> float:
    """Worst-case per-sample second tau-partial of the normalised loss.

    Returns ``min over tau_grid of (log c)''(tau) - kappa``. A positive value
    certifies strong convexity in tau for this kappa, whatever the residuals.
    """
    grid = default_certificate_grid() if tau_grid is None else np.asarray(tau_grid, dtype=float).ravel()
    if grid.size == 0:
        raise DomainError("tau grid is empty")
    if np.any(grid <= 0.0) or np.any(grid >= 1.0):
        raise DomainError("tau grid must lie inside (0, 1)")
    return min(normalization(LossParams(float(t), kappa)).d2log_c for t in grid) - kappa


def c_quadrature_oracle(p: LossParams, tolerance: float = 1e-10) -> float:
    """Numerically integrate ``exp(-rho_tau(r))`` over the real line.

    Test oracle, independent of the closed form. Tails are cut where the
    integrand drops below 1e-16.
    """
    tau, kappa = p.tau, p.kappa
    _check_open_tau(tau)
    left, right = p.left, p.right
    # exp(-(tau |r| - kappa tau^2 / 2)) < 1e-16 beyond these points
    cut = -math.log(1e-16)
    lo = min(left, -(cut + 0.5 * kappa * tau**2) / tau)
    hi = max(right, (cut + 0.5 * kappa * (1.0 - tau) ** 2) / (1.0 - tau))

    def f(r):
        return math.exp(-quantile_huber(r, p))

    pieces = [(lo, left), (left, right), (right, hi)] if kappa > 0 else [(lo, 0.0), (0.0, hi)]
    total = 0.0
    for a, b in pieces:
        if b > a:
            val, _ = integrate.quad(f, a, b, epsabs=tolerance / 3, epsrel=1e-13, limit=200)
            total += val
    return total

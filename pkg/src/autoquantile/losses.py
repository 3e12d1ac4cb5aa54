"""Quantile and quantile Huber losses with their r- and tau-derivatives.

All kernels accept a scalar residual or a numpy array of residuals and are
vectorised over it. Scalars in give Python floats out.

The quantile Huber loss with parameters (tau, kappa) is quadratic,
``r**2 / (2 kappa)``, on ``[-kappa tau, (1 - tau) kappa]`` and linear with
slopes ``-tau`` and ``1 - tau`` outside. Residuals lying exactly on a
breakpoint are assigned to the quadratic branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UnsupportedError

__all__ = [
    "LossParams",
    "TauCalculus",
    "quantile_loss",
    "quantile_huber",
    "quantile_huber_dr",
    "tau_calculus",
    "total_loss",
    "moreau_oracle",
]


@dataclass(frozen=True)
class LossParams:
    """Quantile parameter ``tau`` and Huber width ``kappa`` (``kappa = 0`` is the pure quantile loss)."""

    tau: float
    kappa: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.tau) and 0.0 <= self.tau <= 1.0):
            raise DomainError(f"tau must lie in [0, 1], got {self.tau!r}")
        if not (math.isfinite(self.kappa) and self.kappa >= 0.0):
            raise DomainError(f"kappa must be finite and >= 0, got {self.kappa!r}")

    @property
    def left(self) -> float:
        """Left breakpoint ``-kappa * tau``."""
        return -self.kappa * self.tau

    @property
    def right(self) -> float:
        """Right breakpoint ``(1 - tau) * kappa``."""
        return (1.0 - self.tau) * self.kappa


@dataclass(frozen=True)
class TauCalculus:
    value: float
    d_tau: float
    d2_tau: float


def _as_residuals(r):
    arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("residuals must be finite")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def quantile_loss(r, tau):
    """Check function ``(-tau + 1[r >= 0]) * r``."""
    tau = float(tau)
    if not (math.isfinite(tau) and 0.0 <= tau <= 1.0):
        raise DomainError(f"tau must lie in [0, 1], got {tau!r}")
    r = _as_residuals(r)
    return _out((np.where(r >= 0.0, 1.0, 0.0) - tau) * r)


def _branches(r, p: LossParams):
    below = r < p.left
    above = r > p.right
    return below, above


def quantile_huber(r, p: LossParams):
    """Quantile Huber loss; reduces to :func:`quantile_loss` when ``p.kappa == 0``."""
    r = _as_residuals(r)
    tau, kappa = p.tau, p.kappa
    if kappa == 0.0:
        return quantile_loss(r, tau)
    below, above = _branches(r, p)
    val = np.where(
        below,
        -tau * r - 0.5 * kappa * tau**2,
        np.where(
            above,
            (1.0 - tau) * r - 0.5 * kappa * (1.0 - tau) ** 2,
            r * r / (2.0 * kappa),
        ),
    )
    return _out(val)


def quantile_huber_dr(r, p: LossParams):
    """Derivative of :func:`quantile_huber` in the residual.

    Raises
    ------
    UnsupportedError
        If ``kappa == 0``: the quantile loss has a kink at the origin.
    """
    if p.kappa == 0.0:
        raise UnsupportedError("r-derivative requires kappa > 0")
    r = _as_residuals(r)
    below, above = _branches(r, p)
    return _out(np.where(below, -p.tau, np.where(above, 1.0 - p.tau, r / p.kappa)))


def tau_calculus(r, p: LossParams) -> TauCalculus:
    """Loss value and first/second partials in tau, summed over ``r`` if it is an array.

    Outside the quadratic interval the second partial is ``-kappa``.
    """
    r = _as_residuals(r)
    tau, kappa = p.tau, p.kappa
    below, above = _branches(r, p)
    value = quantile_huber(r, p)
    d_tau = np.where(below, -r - kappa * tau, np.where(above, -r + kappa * (1.0 - tau), 0.0))
    d2_tau = np.where(below | above, -kappa, 0.0)
    return TauCalculus(float(np.sum(value)), float(np.sum(d_tau)), float(np.sum(d2_tau)))


def total_loss(rv, p: LossParams) -> TauCalculus:
    """Sum of the loss and its tau-partials over a nonempty residual vector."""
    rv = _as_residuals(rv)
    if rv.ndim != 1 or rv.size == 0:
        raise DomainError("residual vector must be one-dimensional and nonempty")
    return tau_calculus(rv, p)


def moreau_oracle(r, p: LossParams, grid_resolution: int = 10_000):
    """Brute-force Moreau envelope ``min_z q_tau(z) + (r - z)**2 / (2 kappa)``.

    Test oracle. The minimiser lies in ``[min(r, 0) - kappa, max(r, 0) + kappa]``,
    which is scanned on a uniform grid; ``z = 0`` (the kink) is always included.
    """
    if p.kappa <= 0.0:
        raise DomainError("Moreau oracle requires kappa > 0")
    if grid_resolution < 1000:
        raise DomainError("grid_resolution must be at least 1000")
    r = _as_residuals(r)
    flat = np.atleast_1d(r).ravel()
    lo = np.minimum(flat, 0.0) - p.kappa
    hi = np.maximum(flat, 0.0) + p.kappa
    t = np.linspace(0.0, 1.0, grid_resolution)
    z = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    z = np.concatenate([z, np.zeros((flat.size, 1))], axis=1)
    check = (np.where(z >= 0.0, 1.0, 0.0) - p.tau) * z
    env = np.min(check + (flat[:, None] - z) ** 2 / (2.0 * p.kappa), axis=1)
    return _out(env.reshape(r.shape))

"""Minimise the normalised loss over tau for a fixed residual vector.

The objective is strongly convex and twice differentiable in tau (for kappa in
[0, 1]), but its second derivative jumps whenever a breakpoint crosses a
residual. We therefore run Newton on the gradient inside a shrinking bracket
and fall back to bisection whenever a Newton step leaves the bracket or fails
to reduce the gradient magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConvergenceError, DomainError
from .losses import LossParams
from .normalizer import TAU_HI, TAU_LO, normalized_loss

__all__ = ["TauSolveConfig", "TauSolveResult", "solve_tau"]


@dataclass(frozen=True)
class TauSolveConfig:
    """Bounds and stopping rule for :func:`solve_tau`.

    ``grad_tol=None`` means ``1e-10 * n`` for an n-vector of residuals.
    """

    tau_lo: float = TAU_LO
    tau_hi: float = TAU_HI
    grad_tol: Optional[float] = None
    max_iter: int = 100

    def __post_init__(self):
        if not (0.0 < self.tau_lo < self.tau_hi < 1.0):
            raise DomainError("need 0 < tau_lo < tau_hi < 1")
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise DomainError("grad_tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")


@dataclass(frozen=True)
class TauSolveResult:
    tau: float
    value: float
    grad: float
    iterations: int

    def __iter__(self):
        # allows ``tau, value = solve_tau(...)``
        return iter((self.tau, self.value))


def solve_tau(rv, kappa: float, cfg: TauSolveConfig = TauSolveConfig()) -> TauSolveResult:
    """Return ``tau* = argmin_tau`` of the normalised loss of ``rv`` on ``[tau_lo, tau_hi]``.

    On return either ``|d/dtau| <= grad_tol`` or tau sits at a bound with the
    gradient pointing outward (an inward-pointing descent direction does not
    exist). Starts from 0.5.

    Raises
    ------
    ConvergenceError
        When ``max_iter`` is exhausted; ``best`` holds the iterate with the
        smallest gradient magnitude as a :class:`TauSolveResult`.
    """
    rv = np.asarray(rv, dtype=float)
    n = rv.size
    if n == 0:
        raise DomainError("residual vector is empty")
    tol = 1e-10 * n if cfg.grad_tol is None else cfg.grad_tol

    def evaluate(t):
        return normalized_loss(rv, LossParams(t, kappa))

    lo, hi = cfg.tau_lo, cfg.tau_hi
    ev_lo = evaluate(lo)
    if ev_lo.d_tau >= 0.0:
        return TauSolveResult(lo, ev_lo.value, ev_lo.d_tau, 0)
    ev_hi = evaluate(hi)
    if ev_hi.d_tau <= 0.0:
        return TauSolveResult(hi, ev_hi.value, ev_hi.d_tau, 0)

    t = 0.5
    ev = evaluate(t)
    best = TauSolveResult(t, ev.value, ev.d_tau, 0)
    for it in range(1, cfg.max_iter + 1):
        g = ev.d_tau
        if abs(g) < abs(best.grad):
            best = TauSolveResult(t, ev.value, g, it - 1)
        if abs(g) <= tol:
            return TauSolveResult(t, ev.value, g, it - 1)
        if g > 0.0:
            hi = t
        else:
            lo = t
        if hi - lo <= 4.0 * math.ulp(t):
            # bracket collapsed to rounding level; gradient cannot get smaller
            return TauSolveResult(t, ev.value, g, it - 1)

        candidate = None
        if ev.d2_tau > 0.0:
            step = t - g / ev.d2_tau
            if lo < step < hi:
                trial = evaluate(step)
                if abs(trial.d_tau) < abs(g):
                    candidate = (step, trial)
        if candidate is None:
            mid = 0.5 * (lo + hi)
            candidate = (mid, evaluate(mid))
        t, ev = candidate

    if abs(ev.d_tau) <= tol:
        return TauSolveResult(t, ev.value, ev.d_tau, cfg.max_iter)
    raise ConvergenceError(
        f"tau solve did not reach |grad| <= {tol:g} in {cfg.max_iter} iterations", best=best
    )

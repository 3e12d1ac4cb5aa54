"""Joint inference of regression coefficients and tau by variable projection.

For an affine residual ``r(x) = y - A x`` the joint objective

    g(x, tau) = n log c(tau) + sum_i rho_tau(y_i - a_i^T x)

is biconvex but never jointly convex. For every fixed ``x`` the tau problem is
a strongly convex scalar minimisation, so we eliminate it and descend on the
projected function ``g~(x) = g(x, tau(x))``. Its gradient is simply the
x-partial of ``g`` evaluated at ``tau(x)``. The outer loop is L-BFGS with
backtracking line search, started from ``x = 0``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, List

import numpy as np

from .errors import ConvergenceError, DomainError, StagnationError
from .losses import LossParams, quantile_huber, quantile_huber_dr
from .normalizer import normalization
from .tau_inference import TauSolveConfig, solve_tau

__all__ = [
    "AffineModel",
    "SolverConfig",
    "JointSolution",
    "objective",
    "projected_gradient",
    "solve_joint",
    "fit_fixed_tau",
    "least_squares",
    "lemma1_check",
]

_MIN_STEP = 1e-12


@dataclass(frozen=True)
class AffineModel:
    """Design matrix ``design`` (n x p, rows are the a_i) and response ``response`` (n,)."""

    design: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.design, dtype=float))
        y = np.asarray(self.response, dtype=float).ravel()
        if A.ndim != 2:
            raise DomainError("design must be a matrix")
        n, p = A.shape
        if y.size != n:
            raise DomainError(f"response has {y.size} entries, design has {n} rows")
        if not (n >= p >= 1):
            raise DomainError(f"need n >= p >= 1, got n={n}, p={p}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y))):
            raise DomainError("design and response must be finite")
        object.__setattr__(self, "design", A)
        object.__setattr__(self, "response", y)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]

    def residuals(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.p:
            raise DomainError(f"x has {x.size} entries, model has {self.p} columns")
        return self.response - self.design @ x


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-6
    max_iter: int = 500
    memory: int = 10
    ls_shrink: float = 0.5
    ls_c1: float = 1e-4
    kappa: float = 1.0
    tau_cfg: TauSolveConfig = field(default_factory=TauSolveConfig)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if not 0 < self.ls_shrink < 1:
            raise DomainError("ls_shrink must lie in (0, 1)")
        if not 0 < self.ls_c1 < 0.5:
            raise DomainError("ls_c1 must lie in (0, 0.5)")
        if not self.kappa > 0:
            raise DomainError("kappa must be positive for the x-gradient")
        if self.max_iter < 1 or self.memory < 1:
            raise DomainError("max_iter and memory must be >= 1")


@dataclass
class JointSolution:
    x: np.ndarray
    tau: float
    objective: float
    iterations: int
    err: float
    converged: bool
    trace: List[float] = field(default_factory=list)


def objective(m: AffineModel, x, tau: float, kappa: float) -> float:
    """``g(x, tau) = n log c(tau) + sum_i rho_tau(y_i - a_i^T x)``."""
    p = LossParams(tau, kappa)
    r = m.residuals(x)
    return m.n * normalization(p).log_c + float(np.sum(quantile_huber(r, p)))


def _x_gradient(m: AffineModel, r, p: LossParams) -> np.ndarray:
    # d/dx rho(y - A x) = -A^T rho'(r)
    return -(m.design.T @ quantile_huber_dr(r, p))


def projected_gradient(m: AffineModel, x, kappa: float, tau_cfg: TauSolveConfig = TauSolveConfig()):
    """Gradient of ``x -> g(x, tau(x))`` and the inferred ``tau(x)``.

    Returns ``(grad, tau_at_x)``.
    """
    r = m.residuals(x)
    tau = solve_tau(r, kappa, tau_cfg).tau
    return _x_gradient(m, r, LossParams(tau, kappa)), tau


def _lbfgs_direction(grad, pairs, gamma):
    # two-loop recursion, returns H^{-1}-approximation applied to grad
    q = grad.copy()
    alphas = []
    for s, yv, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * yv
    q *= gamma
    for (s, yv, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (yv @ q)
        q += (a - b) * s
    return q


def _minimize(evaluate: Callable, x0, cfg: SolverConfig, make_solution: Callable):
    """L-BFGS with backtracking. ``evaluate(x) -> (f, grad, aux)``."""
    x = np.array(x0, dtype=float)
    f, grad, aux = evaluate(x)
    trace = [f]
    pairs = deque(maxlen=cfg.memory)
    gamma = 1.0
    err = np.inf

    for k in range(cfg.max_iter):
        d = _lbfgs_direction(grad, list(pairs), gamma) if pairs else grad.copy()
        slope = grad @ d
        if not slope > 0.0:
            pairs.clear()
            gamma = 1.0
            d = grad.copy()
            slope = grad @ d
        err = float(np.linalg.norm(d))
        if err <= cfg.epsilon:
            return make_solution(x, f, aux, k, err, True, trace)

        while True:
            alpha = 1.0
            accepted = False
            while alpha >= _MIN_STEP:
                x_new = x - alpha * d
                f_new, grad_new, aux_new = evaluate(x_new)
                if f_new <= f - cfg.ls_c1 * alpha * slope:
                    accepted = True
                    break
                alpha *= cfg.ls_shrink
            if accepted or not pairs:
                break
            # quasi-Newton direction failed; retry along the plain gradient
            pairs.clear()
            gamma = 1.0
            d = grad.copy()
            slope = grad @ d
        if not accepted:
            best = make_solution(x, f, aux, k, err, False, trace)
            raise StagnationError(
                f"line search found no sufficient decrease above step {_MIN_STEP:g}", best=best
            )

        s = x_new - x
        yv = grad_new - grad
        sy = s @ yv
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(yv):
            pairs.append((s, yv, 1.0 / sy))
            gamma = sy / (yv @ yv)
        x, f, grad, aux = x_new, f_new, grad_new, aux_new
        trace.append(f)

    best = make_solution(x, f, aux, cfg.max_iter, err, False, trace)
    raise ConvergenceError(f"no convergence within {cfg.max_iter} iterations", best=best)


def solve_joint(m: AffineModel, cfg: SolverConfig = SolverConfig(), x0=None) -> JointSolution:
    """Jointly infer ``(x, tau)`` by minimising the projected objective.

    Stops when the quasi-Newton step ``d`` satisfies ``||d|| <= epsilon``.
    ``x0`` defaults to zeros. The objective trace over accepted steps is
    nonincreasing and kept in ``JointSolution.trace``.

    Raises
    ------
    ConvergenceError
        ``max_iter`` exhausted (``best`` carries the last iterate).
    StagnationError
        No step down to 1e-12 gives sufficient decrease.
    """
    kappa = cfg.kappa

    def evaluate(x):
        r = m.residuals(x)
        res = solve_tau(r, kappa, cfg.tau_cfg)
        return res.value, _x_gradient(m, r, LossParams(res.tau, kappa)), res.tau

    def make_solution(x, f, tau, k, err, ok, trace):
        return JointSolution(x=x.copy(), tau=tau, objective=f, iterations=k, err=err, converged=ok, trace=list(trace))

    start = np.zeros(m.p) if x0 is None else np.asarray(x0, dtype=float)
    return _minimize(evaluate, start, cfg, make_solution)


def fit_fixed_tau(m: AffineModel, tau: float, cfg: SolverConfig = SolverConfig(), x0=None) -> JointSolution:
    """Plain quantile Huber regression at a fixed tau (no tau inference).

    The reported objective includes ``n log c(tau)`` so results at different
    tau are comparable.
    """
    p = LossParams(tau, cfg.kappa)
    log_c = m.n * normalization(p).log_c

    def evaluate(x):
        r = m.residuals(x)
        return log_c + float(np.sum(quantile_huber(r, p))), _x_gradient(m, r, p), tau

    def make_solution(x, f, t, k, err, ok, trace):
        return JointSolution(x=x.copy(), tau=t, objective=f, iterations=k, err=err, converged=ok, trace=list(trace))

    start = np.zeros(m.p) if x0 is None else np.asarray(x0, dtype=float)
    return _minimize(evaluate, start, cfg, make_solution)


def least_squares(m: AffineModel) -> np.ndarray:
    """Least-squares coefficients via a reduced QR factorisation."""
    Q, R = np.linalg.qr(m.design)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag.min() <= max(m.design.shape) * np.finfo(float).eps * diag.max():
        raise DomainError("design matrix is rank deficient")
    return np.linalg.solve(R, Q.T @ m.response)


def lemma1_check(h2: float = 0.0) -> float:
    """Determinant of the Hessian ``[[h'', 1], [1, 0]]`` of ``h(tau) + tau r``.

    Always -1, so the Hessian is indefinite and no choice of ``h`` makes the
    function jointly convex in ``(r, tau)``.
    """
    H = np.array([[float(h2), 1.0], [1.0, 0.0]])
    return float(H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0])


def with_kappa(cfg: SolverConfig, kappa: float) -> SolverConfig:
    return replace(cfg, kappa=kappa)

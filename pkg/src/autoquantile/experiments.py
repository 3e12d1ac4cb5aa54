"""Experiment runners behind the CLI commands.

Each runner takes plain parameters and returns lists of row dicts; the CLI
turns them into CSV files. Repetition ``rep`` of condition ``row`` always
draws from ``rng_for(seed, row, rep)``, so the linear demo and the fixed-tau
profile scan see identical data for equal seeds.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .datasets import (
    Dataset,
    NoiseSpec,
    gen_linear_demo,
    gen_slump_surrogate,
    rescale,
    rng_for,
    sample_sign_mixed_laplace,
    split,
)
from .errors import ConvergenceError
from .gbm import GbmConfig, fit, predict
from .losses import LossParams, total_loss
from .normalizer import convexity_certificate, normalization
from .tau_inference import solve_tau
from .varpro import SolverConfig, fit_fixed_tau, least_squares, solve_joint

log = logging.getLogger(__name__)

DEMO_POS_FRACTIONS = (1.0, 0.8, 0.6, 0.4, 0.2, 0.0)


def demo_problem(seed, row, rep, n, x_true, noise_scale, pos_fraction):
    return gen_linear_demo(rng_for(seed, row, rep), n, x_true, NoiseSpec(noise_scale, pos_fraction))


def run_demo(
    seed: int = 0,
    reps: int = 100,
    n: int = 100,
    x_true: Sequence[float] = (2.0, 5.0),
    noise_scale: float = 2.5,
    pos_fractions: Sequence[float] = DEMO_POS_FRACTIONS,
    solver: SolverConfig = SolverConfig(kappa=1.0),
):
    """Least squares vs joint inference on ``y = A x_true + noise``.

    Returns ``(records, summary, failures)``. MSE is the squared error norm
    ``||x_hat - x_true||^2``; failed solves are excluded from the summary.
    """
    records, summary, failures = [], [], 0
    for row, pf in enumerate(pos_fractions):
        for rep in range(reps):
            m, xt = demo_problem(seed, row, rep, n, x_true, noise_scale, pf)
            x_ls = least_squares(m)
            rec = {
                "pos_fraction": pf,
                "rep": rep,
                "mse_least_squares": float(np.sum((x_ls - xt) ** 2)),
                "mse_proposed": float("nan"),
                "tau": float("nan"),
                "iterations": -1,
                "converged": False,
            }
            try:
                sol = solve_joint(m, solver)
                rec.update(
                    mse_proposed=float(np.sum((sol.x - xt) ** 2)),
                    tau=sol.tau,
                    iterations=sol.iterations,
                    converged=True,
                )
            except ConvergenceError as exc:
                failures += 1
                log.warning("demo row %s rep %d failed: %s", pf, rep, exc)
            records.append(rec)
        ok = [r for r in records if r["pos_fraction"] == pf and r["converged"]]
        summary.append(_demo_row(pf, ok))
    return records, summary, failures


def _demo_row(pf, ok):
    def stat(key, fn):
        return float(fn([r[key] for r in ok])) if ok else float("nan")

    return {
        "pos_fraction": pf,
        "mse_least_squares": stat("mse_least_squares", np.mean),
        "mse_proposed": stat("mse_proposed", np.mean),
        "mean_tau": stat("tau", np.mean),
        "std_mse_least_squares": stat("mse_least_squares", np.std),
        "std_mse_proposed": stat("mse_proposed", np.std),
        "std_tau": stat("tau", np.std),
        "n_ok": len(ok),
    }


def tau_grid(lo: float, hi: float, step: float) -> np.ndarray:
    k = int(round((hi - lo) / step))
    return np.round(lo + step * np.arange(k + 1), 12)


def run_residual_scan(
    seed: int = 0,
    n_residuals: int = 1000,
    residual_scale: float = 1.0,
    pos_fractions: Sequence[float] = (0.1, 0.25, 0.5, 0.75, 1.0),
    kappa: float = 1.0,
    taus: Optional[np.ndarray] = None,
):
    """Un-normalised and normalised loss curves over tau for one residual draw per sign mix.

    Returns ``(curves, minima)``; ``minima`` holds the grid argmin and the
    solver's tau for each mix.
    """
    taus = tau_grid(0.01, 0.99, 0.01) if taus is None else np.asarray(taus, dtype=float)
    curves, minima = [], []
    for row, pf in enumerate(pos_fractions):
        r = sample_sign_mixed_laplace(rng_for(seed, row), n_residuals, NoiseSpec(residual_scale, pf))
        norm_vals = []
        for t in taus:
            p = LossParams(float(t), kappa)
            raw = total_loss(r, p).value
            normed = raw + r.size * normalization(p).log_c
            norm_vals.append(normed)
            curves.append({"pos_fraction": pf, "tau": float(t), "unnormalized_loss": raw, "normalized_loss": normed})
        k = int(np.argmin(norm_vals))
        minima.append({
            "pos_fraction": pf,
            "argmin_tau_grid": float(taus[k]),
            "min_normalized_loss": float(norm_vals[k]),
            "tau_solver": solve_tau(r, kappa).tau,
        })
    return curves, minima


def run_profile_scan(
    seed: int = 0,
    reps: int = 100,
    n: int = 100,
    x_true: Sequence[float] = (2.0, 5.0),
    noise_scale: float = 2.5,
    pos_fractions: Sequence[float] = DEMO_POS_FRACTIONS,
    taus: Optional[np.ndarray] = None,
    solver: SolverConfig = SolverConfig(kappa=1.0),
):
    """Mean normalised penalty ``g(x_tau, tau) / n`` of fixed-tau fits over a tau grid.

    Uses the same draws as :func:`run_demo`. Each fit is warm-started from
    the previous grid point's solution. Returns ``(curves, minima, failures)``.
    """
    taus = tau_grid(0.01, 0.99, 0.01) if taus is None else np.asarray(taus, dtype=float)
    curves, minima, failures = [], [], 0
    for row, pf in enumerate(pos_fractions):
        totals = np.zeros(taus.size)
        counts = np.zeros(taus.size)
        for rep in range(reps):
            m, _ = demo_problem(seed, row, rep, n, x_true, noise_scale, pf)
            x = None
            for i, t in enumerate(taus):
                try:
                    sol = fit_fixed_tau(m, float(t), solver, x0=x)
                except ConvergenceError as exc:
                    failures += 1
                    log.warning("profile fit row %s rep %d tau %g failed: %s", pf, rep, t, exc)
                    continue
                x = sol.x
                totals[i] += sol.objective / m.n
                counts[i] += 1
        means = np.where(counts > 0, totals / np.maximum(counts, 1), np.nan)
        for t, v in zip(taus, means):
            curves.append({"pos_fraction": pf, "tau": float(t), "mean_normalized_penalty": float(v)})
        k = int(np.nanargmin(means))
        minima.append({"pos_fraction": pf, "argmin_tau": float(taus[k]), "min_penalty": float(means[k])})
    return curves, minima, failures


def load_or_surrogate(data_path: Optional[str], seed: int) -> Dataset:
    if data_path:
        from .datasets import load_csv

        return load_csv(data_path)
    return gen_slump_surrogate(rng_for(seed, 999))


def gbm_conditions(noise_levels, sign_mixes, trajectory_mixes):
    """(sigma, pos_fraction) rows: noise-free once, each sigma > 0 with each mix, then trajectory mixes at max sigma."""
    rows = []
    for s in noise_levels:
        if s == 0:
            rows.append((0.0, None))
        else:
            rows.extend((float(s), float(pf)) for pf in sign_mixes)
    top = float(max(noise_levels, default=0.0))
    if top > 0:
        rows.extend((top, float(pf)) for pf in trajectory_mixes if (top, float(pf)) not in rows)
    return rows


def run_gbm(
    ds: Dataset,
    seed: int = 0,
    runs: int = 10,
    noise_levels: Sequence[float] = (0.0, 2.0, 4.0),
    sign_mixes: Sequence[float] = (0.75, 0.5, 0.25),
    trajectory_mixes: Sequence[float] = (1.0, 0.0),
    train_fraction: float = 0.75,
    cfg: GbmConfig = GbmConfig(),
):
    """Quantile GBM over noise conditions; validation MSE is measured against the clean response.

    The dataset is rescaled to [-1, 1], noise is added to the response, then
    the rows are split. Conditions are paired: within a run they differ only
    in noise scale and sign count. Returns ``(per_run, summary, trajectories, failures)``.
    """
    scaled, _ = rescale(ds)
    per_run, summary, traj = [], [], []
    failures = 0
    for row, (sigma, pf) in enumerate(gbm_conditions(noise_levels, sign_mixes, trajectory_mixes)):
        mses = []
        for run in range(runs):
            # streams keyed by run only: all conditions of a run share magnitudes, sign order and split
            noise = sample_sign_mixed_laplace(
                rng_for(seed, run, 0), scaled.n, NoiseSpec(sigma, 0.5 if pf is None else pf)
            )
            noisy = Dataset(scaled.features, scaled.response + noise, list(scaled.feature_names))
            train, _, tr, va = split(noisy, train_fraction, rng_for(seed, run, 1), return_indices=True)
            model = fit(train.features, train.response, cfg)
            if model.aborted:
                failures += 1
            mse = float(np.mean((predict(model, scaled.features[va]) - scaled.response[va]) ** 2))
            mses.append(mse)
            pos = "-" if pf is None else pf
            per_run.append({
                "sigma": sigma,
                "pos_fraction": pos,
                "run": run,
                "mse": mse,
                "stages": len(model.stages),
                "initial_loss": model.initial_loss,
                "aborted": bool(model.aborted),
            })
            for j, st in enumerate(model.stages, start=1):
                traj.append({
                    "sigma": sigma, "pos_fraction": pos, "run": run, "stage": j,
                    "tau": st.tau, "beta": st.beta, "loss": st.loss,
                })
        summary.append({
            "sigma": sigma,
            "pos_fraction": "-" if pf is None else pf,
            "mse_mean": float(np.mean(mses)),
            "mse_std": float(np.std(mses)),
            "runs": runs,
        })
    return per_run, summary, traj, failures


def run_certificate(kappas: Sequence[float], taus: Optional[np.ndarray] = None) -> List[Dict]:
    rows = []
    for k in kappas:
        val = convexity_certificate(float(k), taus)
        rows.append({"kappa": float(k), "certificate": val, "convex": bool(val > 0)})
    return rows


def gbm_config(n_stages=200, max_depth=3, min_leaf=5, kappa=0.05, tau0=0.5, solver=None) -> GbmConfig:
    solver = SolverConfig(kappa=kappa) if solver is None else replace(solver, kappa=kappa)
    return GbmConfig(n_stages=n_stages, max_depth=max_depth, min_leaf=min_leaf, kappa=kappa, tau0=tau0, solver=solver)

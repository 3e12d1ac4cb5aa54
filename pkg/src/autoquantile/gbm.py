"""Gradient boosting with per-stage inference of the quantile parameter.

Each stage fits a least-squares regression tree to the negative gradient of
the quantile Huber loss at the previous stage's tau, then jointly infers the
stage coefficient beta_j and tau_j with the variable-projection solver, the
tree being held fixed. The stage objective includes the ``n log c(tau)`` term,
without which tau is not identifiable.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .errors import ConvergenceError, DomainError
from .losses import LossParams, quantile_huber_dr
from .tau_inference import solve_tau
from .varpro import AffineModel, SolverConfig, solve_joint

__all__ = [
    "TreeNode",
    "RegressionTree",
    "GbmStage",
    "GbmModel",
    "GbmConfig",
    "negative_gradient",
    "fit_tree",
    "fit_stage",
    "fit",
    "predict",
    "stage_objective",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

BETA_CAP = 1e3


@dataclass
class TreeNode:
    """Leaf when ``feature is None``; otherwise rows with ``x[feature] <= threshold`` go left."""

    value: float = 0.0
    feature: Optional[int] = None
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass
class RegressionTree:
    root: TreeNode
    max_depth: int

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(X.shape[0])
        self._fill(self.root, X, np.arange(X.shape[0]), out)
        return out

    def _fill(self, node, X, idx, out):
        if node.is_leaf:
            out[idx] = node.value
            return
        go_left = X[idx, node.feature] <= node.threshold
        self._fill(node.left, X, idx[go_left], out)
        self._fill(node.right, X, idx[~go_left], out)

    def depth(self) -> int:
        def d(node):
            return 0 if node.is_leaf else 1 + max(d(node.left), d(node.right))

        return d(self.root)

    def leaves(self) -> List[TreeNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend((node.right, node.left))
        return out


@dataclass
class GbmStage:
    tree: RegressionTree
    beta: float
    tau: float
    loss: float = float("nan")  # normalised training loss after this stage


@dataclass
class GbmModel:
    f0: float
    kappa: float
    n_features: int
    stages: List[GbmStage] = field(default_factory=list)
    initial_loss: float = float("nan")
    aborted: Optional[str] = None

    @property
    def taus(self) -> np.ndarray:
        return np.array([s.tau for s in self.stages])

    @property
    def losses(self) -> np.ndarray:
        return np.array([s.loss for s in self.stages])


@dataclass(frozen=True)
class GbmConfig:
    n_stages: int = 200
    max_depth: int = 3
    min_leaf: int = 5
    kappa: float = 0.05
    tau0: float = 0.5
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.n_stages < 0:
            raise DomainError("n_stages must be >= 0")
        if self.max_depth < 1 or self.min_leaf < 1:
            raise DomainError("max_depth and min_leaf must be >= 1")
        if not 0.0 < self.tau0 < 1.0:
            raise DomainError("tau0 must lie in (0, 1)")
        if not self.kappa > 0:
            raise DomainError("kappa must be positive")


def negative_gradient(y, f, p: LossParams) -> np.ndarray:
    """Pseudo-responses ``-d rho(y - f) / d f``; ``log c`` does not depend on ``f``."""
    return np.asarray(quantile_huber_dr(np.asarray(y, dtype=float) - np.asarray(f, dtype=float), p))


def _best_split(X, t, min_leaf):
    """Best (gain, feature, threshold) by variance reduction, or None."""
    n = t.size
    total = t.sum()
    base = total * total / n
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs, ts = X[order, j], t[order]
        csum = np.cumsum(ts)[:-1]
        n_left = np.arange(1, n)
        valid = (n_left >= min_leaf) & (n - n_left >= min_leaf) & (xs[1:] > xs[:-1])
        if not valid.any():
            continue
        score = csum**2 / n_left + (total - csum) ** 2 / (n - n_left) - base
        score = np.where(valid, score, -np.inf)
        k = int(np.argmax(score))  # first maximiser = lowest threshold
        if best is None or score[k] > best[0]:
            best = (float(score[k]), j, 0.5 * (xs[k] + xs[k + 1]))
    return best


def fit_tree(X, targets, max_depth: int = 3, min_leaf: int = 5) -> RegressionTree:
    """Greedy CART least-squares tree; leaf values are target means.

    Splits sit at midpoints between consecutive distinct feature values. Ties
    go to the lowest feature index, then the lowest threshold.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    t = np.asarray(targets, dtype=float).ravel()
    if X.shape[0] != t.size:
        raise DomainError("X and targets disagree in length")
    if t.size == 0:
        raise DomainError("cannot fit a tree to no samples")

    def grow(idx, depth):
        tt = t[idx]
        node = TreeNode(value=float(tt.mean()))
        if depth >= max_depth or idx.size < 2 * min_leaf or np.all(tt == tt[0]):
            return node
        found = _best_split(X[idx], tt, min_leaf)
        # gains at rounding level are not real splits
        if found is None or found[0] <= 1e-12 * max(1.0, float(np.sum(tt * tt))):
            return node
        _, j, thr = found
        mask = X[idx, j] <= thr
        node.feature, node.threshold = j, float(thr)
        node.left = grow(idx[mask], depth + 1)
        node.right = grow(idx[~mask], depth + 1)
        return node

    return RegressionTree(grow(np.arange(t.size), 0), max_depth)


def stage_objective(y, f_prev, psi, beta: float, tau: float, kappa: float) -> float:
    """Normalised loss of residuals ``y - f_prev - beta * psi`` at ``tau``."""
    from .normalizer import normalized_loss

    r = np.asarray(y) - np.asarray(f_prev) - beta * np.asarray(psi)
    return normalized_loss(r, LossParams(tau, kappa)).value


def fit_stage(y, f_prev, tree: RegressionTree, X, cfg: GbmConfig) -> GbmStage:
    """Infer ``(beta, tau)`` for a fixed tree by joint minimisation from ``beta = 0``."""
    psi = tree.predict(X)
    m = AffineModel(psi[:, None], np.asarray(y, dtype=float) - np.asarray(f_prev, dtype=float))
    sol = solve_joint(m, replace(cfg.solver, kappa=cfg.kappa))
    beta, tau, loss = float(sol.x[0]), sol.tau, sol.objective
    if abs(beta) > BETA_CAP:
        beta = float(np.clip(beta, -BETA_CAP, BETA_CAP))
        res = solve_tau(m.residuals([beta]), cfg.kappa, cfg.solver.tau_cfg)
        tau, loss = res.tau, res.value
    return GbmStage(tree=tree, beta=beta, tau=tau, loss=loss)


def fit(X, y, cfg: GbmConfig = GbmConfig()) -> GbmModel:
    """Stagewise boosting with tau re-inferred at every stage.

    The intercept is the median of ``y`` and stage 1 uses ``cfg.tau0`` for its
    negative gradient. No shrinkage is applied. If a stage's solver fails the
    fit stops and the completed stages are returned with ``aborted`` set.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0 or X.shape[0] != y.size:
        raise DomainError("need a nonempty dataset with matching X and y")
    f0 = float(np.median(y))
    f = np.full(y.size, f0)
    model = GbmModel(f0=f0, kappa=cfg.kappa, n_features=X.shape[1])
    model.initial_loss = solve_tau(y - f, cfg.kappa, cfg.solver.tau_cfg).value
    tau_prev = cfg.tau0
    for j in range(cfg.n_stages):
        targets = negative_gradient(y, f, LossParams(tau_prev, cfg.kappa))
        tree = fit_tree(X, targets, cfg.max_depth, cfg.min_leaf)
        try:
            stage = fit_stage(y, f, tree, X, cfg)
        except ConvergenceError as exc:
            log.warning("stage %d failed, stopping with %d stages: %s", j + 1, j, exc)
            model.aborted = f"stage {j + 1}: {exc}"
            break
        model.stages.append(stage)
        f = f + stage.beta * tree.predict(X)
        tau_prev = stage.tau
    return model


def predict(model: GbmModel, X) -> np.ndarray:
    """``f0 + sum_j beta_j * tree_j(x)`` for every row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise DomainError(f"model expects {model.n_features} features, got {X.shape[1]}")
    out = np.full(X.shape[0], model.f0)
    for s in model.stages:
        out += s.beta * s.tree.predict(X)
    return out


# -- serialisation ----------------------------------------------------------

FORMAT = "autoquantile-gbm"
FORMAT_VERSION = 1


def _node_to_dict(node: TreeNode):
    if node.is_leaf:
        return {"value": node.value}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "value": node.value,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(d) -> TreeNode:
    if "feature" not in d:
        return TreeNode(value=float(d["value"]))
    return TreeNode(
        value=float(d.get("value", 0.0)),
        feature=int(d["feature"]),
        threshold=float(d["threshold"]),
        left=_node_from_dict(d["left"]),
        right=_node_from_dict(d["right"]),
    )


def model_to_dict(model: GbmModel) -> dict:
    return {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "f0": model.f0,
        "kappa": model.kappa,
        "n_features": model.n_features,
        "initial_loss": model.initial_loss,
        "aborted": model.aborted,
        "stages": [
            {
                "beta": s.beta,
                "tau": s.tau,
                "loss": s.loss,
                "max_depth": s.tree.max_depth,
                "tree": _node_to_dict(s.tree.root),
            }
            for s in model.stages
        ],
    }


def model_from_dict(d: dict) -> GbmModel:
    if d.get("format") != FORMAT:
        raise DomainError(f"not a {FORMAT} document")
    if d.get("version") != FORMAT_VERSION:
        raise DomainError(f"unsupported model version {d.get('version')!r}")
    stages = [
        GbmStage(
            tree=RegressionTree(_node_from_dict(s["tree"]), int(s["max_depth"])),
            beta=float(s["beta"]),
            tau=float(s["tau"]),
            loss=float(s["loss"]),
        )
        for s in d["stages"]
    ]
    return GbmModel(
        f0=float(d["f0"]),
        kappa=float(d["kappa"]),
        n_features=int(d["n_features"]),
        stages=stages,
        initial_loss=float(d["initial_loss"]),
        aborted=d.get("aborted"),
    )


def save_model(model: GbmModel, path: Union[str, Path]) -> None:
    """Write the model as JSON. Floats use shortest round-trip repr, so loading is value-exact."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1, allow_nan=True)
        fh.write("\n")


def load_model(path: Union[str, Path]) -> GbmModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))

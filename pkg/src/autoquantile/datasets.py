"""Synthetic data with sign-mixed Laplace noise, CSV loading, rescaling and splits.

Random generators are numpy ``Generator`` objects (PCG64). Repetition ``k`` of
an experiment seeded with ``seed`` draws from ``rng_for(seed, ..., k)``, so
repetitions are reproducible independently of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .errors import DomainError, ParseError
from .varpro import AffineModel

__all__ = [
    "Dataset",
    "NoiseSpec",
    "AffineMap",
    "rng_for",
    "sample_sign_mixed_laplace",
    "gen_linear_demo",
    "gen_slump_surrogate",
    "load_csv",
    "rescale",
    "split",
]


@dataclass
class Dataset:
    features: np.ndarray
    response: np.ndarray
    feature_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.response, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise DomainError("features must be a nonempty n x d matrix")
        if y.size != X.shape[0]:
            raise DomainError("response length does not match number of rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DomainError("dataset entries must be finite")
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(X.shape[1])]
        elif len(self.feature_names) != X.shape[1]:
            raise DomainError("feature_names length does not match number of columns")
        self.features, self.response = X, y

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class NoiseSpec:
    """Laplace scale ``scale`` (0 means noise-free) and the fraction of positive signs."""

    scale: float = 1.0
    pos_fraction: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale >= 0):
            raise DomainError("noise scale must be finite and >= 0")
        if not 0.0 <= self.pos_fraction <= 1.0:
            raise DomainError("pos_fraction must lie in [0, 1]")


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Independent PCG64 stream derived from ``(seed, *stream)``, e.g. ``rng_for(seed, row, rep)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


def _laplace_inverse_cdf(u, scale):
    # F^{-1}(u) = -scale * sign(u - 1/2) * log(1 - 2 |u - 1/2|)
    c = u - 0.5
    return -scale * np.sign(c) * np.log1p(-2.0 * np.abs(c))


def sample_sign_mixed_laplace(rng: np.random.Generator, n: int, spec: NoiseSpec) -> np.ndarray:
    """Laplace magnitudes with an exact number ``round(n * pos_fraction)`` of positive signs.

    Positive positions are a uniformly random subset.
    """
    if spec.scale == 0.0:
        return np.zeros(n)
    mags = np.abs(_laplace_inverse_cdf(rng.random(n), spec.scale))
    n_pos = int(round(n * spec.pos_fraction))
    signs = -np.ones(n)
    signs[rng.permutation(n)[:n_pos]] = 1.0
    return signs * mags


def gen_linear_demo(rng: np.random.Generator, n: int, x_true, spec: NoiseSpec) -> Tuple[AffineModel, np.ndarray]:
    """``y = A x_true + noise`` with i.i.d. standard normal rows of ``A``."""
    x_true = np.asarray(x_true, dtype=float).ravel()
    if n < x_true.size:
        raise DomainError("need n >= p")
    A = rng.standard_normal((n, x_true.size))
    y = A @ x_true + sample_sign_mixed_laplace(rng, n, spec)
    return AffineModel(A, y), x_true


def gen_slump_surrogate(rng: np.random.Generator, n: int = 103, d: int = 7) -> Dataset:
    """Smooth nonlinear regression data shaped like the Concrete Slump set (103 x 7).

    Stand-in when no real CSV is available locally.
    """
    X = rng.uniform(0.0, 1.0, size=(n, d))
    w = np.linspace(1.0, -0.5, d)
    y = X @ w + 0.8 * np.sin(3.0 * X[:, 0]) * X[:, 1 % d] + 0.5 * (X[:, 2 % d] - 0.5) ** 2
    return Dataset(X, y, [f"x{j}" for j in range(d)])


def load_csv(path) -> Dataset:
    """Read a comma-separated numeric file with a header; the last column is the response."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"no such file: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing header", row=1)
    header = [h.strip() for h in lines[0].split(",")]
    if len(header) < 2:
        raise ParseError("need at least one feature column and a response column", row=1)
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(cells)}", row=i)
        vals = []
        for j, cell in enumerate(cells, start=1):
            try:
                v = float(cell.strip())
            except ValueError:
                raise ParseError(f"non-numeric cell {cell.strip()!r}", row=i, column=j) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite cell {cell.strip()!r}", row=i, column=j)
            vals.append(v)
        rows.append(vals)
    if not rows:
        raise ParseError("file has no data rows", row=2)
    data = np.array(rows)
    return Dataset(data[:, :-1], data[:, -1], header[:-1])


@dataclass(frozen=True)
class AffineMap:
    """``v -> scale * v + shift``; constant columns get ``scale = 0``."""

    scale: float
    shift: float
    lo: float
    hi: float

    def apply(self, v):
        return self.scale * np.asarray(v, dtype=float) + self.shift

    def inverse(self, u):
        u = np.asarray(u, dtype=float)
        if self.scale == 0.0:
            return np.full_like(u, self.lo)
        return (u - self.shift) / self.scale


def _fit_map(col) -> AffineMap:
    lo, hi = float(np.min(col)), float(np.max(col))
    if hi == lo:
        return AffineMap(0.0, 0.0, lo, hi)
    scale = 2.0 / (hi - lo)
    return AffineMap(scale, -1.0 - scale * lo, lo, hi)


def rescale(ds: Dataset) -> Tuple[Dataset, List[AffineMap]]:
    """Map every feature column and the response onto [-1, 1].

    Returns the rescaled dataset and one map per feature column followed by
    the response map.
    """
    maps = [_fit_map(ds.features[:, j]) for j in range(ds.d)] + [_fit_map(ds.response)]
    X = np.column_stack([maps[j].apply(ds.features[:, j]) for j in range(ds.d)])
    y = maps[-1].apply(ds.response)
    # pin the extremes against rounding in scale * v + shift
    for j, mp in enumerate(maps[:-1]):
        if mp.scale:
            X[ds.features[:, j] == mp.lo, j] = -1.0
            X[ds.features[:, j] == mp.hi, j] = 1.0
    if maps[-1].scale:
        y[ds.response == maps[-1].lo] = -1.0
        y[ds.response == maps[-1].hi] = 1.0
    return Dataset(X, y, list(ds.feature_names)), maps


def split(ds: Dataset, train_fraction: float, rng: np.random.Generator, return_indices: bool = False):
    """Seeded random split; the first ``floor(n * train_fraction)`` permuted rows train."""
    if not 0.0 < train_fraction < 1.0:
        raise DomainError("train_fraction must lie in (0, 1)")
    n_train = int(math.floor(ds.n * train_fraction))
    if n_train == 0 or n_train == ds.n:
        raise DomainError("split leaves one side empty")
    perm = rng.permutation(ds.n)
    tr, va = perm[:n_train], perm[n_train:]
    train = Dataset(ds.features[tr], ds.response[tr], list(ds.feature_names))
    valid = Dataset(ds.features[va], ds.response[va], list(ds.feature_names))
    if return_indices:
        return train, valid, tr, va
    return train, valid

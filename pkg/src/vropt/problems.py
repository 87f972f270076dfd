"""Finite-sum objectives over sparse rows with per-component smoothness constants."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .sampling import floor_smoothness

# Largest |second derivative| of z -> (1 - y*sigmoid(z))^2 over z in R and
# y in {-1,+1}; attained on the y = -1 branch near z = -0.947.  Derived once
# by max_sigmoid_sq_curvature() (dense grid scan refined by ternary search)
# and re-derived in the test suite.
SIGMOID_SQ_CURVATURE = 0.30836848257227656


class LossKind(enum.Enum):
    SIGMOID_SQUARED = "sigmoid-squared"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class Dataset:
    """n sparse feature rows with +/-1 labels; rows are (indices, values) pairs
    with strictly increasing 0-based indices."""

    n: int
    d: int
    rows: tuple
    labels: np.ndarray


@dataclass
class Problem:
    """A finite-sum objective: dataset, loss model and smoothness constants.

    All fields are fixed after construction except ``best_f_seen``, a
    monotone diagnostic tracking the lowest objective value observed across
    runs on this problem (surrogate for the unknown optimal value).
    """

    dataset: Dataset
    loss: LossKind
    mu: float
    L: np.ndarray
    Lbar: float
    Lmax: float
    best_f_seen: float = field(default=math.inf, compare=False)

    def note_value(self, f: float) -> None:
        if f < self.best_f_seen:
            self.best_f_seen = f


def make_dataset(rows, labels, d: int | None = None) -> Dataset:
    """Validate and freeze a sparse dataset.

    ``rows`` is a sequence of (indices, values) pairs with 0-based, strictly
    increasing indices; ``labels`` must be in {-1, +1}.
    """
    if len(rows) < 1:
        raise ValueError("dataset needs at least one example")
    labels = np.asarray(labels)
    if labels.shape != (len(rows),):
        raise ValueError("labels length does not match number of rows")
    if not np.all(np.isin(labels, (-1, 1))):
        raise ValueError("labels must be -1 or +1")
    frozen_rows = []
    max_idx = -1
    for idx, val in rows:
        idx = np.asarray(idx, dtype=np.int64)
        val = np.asarray(val, dtype=float)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("row indices and values must be 1-d and aligned")
        if idx.size:
            if idx[0] < 0 or np.any(np.diff(idx) <= 0):
                raise ValueError("row indices must be strictly increasing and >= 0")
            max_idx = max(max_idx, int(idx[-1]))
        idx.setflags(write=False)
        val.setflags(write=False)
        frozen_rows.append((idx, val))
    if d is None:
        d = max_idx + 1
    elif max_idx >= d:
        raise ValueError(f"row index {max_idx} outside feature dimension {d}")
    y = labels.astype(np.int64)
    y.setflags(write=False)
    return Dataset(n=len(frozen_rows), d=d, rows=tuple(frozen_rows), labels=y)


def synthesize(n: int, d: int, skew: float, seed: int) -> Dataset:
    """Seeded Gaussian rows rescaled so ||a_i||^2 spans [1, skew] geometrically."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if skew < 1.0:
        raise ValueError("skew must be >= 1")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    targets = skew ** (np.arange(n) / (n - 1.0)) if n > 1 else np.ones(1)
    norms = np.linalg.norm(A, axis=1)
    A *= (np.sqrt(targets) / norms)[:, None]
    labels = rng.integers(0, 2, size=n) * 2 - 1
    idx = np.arange(d, dtype=np.int64)
    rows = [(idx.copy(), A[i].copy()) for i in range(n)]
    return make_dataset(rows, labels)


def stable_sigmoid(z):
    """Overflow-safe logistic function, branch on the sign of z."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def _scalar_loss(loss: LossKind, z: float, y: float) -> float:
    if loss is LossKind.SIGMOID_SQUARED:
        r = 1.0 - y * stable_sigmoid(z)
        return r * r
    return 0.5 * (z - y) ** 2


def _scalar_slope(loss: LossKind, z: float, y: float) -> float:
    # derivative of the scalar loss with respect to z = a_i. x
    if loss is LossKind.SIGMOID_SQUARED:
        s = stable_sigmoid(z)
        return -2.0 * y * s * (1.0 - s) * (1.0 - y * s)
    return z - y


def _sigmoid_sq_curvature(z, y):
    s = stable_sigmoid(z)
    sp = s * (1.0 - s)
    spp = sp * (1.0 - 2.0 * s)
    return -2.0 * y * spp * (1.0 - y * s) + 2.0 * sp * sp


def max_sigmoid_sq_curvature(step: float = 1e-4, zmax: float = 20.0) -> float:
    """Re-derive SIGMOID_SQ_CURVATURE: grid scan of |l''| over [-zmax, zmax]
    for both labels, refined by ternary search around the grid argmax."""
    best = 0.0
    for y in (1.0, -1.0):
        z = np.arange(-zmax, zmax + step / 2, step)
        c = np.abs(_sigmoid_sq_curvature(z, y))
        i = int(np.argmax(c))
        lo = z[max(i - 1, 0)]
        hi = z[min(i + 1, z.size - 1)]
        for _ in range(200):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            if abs(_sigmoid_sq_curvature(m1, y)) < abs(_sigmoid_sq_curvature(m2, y)):
                lo = m1
            else:
                hi = m2
        best = max(best, abs(float(_sigmoid_sq_curvature(0.5 * (lo + hi), y))))
    return best


def smoothness_constants(dataset: Dataset, loss: LossKind, mu: float = 0.0) -> np.ndarray:
    """Per-component gradient Lipschitz constants L_i, floored away from zero."""
    sq = np.array([float(val @ val) for _, val in dataset.rows])
    if loss is LossKind.SIGMOID_SQUARED:
        L = SIGMOID_SQ_CURVATURE * sq
    else:
        L = sq + mu
    return floor_smoothness(L)


def build_problem(dataset: Dataset, loss: LossKind, mu: float = 0.0) -> Problem:
    if mu < 0.0:
        raise ValueError("mu must be nonnegative")
    if loss is LossKind.SIGMOID_SQUARED and mu != 0.0:
        raise ValueError("the sigmoid-squared loss takes no strong-convexity term")
    L = smoothness_constants(dataset, loss, mu)
    return Problem(
        dataset=dataset,
        loss=loss,
        mu=float(mu),
        L=L,
        Lbar=float(L.mean()),
        Lmax=float(L.max()),
    )


def _row_dot(dataset: Dataset, i: int, x: np.ndarray) -> float:
    idx, val = dataset.rows[i]
    return float(val @ x[idx])


def loss_value(problem: Problem, x) -> float:
    """f(x) = (1/n) sum_i f_i(x)."""
    x = np.asarray(x, dtype=float)
    ds = problem.dataset
    if x.shape != (ds.d,):
        raise ValueError(f"x must have shape ({ds.d},), got {x.shape}")
    terms = [
        _scalar_loss(problem.loss, _row_dot(ds, i, x), float(ds.labels[i]))
        for i in range(ds.n)
    ]
    f = math.fsum(terms) / ds.n
    if problem.mu:
        f += 0.5 * problem.mu * float(x @ x)
    return f


def component_gradient(problem: Problem, i: int, x) -> np.ndarray:
    """Gradient of f_i; support equals the row support (plus the dense mu*x
    term for the quadratic loss)."""
    ds = problem.dataset
    if not 0 <= i < ds.n:
        raise IndexError(f"component index {i} out of range [0, {ds.n})")
    x = np.asarray(x, dtype=float)
    if x.shape != (ds.d,):
        raise ValueError(f"x must have shape ({ds.d},), got {x.shape}")
    idx, val = ds.rows[i]
    slope = _scalar_slope(problem.loss, float(val @ x[idx]), float(ds.labels[i]))
    g = np.zeros(ds.d)
    g[idx] = slope * val
    if problem.mu:
        g += problem.mu * x
    return g


def full_gradient(problem: Problem, x) -> np.ndarray:
    """Mean of the component gradients, accumulated index-ascending with
    Kahan compensation so traces are bit-reproducible."""
    x = np.asarray(x, dtype=float)
    ds = problem.dataset
    s = np.zeros(ds.d)
    c = np.zeros(ds.d)
    for i in range(ds.n):
        g = component_gradient(problem, i, x)
        yc = g - c
        t = s + yc
        c = (t - s) - yc
        s = t
    return s / ds.n

"""Random-subset samplers over {0,...,n-1} with separable variance certificates.

Three sampling laws are supported: the uniform fixed-size minibatch, the
independent (per-index coin flip) sampling, and a cheap two-stage
approximation of the independent sampling.  Each carries a vector ``v``
certifying the matrix inequality ``P - p p^T <= Diag(p * v)``, which is what
makes the variance constants ``K`` and ``alpha`` computable in closed form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

MATRIX_CAP = 64          # dense probability matrices are for verification only
PSD_TOL = 1e-10          # absolute tolerance on the smallest eigenvalue
SMOOTHNESS_FLOOR = 1e-12  # L_i below floor*max(L) are lifted before use


class SamplingKind(enum.Enum):
    UNIFORM_MINIBATCH = "uniform-minibatch"
    INDEPENDENT = "independent"
    APPROX_INDEPENDENT = "approx-independent"


@dataclass(frozen=True)
class SamplingScheme:
    """Immutable description of a random-subset law.

    ``p`` holds the marginal inclusion probabilities, ``b = sum(p)`` the
    expected minibatch size, ``k`` the number of entries with ``p_i < 1``,
    ``a`` the first-stage subset size (approximate kind only) and ``v`` the
    separable variance certificate for the kind's closed form.
    """

    kind: SamplingKind
    n: int
    p: np.ndarray
    b: float
    k: int
    v: np.ndarray
    a: int | None = None


@dataclass(frozen=True)
class ComplexityConstants:
    """Variance constants governing the step sizes and rates."""

    K: float
    alpha: float
    Lbar: float


def _readonly(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


def _check_proper(p: np.ndarray) -> None:
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probability vector must be a non-empty 1-d array")
    if np.any(p <= 0.0):
        raise ValueError("sampling must be proper: all p_i > 0")
    if np.any(p > 1.0):
        raise ValueError("inclusion probabilities must satisfy p_i <= 1")


def floor_smoothness(L) -> np.ndarray:
    """Lift tiny smoothness constants to ``SMOOTHNESS_FLOOR * max(L)``.

    Keeps every importance probability strictly positive; lifting an L_i
    is always sound since L-smooth implies L'-smooth for L' >= L.
    """
    L = np.asarray(L, dtype=float)
    if L.size == 0:
        raise ValueError("empty smoothness vector")
    eps = SMOOTHNESS_FLOOR * float(L.max())
    return np.maximum(L, eps)


def compute_v(kind: SamplingKind, p, a: int | None = None) -> np.ndarray:
    """Closed-form variance certificate for the given sampling kind."""
    p = np.asarray(p, dtype=float)
    _check_proper(p)
    n = p.size
    if kind is SamplingKind.UNIFORM_MINIBATCH:
        if n == 1:
            return np.zeros(1)
        b = float(p.sum())
        return np.full(n, (n - b) / (n - 1.0))
    if kind is SamplingKind.INDEPENDENT:
        return 1.0 - p
    if kind is SamplingKind.APPROX_INDEPENDENT:
        frac = p < 1.0
        k = int(frac.sum())
        if k <= 1:
            raise ValueError(
                "approximate independent sampling is degenerate for k <= 1; "
                "use an independent scheme instead"
            )
        if a is None:
            a = math.ceil(k * float(p[frac].max()))
        s = (k - a) / (a * (k - 1.0))
        v = np.zeros(n)
        v[frac] = 1.0 - p[frac] * (1.0 - s)
        return v
    raise ValueError(f"unknown sampling kind: {kind!r}")


def uniform_minibatch(n: int, b) -> SamplingScheme:
    """Uniform law over all b-subsets of {0,...,n-1} (fixed cardinality)."""
    if n < 1:
        raise ValueError("n must be positive")
    if float(b) != int(b):
        raise ValueError("uniform minibatch sampling requires an integer b")
    b = int(b)
    if not 1 <= b <= n:
        raise ValueError(f"minibatch size must lie in [1, {n}], got {b}")
    p = np.full(n, b / n)
    v = compute_v(SamplingKind.UNIFORM_MINIBATCH, p)
    return SamplingScheme(
        kind=SamplingKind.UNIFORM_MINIBATCH,
        n=n,
        p=_readonly(p),
        b=float(b),
        k=n if b < n else 0,
        v=_readonly(v),
    )


def independent(p) -> SamplingScheme:
    """Independent sampling: index i included by its own coin with prob p_i."""
    p = np.asarray(p, dtype=float)
    _check_proper(p)
    v = compute_v(SamplingKind.INDEPENDENT, p)
    return SamplingScheme(
        kind=SamplingKind.INDEPENDENT,
        n=p.size,
        p=_readonly(p),
        b=float(p.sum()),
        k=int((p < 1.0).sum()),
        v=_readonly(v),
    )


def approximate_independent(p) -> SamplingScheme:
    """Two-stage approximation of independent sampling with the same marginals.

    Draws a uniform a-subset of the k fractional indices and thins it with
    per-index probabilities k*p_i/a; indices with p_i = 1 are always kept.
    Degenerate parameterizations (k <= 1, or a = k where the law coincides
    with the independent one) fall back to an independent scheme.
    """
    p = np.asarray(p, dtype=float)
    _check_proper(p)
    frac = p < 1.0
    k = int(frac.sum())
    if k <= 1:
        return independent(p)
    a = math.ceil(k * float(p[frac].max()))
    if a >= k:
        return independent(p)
    v = compute_v(SamplingKind.APPROX_INDEPENDENT, p, a)
    b = float(p.sum())
    if a < b + k - p.size - 1e-9:
        raise ValueError("inconsistent approximate sampling: a < b + k - n")
    return SamplingScheme(
        kind=SamplingKind.APPROX_INDEPENDENT,
        n=p.size,
        p=_readonly(p),
        b=b,
        k=k,
        v=_readonly(v),
        a=a,
    )


def optimal_probabilities(L, b) -> np.ndarray:
    """Importance probabilities minimizing the variance constant alpha.

    Solves min sum L_i^2/p_i subject to sum p = b, 0 < p_i <= 1: sort L
    ascending, scan k downward from n for the largest k with
    0 < b + k - n <= sum_{i<=k} L_i / L_k, set p_i = (b+k-n) L_i / sum_{j<=k} L_j
    for the k smallest constants and p_i = 1 for the rest, then undo the sort.
    """
    L = np.asarray(L, dtype=float)
    n = L.size
    if n == 0:
        raise ValueError("empty smoothness vector")
    if not 0.0 < float(b) <= n:
        raise ValueError(f"minibatch size must lie in (0, {n}], got {b}")
    if np.any(L <= 0.0):
        raise ValueError("all smoothness constants must be positive")
    L = floor_smoothness(L)
    b = float(b)
    order = np.argsort(L, kind="stable")
    Ls = L[order]
    csum = np.cumsum(Ls)
    k = None
    for kk in range(n, 0, -1):
        r = b + kk - n
        if r <= 0.0:
            break
        if r <= csum[kk - 1] / Ls[kk - 1]:
            k = kk
            break
    if k is None:
        # k = n - b + 1 always satisfies the condition, so this is unreachable
        # for valid inputs; guard against pathological float inputs anyway.
        raise ValueError("no feasible support size found")
    ps = np.ones(n)
    ps[:k] = (b + k - n) * Ls[:k] / csum[k - 1]
    np.minimum(ps, 1.0, out=ps)
    p = np.empty(n)
    p[order] = ps
    return p


def compute_alpha(L, scheme: SamplingScheme) -> ComplexityConstants:
    """Variance constants K = (b/n^2) sum v_i L_i^2 / p_i and alpha = K / Lbar^2."""
    L = np.asarray(L, dtype=float)
    if L.size != scheme.n:
        raise ValueError("smoothness vector length does not match scheme")
    K = scheme.b / scheme.n**2 * float(np.sum(scheme.v * L**2 / scheme.p))
    Lbar = float(L.mean())
    return ComplexityConstants(K=K, alpha=K / Lbar**2, Lbar=Lbar)


def _uniform_subset(n: int, b: int, rng: np.random.Generator) -> np.ndarray:
    # partial Fisher-Yates: O(b) swaps over a fresh index buffer
    buf = np.arange(n)
    for j in range(b):
        r = j + int(rng.integers(n - j))
        buf[j], buf[r] = buf[r], buf[j]
    out = buf[:b]
    out.sort()
    return out


def draw(scheme: SamplingScheme, rng: np.random.Generator) -> np.ndarray:
    """Draw one subset; returns a sorted array of included indices.

    The caller owns the random stream; schemes themselves are immutable, so
    concurrent draws with independent streams are safe.
    """
    if scheme.kind is SamplingKind.UNIFORM_MINIBATCH:
        return _uniform_subset(scheme.n, int(scheme.b), rng)
    if scheme.kind is SamplingKind.INDEPENDENT:
        return np.flatnonzero(rng.random(scheme.n) < scheme.p)
    frac = np.flatnonzero(scheme.p < 1.0)
    full = np.flatnonzero(scheme.p >= 1.0)
    k, a = scheme.k, scheme.a
    stage1 = frac[_uniform_subset(k, a, rng)]
    keep = rng.random(a) < k * scheme.p[stage1] / a
    out = np.concatenate([stage1[keep], full])
    out.sort()
    return out


def probability_matrix(scheme: SamplingScheme, cap: int = MATRIX_CAP) -> np.ndarray:
    """Dense matrix P with P_ij = Prob({i,j} in S); diagonal equals p."""
    n = scheme.n
    if n > cap:
        raise ValueError(f"probability matrix capped at n <= {cap}, got n = {n}")
    p = scheme.p
    if scheme.kind is SamplingKind.UNIFORM_MINIBATCH:
        b = scheme.b
        off = b * (b - 1.0) / (n * (n - 1.0)) if n > 1 else b
        P = np.full((n, n), off)
        np.fill_diagonal(P, b / n)
        return P
    P = np.outer(p, p)
    if scheme.kind is SamplingKind.APPROX_INDEPENDENT:
        k, a = scheme.k, scheme.a
        t = (a - 1.0) * k / (a * (k - 1.0))
        frac = p < 1.0
        both = np.outer(frac, frac)
        P[both] *= t
    np.fill_diagonal(P, p)
    return P


def verify_eso(P: np.ndarray, p, v, tol: float = PSD_TOL) -> bool:
    """True iff Diag(p*v) - (P - p p^T) has smallest eigenvalue >= -tol."""
    P = np.asarray(P, dtype=float)
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("P must be a square matrix")
    if not np.allclose(P, P.T, rtol=0.0, atol=1e-12):
        raise ValueError("P must be symmetric")
    if P.shape[0] != p.size or p.size != v.size:
        raise ValueError("dimension mismatch between P, p and v")
    M = np.diag(p * v) - (P - np.outer(p, p))
    return float(np.linalg.eigvalsh(M)[0]) >= -tol


def scheme_to_text(scheme: SamplingScheme) -> str:
    """Key-value block for run-config files; floats use shortest repr."""
    lines = [
        f"kind = {scheme.kind.value}",
        f"n = {scheme.n}",
        f"b = {float(scheme.b)!r}",
        "p = " + " ".join(repr(float(x)) for x in scheme.p),
    ]
    return "\n".join(lines) + "\n"


def scheme_from_text(text: str) -> SamplingScheme:
    """Parse the block written by ``scheme_to_text``; exact round-trip."""
    fields: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed scheme line: {raw!r}")
        fields[key.strip()] = value.strip()
    for required in ("kind", "n", "b", "p"):
        if required not in fields:
            raise ValueError(f"scheme block missing field {required!r}")
    kind = SamplingKind(fields["kind"])
    n = int(fields["n"])
    b = float(fields["b"])
    p = np.array([float(tok) for tok in fields["p"].split()])
    if p.size != n:
        raise ValueError("scheme block: p length does not match n")
    if kind is SamplingKind.UNIFORM_MINIBATCH:
        scheme = uniform_minibatch(n, b)
    elif kind is SamplingKind.INDEPENDENT:
        scheme = independent(p)
    else:
        scheme = approximate_independent(p)
        if scheme.kind is not kind:
            raise ValueError("scheme block: approximate sampling is degenerate")
    if abs(scheme.b - b) > 1e-12 * max(1.0, abs(b)):
        raise ValueError("scheme block: b does not match sum of p")
    return scheme

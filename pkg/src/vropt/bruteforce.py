"""Exhaustive small-n oracles: exact expectations over every sampling outcome,
certificate checks, and random search over feasible probability vectors."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .sampling import SamplingKind, SamplingScheme, compute_alpha, independent

INDEPENDENT_CAP = 16       # 2^n outcomes
SUBSET_COUNT_CAP = 1 << 16  # C(n,b) outcomes for the fixed-size law
SEARCH_CAP = 12


@dataclass(frozen=True)
class EnumeratedLaw:
    """Full support of a sampling: (subset, probability) pairs."""

    n: int
    p: np.ndarray
    outcomes: tuple


def enumerate_law(scheme: SamplingScheme) -> EnumeratedLaw:
    """Exact support and probabilities of the scheme's law."""
    n = scheme.n
    p = np.asarray(scheme.p, dtype=float)
    if scheme.kind is SamplingKind.UNIFORM_MINIBATCH:
        b = int(scheme.b)
        total = comb(n, b)
        if total > SUBSET_COUNT_CAP:
            raise ValueError(
                f"enumeration capped at C(n,b) <= {SUBSET_COUNT_CAP}, got {total}"
            )
        outcomes = tuple(
            (subset, 1.0 / total) for subset in combinations(range(n), b)
        )
    elif scheme.kind is SamplingKind.INDEPENDENT:
        if n > INDEPENDENT_CAP:
            raise ValueError(f"enumeration capped at n <= {INDEPENDENT_CAP}")
        outcomes = []
        for mask in range(1 << n):
            prob = 1.0
            subset = []
            for i in range(n):
                if mask >> i & 1:
                    prob *= p[i]
                    subset.append(i)
                else:
                    prob *= 1.0 - p[i]
            if prob > 0.0:
                outcomes.append((tuple(subset), prob))
        outcomes = tuple(outcomes)
    else:
        if n > INDEPENDENT_CAP:
            raise ValueError(f"enumeration capped at n <= {INDEPENDENT_CAP}")
        # marginalize analytically over the two-stage construction:
        # uniform a-subset of the k fractional indices, independent thinning
        # with k*p_i/a, union with the always-included indices.
        frac = [i for i in range(n) if p[i] < 1.0]
        always = tuple(i for i in range(n) if p[i] >= 1.0)
        k, a = scheme.k, scheme.a
        stage1_prob = 1.0 / comb(k, a)
        thin = {i: k * p[i] / a for i in frac}
        acc: dict[tuple, float] = {}
        for chosen in combinations(frac, a):
            for mask in range(1 << a):
                prob = stage1_prob
                kept = []
                for j, i in enumerate(chosen):
                    if mask >> j & 1:
                        prob *= thin[i]
                        kept.append(i)
                    else:
                        prob *= 1.0 - thin[i]
                if prob > 0.0:
                    subset = tuple(sorted(kept + list(always)))
                    acc[subset] = acc.get(subset, 0.0) + prob
        outcomes = tuple(sorted(acc.items()))
    total = sum(prob for _, prob in outcomes)
    if abs(total - 1.0) > 1e-12:
        raise AssertionError(f"enumerated probabilities sum to {total!r}")
    return EnumeratedLaw(n=n, p=p, outcomes=outcomes)


def pair_matrix(law: EnumeratedLaw) -> np.ndarray:
    """P_ij = Prob({i,j} in S) recomputed from the enumerated support."""
    P = np.zeros((law.n, law.n))
    for subset, prob in law.outcomes:
        idx = np.fromiter(subset, dtype=np.int64, count=len(subset))
        P[np.ix_(idx, idx)] += prob
    return P


def exact_estimator_moments(law: EnumeratedLaw, zeta) -> tuple[np.ndarray, float]:
    """Mean and exact variance of X = sum_{i in S} zeta_i / (n p_i)."""
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape[0] != law.n:
        raise ValueError("need one zeta vector per component")
    weighted = zeta / (law.n * law.p[:, None])
    values = np.array(
        [weighted[list(subset)].sum(axis=0) for subset, _ in law.outcomes]
    )
    probs = np.array([prob for _, prob in law.outcomes])
    mean = probs @ values
    var = float(probs @ np.sum((values - mean) ** 2, axis=1))
    return mean, var


def check_key_inequality(
    law: EnumeratedLaw, scheme: SamplingScheme, zeta, tol: float = 1e-12
) -> tuple[float, float, bool]:
    """Exact estimator variance vs. the separable bound
    (1/n^2) sum v_i ||zeta_i||^2 / p_i."""
    zeta = np.asarray(zeta, dtype=float)
    _, lhs = exact_estimator_moments(law, zeta)
    rhs = float(
        np.sum(scheme.v * np.sum(zeta**2, axis=1) / scheme.p) / scheme.n**2
    )
    return lhs, rhs, lhs <= rhs + tol


def random_feasible_probabilities(
    n: int, b: float, trials: int, rng: np.random.Generator
) -> np.ndarray:
    """(trials, n) matrix of vectors with sum = b and 0 < p_i <= 1.

    Dirichlet-style draws rescaled to mass b; entries above 1 are capped and
    the excess redistributed proportionally over the uncapped entries.
    """
    if not 0.0 < b <= n:
        raise ValueError(f"minibatch size must lie in (0, {n}]")
    w = rng.gamma(1.0, size=(trials, n))
    p = b * w / w.sum(axis=1, keepdims=True)
    for _ in range(2 * n):
        over = p > 1.0
        if not over.any():
            break
        excess = np.where(over, p - 1.0, 0.0).sum(axis=1)
        p = np.minimum(p, 1.0)
        free = p < 1.0  # entries pinned at 1 never rejoin the pool
        free_mass = np.where(free, p, 0.0).sum(axis=1)
        scale = np.where(free_mass > 0.0, 1.0 + excess / np.maximum(free_mass, 1e-300), 1.0)
        p = np.where(free, p * scale[:, None], p)
    return np.clip(p, 1e-15, 1.0)


def search_alpha_optimum(L, b, trials: int, seed: int) -> tuple[np.ndarray, float]:
    """Best alpha found over random feasible independent samplings.

    Used to certify that the closed-form optimal probabilities never lose.
    """
    L = np.asarray(L, dtype=float)
    n = L.size
    if n > SEARCH_CAP:
        raise ValueError(f"search capped at n <= {SEARCH_CAP}")
    rng = np.random.default_rng(seed)
    P = random_feasible_probabilities(n, float(b), trials, rng)
    Lbar = L.mean()
    alphas = (b / n**2) * np.sum((1.0 - P) / P * L**2, axis=1) / Lbar**2
    best = int(np.argmin(alphas))
    return P[best], float(alphas[best])


def exact_alpha(L, p, b: float | None = None) -> float:
    """alpha of an independent sampling with marginals p (v_i = 1 - p_i)."""
    scheme = independent(p)
    if b is not None and abs(scheme.b - b) > 1e-9:
        raise ValueError("p does not sum to the requested b")
    return compute_alpha(L, scheme).alpha

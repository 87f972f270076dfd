import numpy as np
import pytest

from vropt.sampling import (
    SamplingKind,
    approximate_independent,
    compute_alpha,
    compute_v,
    draw,
    floor_smoothness,
    independent,
    optimal_probabilities,
    probability_matrix,
    scheme_from_text,
    scheme_to_text,
    uniform_minibatch,
    verify_eso,
)


def projected_min_sum_sq_over_p(L, b, iters=40000, lr=None):
    """Independent oracle for the importance probabilities: projected gradient
    on sum L_i^2/p_i over {sum p = b, 0 <= p <= 1}."""
    L = np.asarray(L, float)
    n = L.size
    p = np.full(n, b / n)
    lr = lr or 1e-3 / L.max() ** 2

    def project(q):
        # bisection on the shift so that sum clip(q - lam, eps, 1) = b
        lo, hi = q.min() - 1.0, q.max()
        for _ in range(100):
            lam = 0.5 * (lo + hi)
            s = np.clip(q - lam, 1e-12, 1.0).sum()
            if s > b:
                lo = lam
            else:
                hi = lam
        return np.clip(q - 0.5 * (lo + hi), 1e-12, 1.0)

    for _ in range(iters):
        grad = -(L**2) / p**2
        p = project(p - lr * grad)
    return p


class TestComputeV:
    def test_uniform_formula(self):
        s = uniform_minibatch(10, 4)
        assert np.allclose(s.v, 6.0 / 9.0, rtol=0, atol=1e-15)

    def test_independent_full_batch(self):
        s = independent([1.0, 1.0, 1.0])
        assert np.array_equal(s.v, np.zeros(3))

    def test_approx_with_a_equal_k_matches_independent(self):
        p = np.array([0.2, 0.4, 0.6, 0.8])
        v = compute_v(SamplingKind.APPROX_INDEPENDENT, p, a=4)
        assert np.allclose(v, 1.0 - p, rtol=0, atol=1e-15)

    def test_approx_degenerate_k_raises(self):
        with pytest.raises(ValueError):
            compute_v(SamplingKind.APPROX_INDEPENDENT, [1.0, 1.0, 0.5])

    def test_improper_raises(self):
        with pytest.raises(ValueError):
            compute_v(SamplingKind.INDEPENDENT, [0.5, 0.0])

    def test_v_at_least_one_minus_p(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            p = rng.uniform(0.05, 0.6, size=n)
            for scheme in (independent(p), approximate_independent(p)):
                assert np.all(scheme.v >= 1.0 - scheme.p - 1e-12)


class TestConstructors:
    def test_uniform_rejects_non_integer_b(self):
        with pytest.raises(ValueError):
            uniform_minibatch(5, 2.5)

    def test_uniform_bounds(self):
        with pytest.raises(ValueError):
            uniform_minibatch(5, 0)
        with pytest.raises(ValueError):
            uniform_minibatch(5, 6)

    def test_b_equals_sum_p(self):
        rng = np.random.default_rng(1)
        p = rng.uniform(0.1, 1.0, size=7)
        s = independent(p)
        assert abs(s.b - p.sum()) <= 1e-12 * abs(s.b)

    def test_approx_fallback_on_degenerate(self):
        # k = 1 fractional entry
        s = approximate_independent([0.5, 1.0, 1.0])
        assert s.kind is SamplingKind.INDEPENDENT
        # a = k (law coincides with the independent one)
        s = approximate_independent([0.2, 0.4, 0.6, 0.8])
        assert s.kind is SamplingKind.INDEPENDENT

    def test_approx_genuine(self):
        s = approximate_independent([0.5, 0.5, 0.5, 0.5])
        assert s.kind is SamplingKind.APPROX_INDEPENDENT
        assert s.a == 2 and s.k == 4
        # thinning probabilities stay within [0, 1]
        assert np.all(s.k * s.p / s.a <= 1.0 + 1e-12)
        assert s.a >= s.b + s.k - s.n

    def test_scheme_immutable(self):
        s = independent([0.5, 0.5])
        with pytest.raises(ValueError):
            s.p[0] = 0.9


class TestOptimalProbabilities:
    def test_spread_example(self):
        p = optimal_probabilities([1, 2, 3, 4], 2)
        assert np.allclose(p, [0.2, 0.4, 0.6, 0.8], rtol=0, atol=1e-15)

    def test_equal_l_is_uniform(self):
        p = optimal_probabilities([5, 5, 5, 5], 3)
        assert np.allclose(p, 0.75, rtol=0, atol=1e-15)

    def test_k_scan_truncates(self):
        p = optimal_probabilities([1, 1, 1, 10], 3)
        assert np.allclose(p, [2 / 3, 2 / 3, 2 / 3, 1.0], rtol=0, atol=1e-15)

    def test_unsorted_input_unpermuted(self):
        p = optimal_probabilities([10, 1, 1, 1], 3)
        assert np.allclose(p, [1.0, 2 / 3, 2 / 3, 2 / 3], rtol=0, atol=1e-15)

    def test_sum_and_range(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(2, 12))
            L = rng.uniform(0.01, 50.0, size=n)
            b = float(rng.uniform(0.5, n))
            p = optimal_probabilities(L, b)
            assert abs(p.sum() - b) <= 1e-12 * max(1.0, b)
            assert np.all(p > 0) and np.all(p <= 1.0)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            optimal_probabilities([1, 2], 0.0)
        with pytest.raises(ValueError):
            optimal_probabilities([1, 2], 2.5)
        with pytest.raises(ValueError):
            optimal_probabilities([1, -2], 1.0)

    def test_tiny_l_floored(self):
        p = optimal_probabilities([1e-300, 1.0], 1.0)
        assert np.all(p > 0)

    def test_matches_projected_gradient_oracle(self):
        L = np.array([1.0, 2.0, 3.0, 4.0])
        b = 2.0
        p_star = optimal_probabilities(L, b)
        p_pg = projected_min_sum_sq_over_p(L, b)
        obj = lambda p: float(np.sum(L**2 / p))
        assert obj(p_star) <= obj(p_pg) + 1e-9
        assert np.allclose(p_star, p_pg, atol=1e-3)


class TestComputeAlpha:
    def test_equal_l_uniform(self):
        n, b = 10, 4
        cc = compute_alpha(np.ones(n), uniform_minibatch(n, b))
        assert abs(cc.alpha - (n - b) / (n - 1)) <= 1e-12

    def test_equal_l_optimal_independent(self):
        n, b = 10, 4
        p = optimal_probabilities(np.ones(n), float(b))
        cc = compute_alpha(np.ones(n), independent(p))
        assert abs(cc.alpha - (n - b) / n) <= 1e-12

    def test_full_batch_zero(self):
        cc = compute_alpha(np.ones(3), independent([1.0, 1.0, 1.0]))
        assert cc.alpha == 0.0

    def test_alpha_consistency(self):
        cc = compute_alpha([1.0, 2.0], independent([0.5, 0.5]))
        assert abs(cc.alpha - cc.K / cc.Lbar**2) <= 1e-15

    def test_closed_forms_when_k_is_n(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(3, 10))
            L = rng.uniform(0.5, 2.0, size=n)
            b = min(float(rng.uniform(1.0, 3.0)), L.sum() / L.max() * 0.99)
            a_star = compute_alpha(L, independent(optimal_probabilities(L, b))).alpha
            expect = 1.0 - b * np.sum(L**2) / L.sum() ** 2
            assert abs(a_star - expect) <= 1e-12
            bi = int(rng.integers(1, n))
            a_uni = compute_alpha(L, uniform_minibatch(n, bi)).alpha
            expect_u = n * (n - bi) / (n - 1) * np.sum(L**2) / L.sum() ** 2
            assert abs(a_uni - expect_u) <= 1e-12 * max(1.0, expect_u)

    def test_approx_alpha_closed_form(self):
        # for the optimal p with a genuine two-stage scheme the variance
        # constant has the explicit form with t = (a-1)k/(a(k-1))
        L = np.array([1.0, 1.2, 1.5, 2.0, 2.5])
        b = 2.0
        p = optimal_probabilities(L, b)
        s = approximate_independent(p)
        assert s.kind is SamplingKind.APPROX_INDEPENDENT
        n, k, a = s.n, s.k, s.a
        t = (a - 1) * k / (a * (k - 1))
        expect = (
            b * L.sum() ** 2 / ((b + k - n) * n**2) - b * t / n**2 * np.sum(L**2)
        ) / L.mean() ** 2
        got = compute_alpha(L, s).alpha
        assert abs(got - expect) <= 1e-12 * max(1.0, expect)

    def test_uniform_alpha_improvement_bounds(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            n = int(rng.integers(2, 30))
            b = int(rng.integers(1, n + 1))
            L = rng.uniform(0.01, 10.0, size=n)
            alpha = compute_alpha(L, uniform_minibatch(n, b)).alpha
            Lbar, Lmax = L.mean(), L.max()
            assert alpha * Lbar <= Lmax * (1 + 1e-12)
            if n > 1:
                assert alpha * Lbar**2 <= (n - b) / (n - 1) * Lmax**2 * (1 + 1e-12)

    def test_alpha_strictly_decreasing_in_b(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(5, 30))
            L = rng.uniform(0.5, 3.0, size=n)
            b_max = int(L.sum() / L.max())
            alphas = [
                compute_alpha(L, independent(optimal_probabilities(L, float(b)))).alpha
                for b in range(1, max(2, b_max + 1))
            ]
            assert all(a2 < a1 for a1, a2 in zip(alphas, alphas[1:]))


class TestProbabilityMatrix:
    def test_bnice(self):
        P = probability_matrix(uniform_minibatch(3, 2))
        assert np.allclose(np.diag(P), 2 / 3, rtol=0, atol=1e-15)
        off = P[~np.eye(3, dtype=bool)]
        assert np.allclose(off, 1 / 3, rtol=0, atol=1e-15)

    def test_independent(self):
        P = probability_matrix(independent([0.5, 0.5]))
        assert np.allclose(P, [[0.5, 0.25], [0.25, 0.5]], rtol=0, atol=1e-15)

    def test_trace_is_b(self):
        rng = np.random.default_rng(6)
        schemes = [
            uniform_minibatch(7, 3),
            independent(rng.uniform(0.1, 1.0, size=7)),
            approximate_independent(rng.uniform(0.1, 0.5, size=7)),
        ]
        for s in schemes:
            assert abs(np.trace(probability_matrix(s)) - s.b) <= 1e-12 * max(1.0, s.b)

    def test_cap(self):
        with pytest.raises(ValueError):
            probability_matrix(uniform_minibatch(65, 2))

    def test_p_minus_ppt_psd(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(2, 8))
            for s in (
                uniform_minibatch(n, int(rng.integers(1, n + 1))),
                independent(rng.uniform(0.05, 1.0, size=n)),
                approximate_independent(rng.uniform(0.05, 0.55, size=n)),
            ):
                P = probability_matrix(s)
                M = P - np.outer(s.p, s.p)
                assert np.linalg.eigvalsh(M)[0] >= -1e-12


class TestVerifyEso:
    @pytest.mark.parametrize("n", range(2, 9))
    def test_all_kinds_certified(self, n):
        rng = np.random.default_rng(100 + n)
        for _ in range(10):
            schemes = [
                uniform_minibatch(n, int(rng.integers(1, n + 1))),
                independent(rng.uniform(0.05, 1.0, size=n)),
                approximate_independent(rng.uniform(0.05, 0.55, size=n)),
            ]
            for s in schemes:
                assert verify_eso(probability_matrix(s), s.p, s.v, tol=1e-10)

    def test_violating_v_fails(self):
        s = independent([0.5, 0.5])
        assert not verify_eso(probability_matrix(s), s.p, [0.4, 0.4])

    def test_bnice_certificate_is_tight(self):
        s = uniform_minibatch(4, 2)
        P = probability_matrix(s)
        assert verify_eso(P, s.p, s.v)
        assert not verify_eso(P, s.p, 0.99 * s.v)

    def test_fallback_certificates(self):
        # v_i = n (1 - p_i) certifies any proper sampling
        rng = np.random.default_rng(8)
        for _ in range(20):
            n = int(rng.integers(2, 7))
            for s in (
                uniform_minibatch(n, int(rng.integers(1, n + 1))),
                independent(rng.uniform(0.05, 1.0, size=n)),
                approximate_independent(rng.uniform(0.05, 0.55, size=n)),
            ):
                assert verify_eso(probability_matrix(s), s.p, n * (1.0 - s.p))
        # |S| <= d almost surely admits v_i = d; for the fixed-size law d = b
        s = uniform_minibatch(6, 3)
        assert verify_eso(probability_matrix(s), s.p, np.full(6, 3.0))

    def test_non_symmetric_raises(self):
        with pytest.raises(ValueError):
            verify_eso(np.array([[0.5, 0.1], [0.3, 0.5]]), [0.5, 0.5], [1, 1])


class TestDraw:
    def test_independent_full_batch_constant(self):
        s = independent([1.0, 1.0, 1.0])
        rng = np.random.default_rng(0)
        for _ in range(10):
            assert np.array_equal(draw(s, rng), [0, 1, 2])

    def test_uniform_fixed_cardinality(self):
        s = uniform_minibatch(7, 3)
        rng = np.random.default_rng(1)
        for _ in range(200):
            out = draw(s, rng)
            assert out.size == 3
            assert np.all(np.diff(out) > 0)

    @pytest.mark.parametrize(
        "factory",
        [
            lambda: uniform_minibatch(3, 2),
            lambda: independent([0.3, 0.6, 0.9]),
            lambda: approximate_independent([0.5, 0.5, 0.4]),
        ],
    )
    def test_marginals(self, factory):
        s = factory()
        rng = np.random.default_rng(2)
        trials = 100_000
        counts = np.zeros(s.n)
        for _ in range(trials):
            counts[draw(s, rng)] += 1
        freq = counts / trials
        sigma = np.sqrt(s.p * (1 - s.p) / trials)
        assert np.all(np.abs(freq - s.p) <= 3 * sigma + 1e-9)

    def test_outcome_frequencies_match_enumerated_law(self):
        # full-distribution check: empirical outcome frequencies against the
        # exact enumeration, for one scheme of each kind
        from vropt.bruteforce import enumerate_law

        rng = np.random.default_rng(123)
        trials = 40_000
        for s in (
            uniform_minibatch(4, 2),
            independent([0.3, 0.6, 0.8]),
            approximate_independent([0.5, 0.5, 0.4, 0.3]),
        ):
            law = enumerate_law(s)
            counts = {subset: 0 for subset, _ in law.outcomes}
            for _ in range(trials):
                key = tuple(int(i) for i in draw(s, rng))
                assert key in counts  # support must match exactly
                counts[key] += 1
            for subset, prob in law.outcomes:
                sigma = np.sqrt(prob * (1 - prob) / trials)
                assert abs(counts[subset] / trials - prob) <= 4 * sigma + 1e-9

    def test_pairwise_frequencies_match_matrix(self):
        # the optimal-p scheme for L=[1,2,3,4], b=2 (degenerates to the
        # independent law) and a genuine two-stage scheme
        for s, trials in [
            (approximate_independent(optimal_probabilities([1, 2, 3, 4], 2.0)), 200_000),
            (approximate_independent([0.5, 0.5, 0.5, 0.5]), 200_000),
        ]:
            rng = np.random.default_rng(3)
            P = probability_matrix(s)
            counts = np.zeros((s.n, s.n))
            for _ in range(trials):
                out = draw(s, rng)
                counts[np.ix_(out, out)] += 1.0
            freq = counts / trials
            sigma = np.sqrt(P * (1 - P) / trials)
            assert np.all(np.abs(freq - P) <= 3 * sigma + 1e-9)


class TestSerialization:
    @pytest.mark.parametrize(
        "factory",
        [
            lambda: uniform_minibatch(9, 4),
            lambda: independent(np.random.default_rng(9).uniform(0.1, 1.0, 6)),
            lambda: approximate_independent([0.5, 0.5, 0.5, 0.5]),
            # heavily skewed optimal probabilities exercise extreme decimals
            lambda: independent(
                optimal_probabilities(np.geomspace(1e-6, 1.0, 12), 3.0)
            ),
        ],
    )
    def test_round_trip_exact(self, factory):
        s = factory()
        s2 = scheme_from_text(scheme_to_text(s))
        assert s2.kind is s.kind
        assert s2.n == s.n
        assert np.array_equal(s2.p, s.p)
        assert np.array_equal(s2.v, s.v)
        assert s2.b == s.b
        assert s2.a == s.a

    def test_missing_field(self):
        with pytest.raises(ValueError):
            scheme_from_text("kind = independent\nn = 2\n")

    def test_b_mismatch(self):
        with pytest.raises(ValueError):
            scheme_from_text("kind = independent\nn = 2\nb = 1.5\np = 0.5 0.5\n")


def test_floor_smoothness():
    L = floor_smoothness([0.0, 1.0])
    assert L[0] == 1e-12 and L[1] == 1.0

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from lmmix.errors import ArgumentError, DomainError
from lmmix.expfam import (
    BinomialFamily,
    NormalFamily,
    binomial_remainder_envelope,
    density,
    normal_fifth_derivative,
    normal_fifth_derivative_bound,
    q_polynomial,
    q_values,
    upper_dominates,
)


def golden_max(f, a, b, tol=1e-13):
    """Golden-section search for the maximum of a unimodal f on [a, b]."""
    r = (math.sqrt(5) - 1) / 2
    c, d = b - r * (b - a), a + r * (b - a)
    while b - a > tol:
        if f(c) > f(d):
            b, d = d, c
            c = b - r * (b - a)
        else:
            a, c = c, d
            d = a + r * (b - a)
    return f(0.5 * (a + b))


def centred_diff(f, x, j, h):
    """Centred differences at step h with one Richardson step, so the O(h^2) term cancels."""
    x = mpmath.mpf(x)
    d1 = mpmath.diff(f, x, j, h=h)
    d2 = mpmath.diff(f, x, j, h=h / 2)
    return (4 * d2 - d1) / 3


def fifth_bound_oracle(sigma):
    """Dense grid over the standardized variable, then golden-section polish."""
    z = np.linspace(-10, 10, 2_000_001)
    vals = np.abs(normal_fifth_derivative(z * sigma, 0.0, sigma))
    i = int(np.argmax(vals))
    f = lambda t: abs(float(normal_fifth_derivative(t * sigma, 0.0, sigma)))
    return max(vals[i], golden_max(f, z[i - 1], z[i + 1]))


class TestDensity:
    def test_standard_normal_mode(self, std_normal):
        assert density(std_normal, 0.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)
        assert density(std_normal, 0.0, 0.0) == pytest.approx(0.398942, abs=1e-6)

    @pytest.mark.parametrize("mu", [0.0, 10.0, -1.0])
    def test_binomial_boundary_mean_rejected(self, binom10, mu):
        with pytest.raises(DomainError):
            density(binom10, 0, mu)

    def test_binomial_mass_sums_to_one(self, binom10):
        assert density(binom10, np.arange(11), 5.0).sum() == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("x", [-1, 11, 2.5])
    def test_binomial_count_out_of_range(self, binom10, x):
        with pytest.raises(DomainError):
            density(binom10, x, 5.0)

    def test_normal_integrates_to_one(self):
        fam = NormalFamily(0.7)
        val, _ = integrate.quad(lambda x: density(fam, x, 1.3), -20, 20, limit=200)
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_family_validation(self):
        with pytest.raises(ArgumentError):
            NormalFamily(0.0)
        with pytest.raises(ArgumentError):
            BinomialFamily(5)


class TestQPolynomial:
    def test_normal_second_order(self, std_normal):
        q = q_polynomial(std_normal, 0.0, 2)
        np.testing.assert_allclose(q.coeffs, [-1, 0, 1], atol=0)

    def test_normal_fourth_order(self, std_normal):
        q = q_polynomial(std_normal, 0.0, 4)
        np.testing.assert_allclose(q.coeffs, [3, 0, -6, 0, 1], atol=0)

    def test_normal_first_and_third(self, std_normal):
        np.testing.assert_allclose(q_polynomial(std_normal, 0.0, 1).coeffs, [0, 1])
        np.testing.assert_allclose(q_polynomial(std_normal, 0.0, 3).coeffs, [0, -3, 0, 1])

    def test_normal_anchor_is_centred(self, std_normal):
        q = q_polynomial(std_normal, 100.0, 4)
        assert q(100.0 + math.sqrt(3)) == pytest.approx(-6.0, abs=1e-12)

    def test_binomial_first_order_has_mean_zero(self, binom10):
        x = np.arange(11)
        q1 = q_polynomial(binom10, 5.0, 1)
        assert abs(np.sum(q1(x) * density(binom10, x, 5.0))) < 1e-10

    @pytest.mark.parametrize("j", [0, 6, 2.5])
    def test_order_out_of_range(self, std_normal, j):
        with pytest.raises(ArgumentError):
            q_polynomial(std_normal, 0.0, j)

    @pytest.mark.parametrize("j", range(1, 6))
    def test_degree_and_leading_coefficient(self, j):
        for fam, mu in [(NormalFamily(0.8), 1.0), (BinomialFamily(15), 6.0)]:
            q = q_polynomial(fam, mu, j)
            assert q.degree == j and len(q.coeffs) == j + 1
            assert q.coeffs[-1] != 0

    @pytest.mark.parametrize("sigma,mu", [(1.0, 0.0), (0.5, 2.0), (2.5, -3.0)])
    def test_zero_mean_identity_normal(self, sigma, mu):
        fam = NormalFamily(sigma)
        for j in range(1, 6):
            q = q_polynomial(fam, mu, j)
            val, _ = integrate.quad(lambda x: q(x) * density(fam, x, mu),
                                    mu - 12 * sigma, mu + 12 * sigma, limit=200, epsabs=1e-11)
            assert abs(val) < 1e-8, j

    @pytest.mark.parametrize("n,mu", [(6, 0.3), (10, 5.0), (30, 21.7), (64, 1.5), (90, 45.2)])
    def test_zero_mean_identity_binomial(self, n, mu):
        fam = BinomialFamily(n)
        x = np.arange(n + 1)
        vals = q_values(fam, mu, x, 5) * density(fam, x, mu)[:, None]
        assert np.all(np.abs(vals.sum(axis=0)) < 1e-8)

    def test_finite_difference_normal(self, rng):
        mpmath.mp.dps = 40
        sigma, mu = 0.8, 0.4
        fam = NormalFamily(sigma)
        h = 1e-3 * sigma

        def f(m, x):
            return mpmath.exp(-((x - m) ** 2) / (2 * sigma**2)) / (mpmath.sqrt(2 * mpmath.pi) * sigma)

        xs = rng.uniform(mu - 3 * sigma, mu + 3 * sigma, 20)
        for j in range(1, 6):
            q = q_polynomial(fam, mu, j)
            for x in xs:
                fd = centred_diff(lambda m: f(m, mpmath.mpf(x)), mu, j, h)
                expected = float(fd / f(mpmath.mpf(mu), mpmath.mpf(x)))
                assert abs(q(x) - expected) < 1e-5 * max(abs(expected), sigma**-j)

    def test_finite_difference_binomial(self):
        mpmath.mp.dps = 40
        n, mu = 20, 7.3
        fam = BinomialFamily(n)
        h = 1e-4 * n

        def p(m, x):
            return mpmath.binomial(n, x) * (m / n) ** x * (1 - m / n) ** (n - x)

        for j in range(1, 6):
            q = q_polynomial(fam, mu, j)
            for x in range(0, n + 1):
                fd = centred_diff(lambda m: p(m, x), mu, j, h)
                expected = float(fd / p(mpmath.mpf(mu), x))
                assert abs(q(x) - expected) < 1e-5 * max(abs(expected), 1.0)
                assert abs(q_values(fam, mu, [x], 5)[0, j - 1] - expected) < 1e-5 * max(abs(expected), 1.0)

    def test_large_n_float_path_matches_exact(self):
        from lmmix.expfam import _binomial_q_table_exact, _binomial_q_table_float
        np.testing.assert_allclose(_binomial_q_table_float(60, 23.4, 5),
                                   _binomial_q_table_exact(60, 23.4, 5), rtol=1e-9, atol=1e-12)


class TestFifthDerivative:
    def test_matches_finite_differences(self):
        mpmath.mp.dps = 40
        for sigma in (0.5, 1.0, 2.0):
            for x in (-1.3, 0.2, 0.9, 2.5):
                f = lambda m: mpmath.exp(-((x - m) ** 2) / (2 * sigma**2)) / (mpmath.sqrt(2 * mpmath.pi) * sigma)
                fd = float(mpmath.diff(f, mpmath.mpf(0), 5))
                assert normal_fifth_derivative(x, 0.0, sigma) == pytest.approx(fd, rel=1e-9, abs=1e-12)

    def test_bound_at_unit_sigma(self):
        M = normal_fifth_derivative_bound(1.0)
        assert M == pytest.approx(fifth_bound_oracle(1.0), rel=1e-10)
        assert M == pytest.approx(2.3071059, abs=1e-6)

    @pytest.mark.parametrize("sigma", [0.1, 0.5, 2.0, 30.0])
    def test_bound_against_oracle(self, sigma):
        assert normal_fifth_derivative_bound(sigma) == pytest.approx(fifth_bound_oracle(sigma), rel=1e-9)

    def test_scaling_law(self):
        M1 = normal_fifth_derivative_bound(1.0)
        for sigma in (0.25, 3.0):
            assert normal_fifth_derivative_bound(sigma) == pytest.approx(M1 / sigma**6, rel=1e-9)

    def test_larger_sigma_flattens(self):
        assert normal_fifth_derivative_bound(2.0) < normal_fifth_derivative_bound(1.0)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
    def test_bound_dominates_random_probe(self, rng, sigma):
        M = normal_fifth_derivative_bound(sigma)
        x = rng.uniform(-6 * sigma, 6 * sigma, 10_000)
        m = rng.uniform(-2 * sigma, 2 * sigma, 10_000)
        assert np.all(np.abs(normal_fifth_derivative(x, m, sigma)) <= M)

    def test_deterministic(self):
        assert normal_fifth_derivative_bound(0.7) == normal_fifth_derivative_bound(0.7)


def enumerate_q5(n, m):
    return q_values(BinomialFamily(n), m, np.arange(n + 1), 5)[:, 4]


class TestBinomialEnvelope:
    def test_brackets_n10_m5(self):
        env = binomial_remainder_envelope(10, 5.0)
        q5 = enumerate_q5(10, 5.0)
        assert np.all(env.lower < q5) and np.all(q5 < env.upper)

    def test_sign_rule_n10_m3(self):
        env = binomial_remainder_envelope(10, 3.0)
        assert env.upper > abs(env.lower)
        assert upper_dominates(10, 3.0)

    def test_x_star(self):
        assert binomial_remainder_envelope(10, 5.5).x_star == 6

    def test_x_star_is_mode(self, rng):
        for _ in range(50):
            n = int(rng.integers(6, 60))
            m = rng.uniform(0.01, n - 0.01)
            env = binomial_remainder_envelope(n, m)
            p = density(BinomialFamily(n), np.arange(n + 1), m)
            assert p[env.x_star] >= p.max() * (1 - 1e-12)

    @pytest.mark.parametrize("m", [0.0, 10.0, -2.0])
    def test_closed_boundary_rejected(self, m):
        with pytest.raises(DomainError):
            binomial_remainder_envelope(10, m)

    def test_equal_at_half(self):
        env = binomial_remainder_envelope(12, 6.0)
        assert env.upper == pytest.approx(-env.lower, rel=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(n=st.integers(6, 50), frac=st.floats(0.001, 0.999))
    def test_soundness_property(self, n, frac):
        m = frac * n
        env = binomial_remainder_envelope(n, m)
        q5 = enumerate_q5(n, m)
        assert np.all(env.lower < q5) and np.all(q5 < env.upper)
        if not math.isclose(m, n / 2, rel_tol=1e-9):
            assert (env.upper > abs(env.lower)) == (m <= n / 2)

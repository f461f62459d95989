import math

import numpy as np
import pytest

from lmmix.errors import ArgumentError, DomainError, PreconditionError, ResourceError
from lmmix.expfam import BinomialFamily, NormalFamily, normal_fifth_derivative_bound
from lmmix.gridsel import (
    GridSpec,
    ToleranceBudget,
    binomial_fifth_derivative_bound,
    build_grid,
    epsilon_for_delta,
    induced_lambda,
    taylor_budget,
    local_approx_report,
    local_epsilon,
    verify_local_approx,
)

M1 = normal_fifth_derivative_bound(1.0)
XGRID = np.linspace(-10, 10, 20_001)


def check_cover(spec, a, b):
    lo = [iv[0] for iv in spec.intervals]
    hi = [iv[1] for iv in spec.intervals]
    assert lo[0] == pytest.approx(a) and hi[-1] == pytest.approx(b)
    for h, l in zip(hi, lo[1:]):
        assert l == pytest.approx(h, abs=1e-12)
    for p, (l, h), (e1, e2) in zip(spec.points, spec.intervals, spec.epsilons):
        assert l - 1e-12 <= p <= h + 1e-12
        assert p - e1 == pytest.approx(l) and p + e2 == pytest.approx(h)
    assert all(x < y for x, y in zip(spec.points, spec.points[1:]))


class TestEpsilon:
    def test_normal_closed_form(self):
        assert epsilon_for_delta(NormalFamily(1.0), (0, 1), 1e-3) == pytest.approx((0.06 / M1) ** (1 / 6), rel=1e-12)

    def test_sixth_root_scaling(self):
        fam = NormalFamily(0.7)
        e1 = epsilon_for_delta(fam, (0, 1), 1e-5)
        e2 = epsilon_for_delta(fam, (0, 1), 64e-5)
        assert e2 == pytest.approx(2 * e1, rel=1e-12)

    def test_budget_holds_with_equality(self):
        eps = epsilon_for_delta(NormalFamily(1.0), (0, 1), 1e-4)
        assert taylor_budget(eps, eps, M1) == pytest.approx(1e-4, rel=1e-12)
        assert ToleranceBudget(1e-4, eps, eps).holds(M1 * (1 - 1e-9))

    @pytest.mark.parametrize("delta", [0.0, -1e-3, float("nan")])
    def test_bad_delta(self, delta):
        with pytest.raises(ArgumentError):
            epsilon_for_delta(NormalFamily(1.0), (0, 1), delta)

    def test_binomial_region_must_be_interior(self):
        with pytest.raises(DomainError):
            epsilon_for_delta(BinomialFamily(10), (0, 5), 1e-3)

    def test_binomial_local_caps_at_support(self):
        eps, M = local_epsilon(BinomialFamily(10), 0.05, 1e-2)
        assert eps < 0.05 and M > 0


class TestBuildGrid:
    def test_unit_spacing_example(self):
        delta = 0.5**6 * M1 / 60
        spec = build_grid(NormalFamily(1.0), (0, 4), delta)
        np.testing.assert_allclose(spec.points, [0.5, 1.5, 2.5, 3.5], atol=1e-12)
        check_cover(spec, 0, 4)

    def test_short_last_piece_uses_midpoint(self):
        delta = 0.5**6 * M1 / 60
        spec = build_grid(NormalFamily(1.0), (0, 3.4), delta)
        np.testing.assert_allclose(spec.points, [0.5, 1.5, 2.5, 3.2], atol=1e-12)
        check_cover(spec, 0, 3.4)

    def test_zero_width(self):
        spec = build_grid(NormalFamily(1.0), (2.0, 2.0), 1e-3)
        assert list(spec.points) == [2.0]

    def test_reversed_range(self):
        with pytest.raises(ArgumentError):
            build_grid(NormalFamily(1.0), (1.0, 0.0), 1e-3)

    def test_resource_limit(self):
        with pytest.raises(ResourceError):
            build_grid(NormalFamily(1.0), (0, 1e4), 1e-30)

    @pytest.mark.parametrize("fam,rng_", [(NormalFamily(1.0), (-3, 3)), (NormalFamily(0.4), (1, 2.2)),
                                          (BinomialFamily(20), (8, 12)), (BinomialFamily(40), (12, 24))])
    def test_cover_and_monotone_in_delta(self, fam, rng_):
        sizes = []
        for delta in (1e-2, 1e-3, 1e-4):
            spec = build_grid(fam, rng_, delta)
            check_cover(spec, *rng_)
            for (e1, e2), M in zip(spec.epsilons, spec.bounds):
                assert taylor_budget(e1, e2, M) <= delta * (1 + 1e-9)
            sizes.append(len(spec))
        assert sizes == sorted(sizes)

    def test_binomial_example(self):
        spec = build_grid(BinomialFamily(20), (8, 12), 1e-4)
        check_cover(spec, 8, 12)
        assert 5 <= len(spec) <= 40
        x = np.arange(21)
        rng = np.random.default_rng(7)
        for mu0, (e1, e2) in zip(spec.points, spec.epsilons):
            atoms = rng.uniform(mu0 - e1, mu0 + e2, 6)
            w = rng.dirichlet(np.ones(6))
            assert verify_local_approx(spec.family, mu0, atoms, w, x, e1, e2) <= 1e-4

    def test_explicit_points(self):
        spec = GridSpec.from_points(NormalFamily(1.0), [3.6, 4.2, 4.8, 5.4, 6.0, 6.6, 7.0])
        assert len(spec) == 7
        assert spec.intervals[0][1] == pytest.approx(3.9) and spec.intervals[-1][0] == pytest.approx(6.8)


class TestLocalApprox:
    def test_point_mass_at_anchor(self, std_normal):
        assert verify_local_approx(std_normal, 0.0, [0.0], [1.0], XGRID) < 1e-15

    def test_symmetric_uniform(self, std_normal):
        atoms = np.linspace(-0.3, 0.3, 7)
        err = verify_local_approx(std_normal, 0.0, atoms, np.full(7, 1 / 7), XGRID)
        assert err <= taylor_budget(0.3, 0.3, M1)

    def test_binomial_two_atoms(self, binom10):
        err = verify_local_approx(binom10, 5.0, [4.9, 5.1], [0.5, 0.5], np.arange(11))
        assert err <= taylor_budget(0.1, 0.1, binomial_fifth_derivative_bound(10, (4.9, 5.1)))

    def test_induced_lambda(self):
        lam = induced_lambda(1.0, [0.5, 2.0], [0.5, 0.5])
        d = np.array([-0.5, 1.0])
        np.testing.assert_allclose(lam, [np.mean(d**j) / math.factorial(j) for j in range(1, 5)])

    def test_report_status(self, std_normal):
        r = local_approx_report(std_normal, 0.0, [-0.1, 0.1], [0.5, 0.5], XGRID)
        assert r.feasible and r.eps1 == pytest.approx(0.1) and r.eps2 == pytest.approx(0.1)

    def test_mass_outside_interval(self, std_normal):
        with pytest.raises(PreconditionError):
            verify_local_approx(std_normal, 0.0, [0.5], [1.0], XGRID, 0.1, 0.1)

    def test_bad_weights(self, std_normal):
        with pytest.raises(ArgumentError):
            verify_local_approx(std_normal, 0.0, [0.0, 0.1], [0.7, 0.7], XGRID)

    @pytest.mark.parametrize("fam,mu0", [(NormalFamily(1.0), 0.0), (NormalFamily(2.0), 1.0), (BinomialFamily(20), 9.0)])
    def test_fifth_moment_bound(self, fam, mu0):
        """The Taylor remainder is controlled by the fifth absolute moment of the mixing law."""
        rng = np.random.default_rng(11)
        x = np.arange(fam.n + 1) if fam.discrete else mu0 + fam.sigma * XGRID
        for delta in np.exp(rng.uniform(np.log(1e-6), np.log(1e-2), 30)):
            eps, M = local_epsilon(fam, mu0, delta)
            k = int(rng.integers(1, 6))
            atoms = rng.uniform(mu0 - eps, mu0 + eps, k)
            w = rng.dirichlet(np.ones(k))
            err = verify_local_approx(fam, mu0, atoms, w, x, eps, eps)
            assert err <= np.sum(w * np.abs(atoms - mu0) ** 5) * M / 120 * (1 + 1e-6) + 1e-15

    def test_point_mass_at_edge_exceeds_symmetric_budget(self, std_normal):
        # one-sided mass: the remainder scales like eps**5, the budget like eps**6
        delta = 1e-6
        eps, M = local_epsilon(std_normal, 0.0, delta)
        err = verify_local_approx(std_normal, 0.0, [eps], [1.0], XGRID, eps, eps)
        assert taylor_budget(eps, eps, M) == pytest.approx(delta, rel=1e-9)
        assert err > delta
        assert err <= eps**5 * M / 120

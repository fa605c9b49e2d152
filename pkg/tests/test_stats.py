import numpy as np
import pytest

from rtinvert.design import DesignData, contiguous_blocks, q_spans
from rtinvert.errors import ConfigError, DegenerateVariance, DenominatorZero, SingularAtZero, SingularSigma, SingularXX
from rtinvert.oracle import NaiveTester
from rtinvert.stats import (
    BiPolyFamily,
    ConicFamily,
    DhaultData,
    LinearFamily,
    RationalFamily,
    build_conic,
    build_dhault,
    build_diciccio,
    build_linear,
    build_rational,
)
from rtinvert.algebra import Poly

from conftest import make_data, make_group


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))


class TestLinear:
    def test_intercept_is_value_at_zero(self, linear_case):
        d, g = linear_case
        fam = build_linear(d, g)
        Q1 = q_spans(d, g, "Q1").Q
        q1x = Q1 @ d.X1[:, 0]
        direct = np.array([q1x @ d.Y[p] for p in g.perms]) / fam.sigma
        np.testing.assert_allclose(fam.evaluate(0.0), direct, rtol=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_oracle(self, seed):
        d = make_data(12, 3, seed=seed, beta2=())
        g = make_group(d)
        fam = build_linear(d, g)
        tester = NaiveTester(d, g, "linear_right")
        for beta in np.random.default_rng(seed).uniform(-5, 5, 50):
            assert rel_err(fam.evaluate(beta), tester.statistics(beta)) <= 1e-10

    def test_identity_slope_negative_without_nuisance(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(12)
        d = DesignData(rng.standard_normal(12), x, blocks=contiguous_blocks(12, 3))
        fam = build_linear(d, make_group(d))
        assert fam.slopes[0] == pytest.approx(-(x @ x) / fam.sigma[0])
        assert fam.slopes[0] < 0

    def test_one_statistic_per_g(self, linear_case):
        d, g = linear_case
        fam = build_linear(d, g)
        assert fam.M == g.M and fam.evaluate(np.zeros(4)).shape == (g.M, 4)

    def test_degenerate_variance(self):
        # Y in the permuted span of X1 leaves no residual
        x = np.repeat([1.0, 2.0, 4.0], 2)
        d = DesignData(2 * x + 1, x, np.ones(6), blocks=contiguous_blocks(6, 3))
        with pytest.raises(DegenerateVariance):
            build_linear(d, make_group(d))

    def test_needs_scalar_coefficient(self, conic_case):
        with pytest.raises(ConfigError):
            build_linear(*conic_case)

    def test_family_validation(self):
        with pytest.raises(ConfigError):
            LinearFamily([1.0, np.inf], [0.0, 0.0])


class TestRational:
    def test_matches_oracle(self, iv_case):
        d, g = iv_case
        fam = build_rational(d, g)
        tester = NaiveTester(d, g, "wald_scalar")
        for beta in np.random.default_rng(0).uniform(-4, 4, 20):
            assert rel_err(fam.evaluate(beta), tester.statistics(beta)) <= 1e-8

    def test_one_instrument_reduces_to_scalar_ratio(self):
        d = make_data(20, 4, seed=8, k=1)
        g = make_group(d)
        fam = build_rational(d, g)
        W = (q_spans(d, g, "Q1").Q @ d.Z)[:, 0]
        Q3 = q_spans(d, g, "Q3").Q
        for beta in np.random.default_rng(1).uniform(-3, 3, 20):
            r = d.Y - d.X1[:, 0] * beta
            for gi, p in enumerate(g.perms):
                T = W @ r[p]
                s11 = np.mean(W**2 * (Q3 @ r[p]) ** 2)
                assert fam.num[gi](beta) / fam.den[gi](beta) == pytest.approx(T * T / s11, rel=1e-9)

    def test_covariance_constant_term(self, iv_case):
        d, g = iv_case
        fam = build_rational(d, g)
        a, _, _ = fam.sigma_coeffs
        W = q_spans(d, g, "Q1").Q @ d.Z
        Q3 = q_spans(d, g, "Q3").Q
        for gi, p in enumerate(g.perms[:5]):
            e = Q3 @ d.Y[p]
            direct = (W * e[:, None] ** 2).T @ W / d.n
            np.testing.assert_allclose(a[gi], direct, rtol=1e-12, atol=1e-14)

    def test_degree_bounds(self, iv_case):
        d, g = iv_case
        fam = build_rational(d, g)
        k = d.k
        for gi in range(g.M):
            assert fam.num[gi].degree <= 2 * k and fam.den[gi].degree <= 2 * k
            assert (fam.den[gi] * fam.num[0] - fam.den[0] * fam.num[gi]).degree <= 4 * k

    def test_nonnegative(self, iv_case):
        fam = build_rational(*iv_case)
        assert np.all(fam.evaluate(np.linspace(-5, 5, 41)) >= -1e-9)

    def test_denominator_zero_reported(self):
        fam = RationalFamily((Poly([1]), Poly([1])), (Poly([1]), Poly([-1, 1])))
        with pytest.raises(DenominatorZero) as exc:
            fam.evaluate(1.0)
        assert exc.value.g == 1

    def test_instruments_in_nuisance_span(self):
        d = make_data(20, 4, seed=2, k=2)
        d = DesignData(d.Y, d.X1, np.hstack([d.X2, d.Z]), d.Z, d.blocks)
        with pytest.raises(SingularAtZero):
            build_rational(d, make_group(d))

    def test_requires_instrument(self, linear_case):
        with pytest.raises(ConfigError):
            build_rational(*linear_case)


class TestDhault:
    def test_reproduces_rational(self, iv_case):
        d, g = iv_case
        Q1 = q_spans(d, g, "Q1").Q
        Q3 = q_spans(d, g, "Q3").Q
        a = build_rational(d, g)
        b = build_dhault(DhaultData(Q1 @ d.Z, Q3, d.X1, d.Y), g)
        for gi in range(g.M):
            assert a.num[gi].allclose(b.num[gi], rtol=1e-10, atol=0)
            assert a.den[gi].allclose(b.den[gi], rtol=1e-10, atol=0)

    def _wdata(self, seed=0, n=16):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal(n)
        Xt = rng.standard_normal((n, 2))
        D = np.eye(n) - np.ones((n, n)) / n
        Y = 0.4 * X + rng.standard_normal(n)
        return DhaultData(Xt, D, X, Y)

    def test_identity_at_zero(self):
        w = self._wdata()
        g = make_group(DesignData(w.Y, w.X, blocks=contiguous_blocks(w.n, 4)))
        fam = build_dhault(w, g)
        S = w.X_tilde.T @ np.diag((w.D @ w.Y) ** 2) @ w.X_tilde / w.n
        s = w.X_tilde.T @ w.Y
        assert fam.num[0](0.0) / fam.den[0](0.0) == pytest.approx(s @ np.linalg.solve(S, s), rel=1e-10)

    def test_matches_oracle(self):
        w = self._wdata(3)
        g = make_group(DesignData(w.Y, w.X, blocks=contiguous_blocks(w.n, 4)))
        fam = build_dhault(w, g)
        tester = NaiveTester(w, g, "dhault")
        for beta in np.random.default_rng(5).uniform(-3, 3, 20):
            assert rel_err(fam.evaluate(beta), tester.statistics(beta)) <= 1e-8


class TestConic:
    def test_constant_term(self, conic_case):
        d, g = conic_case
        fam = build_conic(d, g)
        np.testing.assert_allclose(fam.evaluate((0.0, 0.0)), fam.omegas[:, 2, 2], rtol=1e-12)

    def test_matches_oracle(self, conic_case):
        d, g = conic_case
        fam = build_conic(d, g)
        tester = NaiveTester(d, g, "wald_2d")
        for x, y in np.random.default_rng(2).uniform(-3, 3, (50, 2)):
            assert rel_err(fam.evaluate((x, y)), tester.statistics((x, y))) <= 1e-8

    def test_nonnegative_and_symmetric(self, conic_case):
        fam = build_conic(*conic_case)
        assert np.array_equal(fam.omegas, np.swapaxes(fam.omegas, 1, 2))
        xs = np.linspace(-5, 5, 21)
        assert np.all(fam.evaluate((xs[:, None], xs[None, :])) >= -1e-9)

    def test_family_symmetrises(self):
        om = np.zeros((1, 3, 3))
        om[0, 0, 1] = 2.0
        fam = ConicFamily(om)
        assert fam.omegas[0, 1, 0] == 1.0 == fam.omegas[0, 0, 1]

    def test_residuals_absorbed(self):
        # the permuted regressors span all of R^6, leaving no residual
        rng = np.random.default_rng(0)
        d = DesignData(rng.standard_normal(6), rng.standard_normal((6, 2)), Z=rng.standard_normal((6, 1)), blocks=contiguous_blocks(6, 3))
        with pytest.raises(SingularSigma):
            build_conic(d, make_group(d))

    def test_instruments_absorbed(self):
        d = make_data(30, 6, seed=5, d=2, k=3, beta2=(0.3, 0.2, 0.1), block_level_x1=True)
        with pytest.raises(SingularSigma):
            build_conic(d, make_group(d, cap=200, seed=1))

    def test_needs_two_coefficients(self, iv_case):
        with pytest.raises(ConfigError):
            build_conic(*iv_case)


class TestDiCiccio:
    @pytest.fixture
    def case(self):
        d = make_data(20, 4, seed=6, d=2, beta1=(0.5, -0.2), beta2=())
        return d, make_group(d)

    def test_matches_oracle(self, case):
        d, g = case
        fam = build_diciccio(d, g)
        tester = NaiveTester(d, g, "diciccio")
        for x, y in np.random.default_rng(3).uniform(-3, 3, (50, 2)):
            assert rel_err(fam.evaluate((x, y)), tester.statistics((x, y))) <= 1e-8

    def test_zero_at_estimate(self, case):
        d, g = case
        fam = build_diciccio(d, g)
        for gi, p in enumerate(g.perms[:6]):
            bhat = np.linalg.lstsq(d.X1, d.Y[p], rcond=None)[0]
            assert fam.poly(gi)(*bhat) == pytest.approx(0.0, abs=1e-9)

    def test_quartic_and_nonnegative(self, case):
        fam = build_diciccio(*case)
        assert all(fam.poly(gi).total_degree <= 4 for gi in range(fam.M))
        xs = np.linspace(-4, 4, 17)
        assert np.all(fam.evaluate((xs[:, None], xs[None, :])) >= -1e-9)

    def test_singular_xx(self):
        x = np.arange(8.0)
        d = DesignData(np.random.default_rng(0).standard_normal(8), np.column_stack([x, 2 * x]), blocks=contiguous_blocks(8, 2))
        with pytest.raises(SingularXX):
            build_diciccio(d, make_group(d))

    def test_family_shape(self):
        with pytest.raises(ConfigError):
            BiPolyFamily(np.zeros((2, 3, 4)))

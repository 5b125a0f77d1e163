import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lbdrec import specfun
from lbdrec.specfun import (
    BetaShape, BoundaryWarning, ConvergenceError, DomainError, beta_pdf, betainc,
    betainc_grad, betainc_with_grad, interval_mass, log_beta, logistic_cdf,
)
from oracles import poly_betainc, quad_betainc

shapes = st.floats(min_value=1e-2, max_value=1e3)
unit = st.floats(min_value=1e-3, max_value=1 - 1e-3)


def hyp2f1_betainc(x, a, b):
    """``I_x(a, b) = x^a (1-x)^b / (a B(a, b)) * 2F1(a+b, 1; a+1; x)`` at 60 digits."""
    mpmath.mp.dps = 60
    X = mpmath.mpf(float(x))
    return float(X ** a * (1 - X) ** b / (a * mpmath.beta(a, b))
                 * mpmath.hyp2f1(a + b, 1, a + 1, X))


def mp_derivs(x, a, b):
    mpmath.mp.dps = 100
    f = lambda aa, bb: mpmath.betainc(aa, bb, 0, x, regularized=True)
    return (float(mpmath.diff(lambda t: f(t, b), a)),
            float(mpmath.diff(lambda t: f(a, t), b)))


class TestBetaShape:
    def test_moments(self):
        s = BetaShape(2.0, 6.0)
        assert s.mean == 0.25
        assert s.confidence == 8.0
        assert s.variance == pytest.approx(2 * 6 / (64 * 9))

    def test_from_mean_confidence(self):
        s = BetaShape.from_mean_confidence(0.9, 10.0)
        assert (s.alpha, s.beta) == pytest.approx((9.0, 1.0))

    @pytest.mark.parametrize("a,b", [(0, 1), (-1, 1), (1, float("inf")), (float("nan"), 1)])
    def test_rejects_invalid(self, a, b):
        with pytest.raises(DomainError):
            BetaShape(a, b)


class TestLogBeta:
    def test_uniform(self):
        assert log_beta(1.0, 1.0) == 0.0

    def test_factorial_case(self):
        assert log_beta(2.0, 2.0) == pytest.approx(math.log(1 / 6), abs=1e-14)

    def test_against_independent_loggamma(self):
        mpmath.mp.dps = 30
        ref = float(mpmath.loggamma(3.5) + mpmath.loggamma(0.7) - mpmath.loggamma(4.2))
        assert log_beta(3.5, 0.7) == pytest.approx(ref, abs=1e-12)
        # Lanczos-based stdlib log-gamma as a second route
        alt = math.lgamma(3.5) + math.lgamma(0.7) - math.lgamma(4.2)
        assert log_beta(3.5, 0.7) == pytest.approx(alt, abs=1e-12)

    @pytest.mark.parametrize("a,b", [(0.1187, 4593.7), (20.0, 3e3), (1e3, 1e3), (0.02, 15.0)])
    def test_asymmetric_and_large(self, a, b):
        mpmath.mp.dps = 40
        ref = float(mpmath.log(mpmath.beta(a, b)))
        assert log_beta(a, b) == pytest.approx(ref, rel=1e-14, abs=1e-14)

    @pytest.mark.parametrize("a,b", [(0.0, 1.0), (1.0, -2.0), (np.inf, 1.0)])
    def test_domain(self, a, b):
        with pytest.raises(DomainError):
            log_beta(a, b)


class TestBetaPdf:
    def test_uniform(self):
        assert beta_pdf(0.37, 1, 1) == pytest.approx(1.0, abs=1e-15)

    def test_polynomial(self):
        assert beta_pdf(0.3, 2, 5) == pytest.approx(30 * 0.3 * 0.7 ** 4, rel=1e-13)
        assert beta_pdf(0.3, 2, 5) == pytest.approx(2.1609, rel=1e-12)

    def test_symmetric_peak(self):
        assert beta_pdf(0.5, 3, 3) == pytest.approx(1.875, rel=1e-13)

    def test_boundary_divergence(self):
        with pytest.warns(BoundaryWarning):
            assert beta_pdf(0.0, 0.5, 2.0) == np.inf
        with pytest.warns(BoundaryWarning):
            assert beta_pdf(1.0, 2.0, 0.3) == np.inf

    def test_boundary_finite(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert beta_pdf(0.0, 2.0, 2.0) == 0.0
            assert beta_pdf(1.0, 1.0, 1.0) == 1.0

    @pytest.mark.parametrize("x", [-0.1, 1.1, np.nan])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            beta_pdf(x, 2, 2)


class TestBetainc:
    def test_uniform(self):
        assert betainc(0.37, 1, 1) == pytest.approx(0.37, abs=1e-15)

    def test_symmetric_half(self):
        assert betainc(0.5, 3.7, 3.7) == pytest.approx(0.5, abs=1e-14)

    def test_closed_form(self):
        ref = 30 * ((1 / 5 - 1 / 6) - (0.7 ** 5 / 5 - 0.7 ** 6 / 6))
        assert betainc(0.3, 2, 5) == pytest.approx(ref, abs=1e-14)
        assert betainc(0.3, 2, 5) == pytest.approx(0.579825, abs=1e-6)

    def test_endpoints(self):
        np.testing.assert_array_equal(betainc(np.array([0.0, 1.0]), 0.3, 4.0), [0.0, 1.0])

    def test_vectorized_broadcast(self):
        x = np.linspace(0.05, 0.95, 7)
        out = betainc(x[:, None], np.array([0.5, 2.0, 9.0]), 3.0)
        assert out.shape == (7, 3)
        for j, a in enumerate((0.5, 2.0, 9.0)):
            np.testing.assert_allclose(out[:, j], [betainc(v, a, 3.0) for v in x], atol=0)

    def test_integer_polynomial_grid(self):
        x = np.arange(1, 100) / 100
        for a in range(1, 9):
            for b in range(1, 9):
                ref = np.array([poly_betainc(v, a, b) for v in x])
                np.testing.assert_allclose(betainc(x, a, b), ref, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("a,b", [(4000.0, 6000.0), (4593.7, 0.1187), (0.35, 9000.0)])
    def test_large_shapes(self, a, b):
        mean = a / (a + b)
        sd = math.sqrt(mean * (1 - mean) / (a + b + 1))
        for x in np.clip(mean + sd * np.array([-2.0, 0.0, 2.0]), 1e-4, 1 - 1e-4):
            assert betainc(x, a, b) == pytest.approx(hyp2f1_betainc(x, a, b), abs=1e-12)

    def test_non_convergence_reports_arguments(self, monkeypatch):
        monkeypatch.setattr(specfun, "MAX_ITER", 1)
        with pytest.raises(ConvergenceError) as info:
            betainc(0.45, 50.0, 50.0)
        assert (info.value.x, info.value.alpha, info.value.beta) == (0.45, 50.0, 50.0)

    @pytest.mark.parametrize("x,a,b", [(0.5, 0.0, 1.0), (1.5, 1.0, 1.0), (0.5, 1.0, np.nan)])
    def test_domain(self, x, a, b):
        with pytest.raises(DomainError):
            betainc(x, a, b)

    def test_complement_keeps_upper_tail_precision(self):
        # 1 - I is ~1e-30 here; the direct complement must not round to 0
        _, comp, *_ = betainc_with_grad(np.array([0.99]), np.array([25.0]), np.array([2.0]))
        mpmath.mp.dps = 60
        ref = float(1 - mpmath.betainc(25, 2, 0, 0.99, regularized=True))
        assert comp[0] == pytest.approx(ref, rel=1e-10)

    def test_interval_mass(self):
        assert interval_mass(0.5, 1.0, 2.0, 5.0) == pytest.approx(0.109375, abs=1e-14)


class TestBetaincProperties:
    @settings(max_examples=200, deadline=None)
    @given(unit, shapes, shapes)
    def test_reflection(self, x, a, b):
        assert betainc(x, a, b) + betainc(1 - x, b, a) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(unit, min_size=2, max_size=20), shapes, shapes)
    def test_monotone_in_x(self, xs, a, b):
        # one-ulp steps in x can move the rounded value by a few ulps either way
        xs = np.sort(np.array(xs))
        assert np.all(np.diff(betainc(xs, a, b)) >= -1e-14)

    @settings(max_examples=100, deadline=None)
    @given(unit, shapes, shapes)
    def test_dx_is_pdf(self, x, a, b):
        dx, _, _ = betainc_grad(x, a, b)
        assert dx == pytest.approx(beta_pdf(x, a, b), rel=1e-12, abs=1e-300)


class TestBetaincGrad:
    def test_uniform_pdf(self):
        assert betainc_grad(0.37, 1, 1)[0] == pytest.approx(1.0, abs=1e-15)

    def test_closed_form_pdf(self):
        assert betainc_grad(0.3, 2, 5)[0] == pytest.approx(2.1609, rel=1e-12)

    def test_richardson_fd(self):
        h = 1e-5

        def fd(f):
            d1 = (f(h) - f(-h)) / (2 * h)
            d2 = (f(h / 2) - f(-h / 2)) / h
            return (4 * d2 - d1) / 3

        _, da, db = betainc_grad(0.3, 2.0, 5.0)
        assert da == pytest.approx(fd(lambda e: betainc(0.3, 2.0 + e, 5.0)), rel=1e-6)
        assert db == pytest.approx(fd(lambda e: betainc(0.3, 2.0, 5.0 + e)), rel=1e-6)

    @pytest.mark.parametrize("x", [0.0, 1.0])
    def test_rejects_endpoints(self, x):
        with pytest.raises(DomainError):
            betainc_grad(x, 2.0, 3.0)

    def test_against_high_precision_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            a, b = np.exp(rng.uniform(np.log(1e-2), np.log(1e3), 2))
            x = rng.uniform(1e-3, 1 - 1e-3)
            _, da, db = betainc_grad(x, a, b)
            ra, rb = mp_derivs(x, a, b)
            assert da == pytest.approx(ra, rel=1e-5, abs=1e-14)
            assert db == pytest.approx(rb, rel=1e-5, abs=1e-14)


class TestQuadrature:
    def test_random_shapes(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a, b = rng.uniform(0.1, 50, 2)
            x = rng.uniform(0.02, 0.98)
            ref = quad_betainc(x, a, b)
            assert betainc(x, a, b) == pytest.approx(ref, abs=1e-10)


class TestLogistic:
    def test_centre(self):
        assert logistic_cdf(0.0) == 0.5

    def test_saturation(self):
        assert logistic_cdf(50.0) == pytest.approx(1.0, abs=1e-15)

    def test_value(self):
        assert logistic_cdf(1.0) == pytest.approx(1 - logistic_cdf(-1.0), abs=1e-16)
        assert logistic_cdf(1.0) == pytest.approx(0.731058, abs=1e-6)

    def test_stable_tails(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            out = logistic_cdf(np.array([-800.0, 800.0]))
        np.testing.assert_array_equal(out, [0.0, 1.0])
        assert logistic_cdf(-40.0) == pytest.approx(math.exp(-40), rel=1e-12)

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import lbd_toy_noise, max_grad_error, toy_batch
from lbdrec.dataio import MOVIELENS_10M, RatingScale
from lbdrec.lbd import (
    LbdConfig, LbdModel, _mu_pivot, apply_alpha_beta_bias, apply_mu_nu_bias, bin_edges,
    predict_mu, predict_nu, rating_distribution, reparameterize, static_edges,
)
from lbdrec.specfun import DomainError, beta_pdf, betainc

FIVE = RatingScale(1.0, 5.0, 5)


class TestPredictMu:
    def test_parallel_is_clamped(self):
        u = np.array([0.3, -1.2, 2.0])
        assert predict_mu(u, 2.5 * u) == 1 - 1e-6

    def test_orthogonal(self):
        assert predict_mu([1.0, 0.0], [0.0, 3.0]) == pytest.approx(0.5, abs=1e-15)

    def test_hand_cosine(self):
        assert predict_mu([1.0, 2.0], [2.0, 1.0]) == pytest.approx(0.9, abs=1e-15)

    def test_zero_vector_rejected(self):
        with pytest.raises(DomainError):
            predict_mu([0.0, 0.0], [1.0, 0.0])


class TestPredictNu:
    u, v = np.array([1.0, 0.0]), np.array([0.0, 1.0])

    def test_norm(self):
        assert predict_nu(self.u, self.v, "norm") == 1.0

    def test_sum(self):
        assert predict_nu(self.u, self.v, "sum") == pytest.approx(math.sqrt(2), abs=1e-15)

    def test_dot_floor(self):
        assert predict_nu(self.u, self.v, "dot", epsilon=1e-8) == 1e-8

    def test_unknown(self):
        with pytest.raises(ValueError):
            predict_nu(self.u, self.v, "max")


class TestReparameterize:
    def test_uniform(self):
        assert reparameterize(0.5, 2.0) == (1.0, 1.0)

    def test_direct(self):
        a, b = reparameterize(0.9, 10.0)
        assert a == pytest.approx(9.0) and b == pytest.approx(1.0)

    def test_round_trip(self):
        a, b = reparameterize(0.37, 4.2)
        assert a / (a + b) == pytest.approx(0.37, rel=1e-15)
        assert a + b == pytest.approx(4.2, rel=1e-15)


class TestAlphaBetaBias:
    def test_zero_bias_identity(self):
        assert apply_alpha_beta_bias(2.3, 0.4, 0, 0, 0, 0, 0, 0) == (2.3, 0.4)

    def test_floor(self):
        a, _ = apply_alpha_beta_bias(1.0, 1.0, -2.0, -2.0, -1.0, 0, 0, 0, epsilon=1e-6)
        assert a == 1e-6

    def test_addition(self):
        a, b = apply_alpha_beta_bias(2.0, 1.0, 0.5, 0.5, 0.5, 0, 0, 0)
        assert a == 3.5 and b == 1.0

    def test_bayesian_product(self):
        # Beta(a + alpha, b + beta) is the normalized product of Beta(a + 1, b + 1)
        # and Beta(alpha, beta)
        a, b, alpha, beta = 1.7, 0.6, 2.2, 3.1
        x = np.linspace(0.02, 0.98, 49)
        ratio = beta_pdf(x, a + alpha, b + beta) / (beta_pdf(x, a + 1, b + 1) * beta_pdf(x, alpha, beta))
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)


class TestMuNuBias:
    def test_half_pivot_is_identity(self):
        mu = np.linspace(0.01, 0.99, 50)
        # 0.5**(1/3) cubed is 0.5 up to rounding, so compare loosely
        p = 0.5 ** (1 / 3)
        mu2, _ = apply_mu_nu_bias(mu, 1.0, p, p, p, 1, 1, 1)
        np.testing.assert_allclose(mu2, mu, atol=1e-15)

    @pytest.mark.parametrize("p", [0.1, 0.25, 0.6, 0.93])
    def test_pivot_maps_to_half(self, p):
        assert _mu_pivot(p, p) == pytest.approx(0.5, abs=1e-15)

    def test_hand_value(self):
        mu2, _ = apply_mu_nu_bias(0.625, 1.0, 0.25, 1.0, 1.0, 1, 1, 1)
        assert mu2 == pytest.approx(0.75, abs=1e-15)

    def test_nu_scale(self):
        _, nu2 = apply_mu_nu_bias(0.5, 3.0, 0.5, 1.0, 1.0, 2.0, 0.5, 1.5)
        assert nu2 == pytest.approx(4.5)

    @given(st.floats(0.01, 0.99))
    def test_fixed_points_and_continuity(self, p):
        assert _mu_pivot(0.0, p) == 0.0
        assert _mu_pivot(1.0, p) == pytest.approx(1.0, abs=1e-12)
        below = _mu_pivot(p * (1 - 1e-12), p)
        assert below == pytest.approx(0.5, abs=1e-9)

    @given(st.floats(0.01, 0.99), st.lists(st.floats(0, 1), min_size=2, max_size=30, unique=True))
    def test_strictly_increasing(self, p, mus):
        mus = np.sort(np.array(mus))
        assert np.all(np.diff(_mu_pivot(mus, p)) > 0)


class TestBinEdges:
    def test_static(self):
        np.testing.assert_allclose(static_edges(10), np.linspace(0, 1, 11), atol=1e-15)
        assert static_edges(10)[-1] == 1.0

    @pytest.mark.parametrize("n", [2, 5, 10])
    def test_equal_theta_matches_static_exactly(self, n):
        for c in (0.0, 1.7, -3.0):
            e = bin_edges(n, np.full(n, c), np.zeros(n))
            np.testing.assert_array_equal(e, static_edges(n))

    def test_softmax_by_hand(self):
        e = bin_edges(2, np.array([math.log(3), 0.0]), np.zeros(2))
        np.testing.assert_allclose(e, [0.0, 0.75, 1.0], atol=1e-15)

    def test_one_theta_missing(self):
        with pytest.raises(ValueError):
            bin_edges(3, np.zeros(3), None)

    def test_model_zero_theta_edges(self):
        m = LbdModel(4, 3, MOVIELENS_10M, LbdConfig(embedding_dim=4, binning="adaptive"))
        e = m.edges([0, 1, 3], [2, 0, 1])
        for row in e:
            np.testing.assert_array_equal(row, static_edges(10))


class TestRatingDistribution:
    def test_uniform(self):
        d = rating_distribution(1.0, 1.0, static_edges(10), MOVIELENS_10M)
        np.testing.assert_allclose(d.probs, 0.1, atol=1e-14)

    def test_two_bins(self):
        p = rating_distribution(2.0, 5.0, [0.0, 0.5, 1.0])
        np.testing.assert_allclose(p, [0.890625, 0.109375], atol=1e-14)

    def test_last_bin(self):
        p = rating_distribution(9.0, 1.0, static_edges(10))
        assert p[9] == pytest.approx(1 - 0.9 ** 9, abs=1e-13)
        assert p[9] == pytest.approx(0.612580, abs=1e-6)

    def test_decreasing_edges_rejected(self):
        with pytest.raises(ValueError):
            rating_distribution(1.0, 1.0, [0.0, 0.6, 0.4, 1.0])

    @settings(max_examples=60)
    @given(st.floats(1e-3, 500), st.floats(1e-3, 500),
           st.lists(st.floats(0, 1), min_size=1, max_size=9))
    def test_sums_to_one(self, a, b, inner):
        e = np.concatenate([[0.0], np.sort(inner), [1.0]])
        p = rating_distribution(a, b, e)
        assert np.all(p >= 0)
        assert abs(p.sum() - 1) < 1e-9


def _unit_model(u, v, **cfg):
    m = LbdModel(1, 1, FIVE, LbdConfig(embedding_dim=len(u), bias_scheme="none", **cfg))
    m.params["U"][0] = u
    m.params["V"][0] = v
    return m


class TestForward:
    def test_identical_embeddings(self):
        u = np.array([0.6, -0.8, 0.0])
        m = _unit_model(u, u, confidence_fn="norm")
        nu = 1.0
        expected = rating_distribution(nu * (1 - 1e-6), nu * 1e-6, static_edges(5))
        np.testing.assert_allclose(m.forward(0, 0).probs, expected, atol=1e-15)

    def test_orthogonal_sum(self):
        m = _unit_model(np.array([1.0, 0.0]), np.array([0.0, 1.0]), confidence_fn="sum")
        shape = m.shape(0, 0)
        assert shape.alpha == pytest.approx(math.sqrt(2) / 2, rel=1e-14)
        assert shape.beta == pytest.approx(math.sqrt(2) / 2, rel=1e-14)
        cdf = betainc(static_edges(5), shape.alpha, shape.beta)
        probs = m.forward(0, 0).probs
        np.testing.assert_allclose(probs, np.diff(cdf), atol=1e-14)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        # symmetric shape over symmetric bins
        np.testing.assert_allclose(probs, probs[::-1], atol=1e-14)

    @pytest.mark.parametrize("fn,bias,binning", list(itertools.product(
        ["norm", "sum", "dot"], ["none", "alpha_beta", "mu_nu"], ["static", "adaptive"])))
    def test_random_models_normalized(self, fn, bias, binning):
        cfg = LbdConfig(embedding_dim=6, confidence_fn=fn, bias_scheme=bias, binning=binning)
        m = LbdModel(20, 15, MOVIELENS_10M, cfg, seed=4)
        rng = np.random.default_rng(1)
        for k in m.params:
            m.params[k] = np.asarray(m.params[k] + rng.normal(0, 1.0, m.params[k].shape))
        users, items = rng.integers(0, 20, 500), rng.integers(0, 15, 500)
        p = m.distribution(users, items)
        assert p.shape == (500, 10)
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


class TestLoss:
    def test_uniform_single(self):
        m = LbdModel(1, 1, MOVIELENS_10M, LbdConfig(embedding_dim=2, bias_scheme="none",
                                                    confidence_fn="sum"))
        # orthogonal with |U + V| = 2, so alpha = beta = 1
        m.params["U"][0] = [2 ** 0.5, 0.0]
        m.params["V"][0] = [0.0, 2 ** 0.5]
        assert m.shape(0, 0).alpha == pytest.approx(1.0, rel=1e-14)
        assert m.loss([0], [0], [4]) == pytest.approx(-math.log(0.1), abs=1e-12)

    def test_mean_over_batch(self):
        m = LbdModel(3, 3, FIVE, LbdConfig(embedding_dim=4), seed=2)
        one = m.loss([1], [2], [3])
        assert m.loss([1, 1], [2, 2], [3, 3]) == pytest.approx(one, rel=1e-15)

    def test_empty_batch(self):
        m = LbdModel(3, 3, FIVE, LbdConfig(embedding_dim=4))
        with pytest.raises(ValueError):
            m.loss_and_grad([], [], [])

    def test_probability_floor(self):
        m = _unit_model(np.array([1.0, 0.0]), np.array([1.0, 0.0]), confidence_fn="norm")
        m.params["U"][0] *= 1e3
        # all mass is in the top bin; the bottom rating is floored at 1e-12
        m2 = m.loss([0], [0], [0])
        assert m2 == pytest.approx(-math.log(1e-12), rel=1e-12)
        _, g = m.loss_and_grad([0], [0], [0])
        assert all(np.all(np.isfinite(v)) for v in g.values())


CONFIGS = list(itertools.product(["norm", "sum", "dot"], ["none", "alpha_beta", "mu_nu"],
                                 ["static", "adaptive"], [False, True]))


class TestGradients:
    @pytest.mark.parametrize("fn,bias,binning,sep", CONFIGS)
    def test_matches_finite_differences(self, fn, bias, binning, sep):
        cfg = LbdConfig(embedding_dim=4, confidence_fn=fn, bias_scheme=bias, binning=binning,
                        separate_embeddings=sep)
        m = LbdModel(3, 3, FIVE, cfg, seed=1)
        lbd_toy_noise(m, np.random.default_rng(7))
        errors = max_grad_error(m, *toy_batch())
        assert max(errors.values()) < 1e-4, errors

    def test_groups_present(self):
        m = LbdModel(3, 3, FIVE, LbdConfig(embedding_dim=4, binning="adaptive"))
        _, g = m.loss_and_grad(*toy_batch())
        assert set(g) == set(m.params)
        for k in m.params:
            assert g[k].shape == m.params[k].shape


class TestScaleEquivariance:
    def test_monte_carlo_moments(self):
        # sampled Beta mapped onto [r_min, r_max] against the analytic mu, nu forms
        rng = np.random.default_rng(0)
        lo, hi = MOVIELENS_10M.r_min, MOVIELENS_10M.r_max
        span = hi - lo
        for _ in range(5):
            mu, nu = rng.uniform(0.1, 0.9), rng.uniform(0.5, 30)
            a, b = reparameterize(mu, nu)
            x = lo + span * rng.beta(a, b, 200_000)
            var = mu * (1 - mu) / (nu + 1)
            se_mean = math.sqrt(var * span ** 2 / x.size)
            assert abs(x.mean() - (mu * span + lo)) < 3 * se_mean
            # standard error of the sample variance from the fourth central moment
            m4 = np.mean((x - x.mean()) ** 4)
            se_var = math.sqrt((m4 - x.var() ** 2) / x.size)
            assert abs(x.var() - var * span ** 2) < 3 * se_var


class TestInit:
    def test_embedding_scale_and_defaults(self):
        m = LbdModel(300, 200, MOVIELENS_10M, LbdConfig(embedding_dim=64, bias_scheme="mu_nu",
                                                        binning="adaptive"), seed=0)
        assert m.params["U"].std() == pytest.approx(1 / 8, rel=0.02)
        assert np.all(np.any(m.params["U"] != 0, axis=1))
        sig = lambda z: 1 / (1 + np.exp(-z))
        pivot = sig(m.params["u0_logit"]) * sig(m.params["u_user_logit"][0]) * sig(m.params["u_item_logit"][0])
        assert pivot == pytest.approx(0.5, rel=1e-14)
        assert np.all(m.params["v_user_log"] == 0)
        assert np.all(m.params["theta_user"] == 0)

    def test_kind(self):
        assert LbdModel(1, 1, FIVE, LbdConfig(embedding_dim=2)).kind == "lbd-s"
        assert LbdModel(1, 1, FIVE, LbdConfig(embedding_dim=2, binning="adaptive")).kind == "lbd-a"

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LbdConfig(epsilon=0.1)
        with pytest.raises(ValueError):
            LbdConfig(embedding_dim=3, separate_embeddings=True)
        with pytest.raises(ValueError):
            LbdConfig(confidence_fn="cube")

    def test_same_seed_same_params(self):
        a = LbdModel(5, 5, FIVE, LbdConfig(embedding_dim=8), seed=9)
        b = LbdModel(5, 5, FIVE, LbdConfig(embedding_dim=8), seed=9)
        np.testing.assert_array_equal(a.params["V"], b.params["V"])

"""Comparison models: biased MF, confidence-aware MF and OrdRec.

All three share the biased matrix-factorization score
``U_u . V_i + b0 + b_u + b_i``.  MF is trained on squared error and gets a
single post-hoc noise level so it can emit a distribution; CMF learns a
per-interaction Gaussian variance ``exp(g0 + g_u + g_i)``; OrdRec pushes the
score through a logistic CDF with learned increasing thresholds.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from .base import (
    NotFittedError, RatingModel, init_embeddings, nll_from_probs, scatter_rows,
)
from .distribution import normalize_rows
from .specfun import cdf_to_masses, logistic_cdf

EMBEDDING_STD = 0.1
LOG_2PI = float(np.log(2.0 * np.pi))


def gaussian_bin_probs(mean, sigma, scale):
    """Discretize ``N(mean, sigma^2)`` onto ``scale``.

    Bin ``r`` covers the reals between the midpoints around ``R_r``; the two
    outer bins absorb the tails.
    """
    mean = np.asarray(mean, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), mean.shape)
    mids = scale.values[:-1] + 0.5 * scale.step
    z = (mids - mean[..., None]) / sigma[..., None]
    pad = np.zeros(z.shape[:-1] + (1,))
    cdf = np.concatenate([pad, ndtr(z), pad + 1.0], axis=-1)
    comp = np.concatenate([pad + 1.0, ndtr(-z), pad], axis=-1)
    return normalize_rows(cdf_to_masses(cdf, comp))


class _ScoreCore(RatingModel):
    """Biased MF score shared by every baseline."""

    def __init__(self, num_users, num_items, scale, embedding_dim=64, seed=0):
        super().__init__(num_users, num_items, scale)
        self.embedding_dim = int(embedding_dim)
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be positive")
        rng = np.random.default_rng(seed)
        p = self.params
        p["U"] = init_embeddings(rng, self.num_users, self.embedding_dim, EMBEDDING_STD)
        p["V"] = init_embeddings(rng, self.num_items, self.embedding_dim, EMBEDDING_STD)
        p["b0"] = np.zeros(())
        p["b_user"] = np.zeros(self.num_users)
        p["b_item"] = np.zeros(self.num_items)

    def config_dict(self):
        return {"embedding_dim": self.embedding_dim}

    def prepare(self, train):
        self.params["b0"] = np.asarray(float(np.mean(train.rating_values)))

    def score(self, users, items):
        p = self.params
        return (np.einsum("ij,ij->i", p["U"][users], p["V"][items])
                + p["b0"] + p["b_user"][users] + p["b_item"][items])

    def _score_grads(self, users, items, g_score):
        """Gradients of the score core given ``dL/dscore`` per example."""
        p = self.params
        return {
            "U": scatter_rows(self.num_users, users, g_score[:, None] * p["V"][items]),
            "V": scatter_rows(self.num_items, items, g_score[:, None] * p["U"][users]),
            "b0": np.asarray(g_score.sum()),
            "b_user": scatter_rows(self.num_users, users, g_score),
            "b_item": scatter_rows(self.num_items, items, g_score),
        }

    def _clip(self, x):
        return np.clip(x, self.scale.r_min, self.scale.r_max)


class MfModel(_ScoreCore):
    """Biased matrix factorization trained on squared error."""

    kind = "mf"

    def finalize(self, train):
        """Fit the global noise level as the ML standard deviation of residuals."""
        res = self.score(train.users, train.items) - train.rating_values
        self.extras["global_sigma"] = float(np.sqrt(np.mean(res * res)))

    def predict(self, users, items):
        return self._clip(self.score(np.asarray(users), np.asarray(items)))

    predict_mean = predict

    def loss_and_grad(self, users, items, ratings):
        users, items = np.asarray(users), np.asarray(items)
        if len(users) == 0:
            raise ValueError("empty batch")
        res = self.score(users, items) - self.scale.values[np.asarray(ratings)]
        loss = float(np.mean(res * res))
        return loss, self._score_grads(users, items, 2.0 * res / len(res))

    def distribution(self, users, items):
        sigma = self.extras.get("global_sigma")
        if sigma is None:
            raise NotFittedError("MF global_sigma has not been fit; call finalize() first")
        users, items = np.asarray(users), np.asarray(items)
        return gaussian_bin_probs(self.score(users, items), max(sigma, 1e-12), self.scale)


class CmfModel(_ScoreCore):
    """Gaussian likelihood with a log-additive user/item variance."""

    kind = "cmf"

    def __init__(self, num_users, num_items, scale, embedding_dim=64, seed=0):
        super().__init__(num_users, num_items, scale, embedding_dim, seed)
        self.params["g0"] = np.zeros(())
        self.params["g_user"] = np.zeros(self.num_users)
        self.params["g_item"] = np.zeros(self.num_items)
        self._initialized = False

    def init_from(self, mf):
        """Copy the score core of a trained :class:`MfModel`."""
        if (mf.num_users, mf.num_items, mf.embedding_dim) != (
                self.num_users, self.num_items, self.embedding_dim):
            raise ValueError("MF checkpoint dimensions do not match")
        for k in ("U", "V", "b0", "b_user", "b_item"):
            self.params[k] = mf.params[k].copy()
        self._initialized = True

    def prepare(self, train):
        # an MF initialization already carries a fitted global bias
        if not self._initialized:
            super().prepare(train)

    def log_variance(self, users, items):
        p = self.params
        return p["g0"] + p["g_user"][users] + p["g_item"][items]

    def predict_mean(self, users, items):
        return self._clip(self.score(np.asarray(users), np.asarray(items)))

    def loss_and_grad(self, users, items, ratings):
        users, items = np.asarray(users), np.asarray(items)
        m = len(users)
        if m == 0:
            raise ValueError("empty batch")
        res = self.score(users, items) - self.scale.values[np.asarray(ratings)]
        s = self.log_variance(users, items)
        inv = np.exp(-s)
        loss = float(np.mean(0.5 * (LOG_2PI + s) + 0.5 * res * res * inv))
        grads = self._score_grads(users, items, res * inv / m)
        g_s = (0.5 - 0.5 * res * res * inv) / m
        grads["g0"] = np.asarray(g_s.sum())
        grads["g_user"] = scatter_rows(self.num_users, users, g_s)
        grads["g_item"] = scatter_rows(self.num_items, items, g_s)
        return loss, grads

    def distribution(self, users, items):
        users, items = np.asarray(users), np.asarray(items)
        sigma = np.exp(0.5 * self.log_variance(users, items))
        return gaussian_bin_probs(self.score(users, items), sigma, self.scale)


class OrdRecModel(_ScoreCore):
    """Cumulative-logit ordinal model on top of the MF score.

    ``variant="U"`` learns thresholds per user; ``"UI"`` adds per-item terms
    to the threshold increments.
    """

    def __init__(self, num_users, num_items, scale, embedding_dim=64, seed=0,
                 variant="U"):
        if variant not in ("U", "UI"):
            raise ValueError("variant must be 'U' or 'UI'")
        super().__init__(num_users, num_items, scale, embedding_dim, seed)
        self.variant = variant
        self.kind = "ordrec-" + variant.lower()
        n, d = scale.n, scale.step
        # thresholds start at the rating midpoints, in rating units
        self.params["t1_user"] = np.full(self.num_users, scale.r_min + 0.5 * d)
        self.params["c_user"] = np.full((self.num_users, n - 2), np.log(d))
        if variant == "UI":
            self.params["d_item"] = np.zeros((self.num_items, n - 2))

    def config_dict(self):
        return {"embedding_dim": self.embedding_dim, "variant": self.variant}

    def thresholds(self, users, items):
        """``(m, n - 1)`` realized thresholds and the ``(m, n - 2)`` increments."""
        p = self.params
        logits = p["c_user"][users]
        if self.variant == "UI":
            logits = logits + p["d_item"][items]
        inc = np.exp(logits)
        t1 = p["t1_user"][users][:, None]
        return np.concatenate([t1, t1 + np.cumsum(inc, axis=1)], axis=1), inc

    def _cdf(self, users, items):
        t, inc = self.thresholds(users, items)
        z = t - self.score(users, items)[:, None]
        return z, inc

    def distribution(self, users, items):
        users, items = np.asarray(users), np.asarray(items)
        z, _ = self._cdf(users, items)
        pad = np.zeros((z.shape[0], 1))
        cdf = np.concatenate([pad, logistic_cdf(z), pad + 1.0], axis=1)
        comp = np.concatenate([pad + 1.0, logistic_cdf(-z), pad], axis=1)
        return normalize_rows(cdf_to_masses(cdf, comp))

    def loss_and_grad(self, users, items, ratings):
        users, items, ratings = np.asarray(users), np.asarray(items), np.asarray(ratings)
        m = len(users)
        if m == 0:
            raise ValueError("empty batch")
        n = self.scale.n
        z, inc = self._cdf(users, items)
        rows = np.arange(m)
        has_lo, has_hi = ratings > 0, ratings < n - 1
        z_lo = np.where(has_lo, z[rows, np.maximum(ratings - 1, 0)], -np.inf)
        z_hi = np.where(has_hi, z[rows, np.minimum(ratings, n - 2)], np.inf)
        F_lo, F_hi = logistic_cdf(z_lo), logistic_cdf(z_hi)
        Q_lo, Q_hi = logistic_cdf(-z_lo), logistic_cdf(-z_hi)
        prob = np.where(F_lo > 0.5, Q_lo - Q_hi, F_hi - F_lo)
        loss, gP = nll_from_probs(prob)

        # dL/dz at each threshold, then through z = t - score
        g_z = np.zeros((m, n - 1))
        f_lo, f_hi = F_lo * Q_lo, F_hi * Q_hi
        g_z[rows[has_lo], ratings[has_lo] - 1] = -gP[has_lo] * f_lo[has_lo]
        g_z[rows[has_hi], ratings[has_hi]] += gP[has_hi] * f_hi[has_hi]
        grads = self._score_grads(users, items, -g_z.sum(axis=1))
        grads["t1_user"] = scatter_rows(self.num_users, users, g_z.sum(axis=1))
        # increment k enters every threshold above it
        g_logit = inc * np.cumsum(g_z[:, :0:-1], axis=1)[:, ::-1]
        grads["c_user"] = scatter_rows(self.num_users, users, g_logit)
        if self.variant == "UI":
            grads["d_item"] = scatter_rows(self.num_items, items, g_logit)
        return float(loss), grads

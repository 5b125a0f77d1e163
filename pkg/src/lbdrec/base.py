"""Shared surface for every rating model."""

from __future__ import annotations

import numpy as np

from .distribution import DiscreteRatingDistribution, summarize

PROB_FLOOR = 1e-12


class NotFittedError(RuntimeError):
    """A post-hoc quantity was requested before it was fit."""


class RatingModel:
    """Parameters live in ``self.params`` (name -> ndarray); subclasses fill
    in :meth:`loss_and_grad` and :meth:`distribution`.

    ``embedding_groups`` names the tensors that L2 regularization touches and
    whether their rows belong to users or items.
    """

    kind = "abstract"
    embedding_groups = {"U": "user", "V": "item"}

    def __init__(self, num_users, num_items, scale):
        self.num_users = int(num_users)
        self.num_items = int(num_items)
        self.scale = scale
        self.params = {}
        self.extras = {}

    # -- hooks -----------------------------------------------------------
    def prepare(self, train):
        """Data-dependent initialization before the first epoch."""

    def finalize(self, train):
        """Post-hoc fitting after the best epoch has been restored."""

    def config_dict(self):
        return {}

    # -- evaluation ------------------------------------------------------
    def loss_and_grad(self, users, items, ratings):
        raise NotImplementedError

    def distribution(self, users, items):
        """``(m, n)`` array of rating probabilities."""
        raise NotImplementedError

    def predict_mean(self, users, items):
        mean, _, _ = summarize(self.distribution(users, items), self.scale)
        return mean

    def forward(self, user, item):
        probs = self.distribution(np.array([user]), np.array([item]))[0]
        return DiscreteRatingDistribution(probs, self.scale)

    def loss(self, users, items, ratings):
        return self.loss_and_grad(users, items, ratings)[0]

    def copy_params(self):
        return {k: v.copy() for k, v in self.params.items()}


def scatter_rows(out_rows, index, values):
    """Accumulate ``values`` into a zero matrix with ``out_rows`` rows."""
    if values.ndim == 1:
        return np.bincount(index, weights=values, minlength=out_rows)
    out = np.zeros((out_rows, values.shape[1]))
    np.add.at(out, index, values)
    return out


def init_embeddings(rng, rows, dim, std):
    """i.i.d. normal rows, re-drawing any row that comes out exactly zero."""
    emb = rng.normal(0.0, std, size=(rows, dim))
    zero = ~np.any(emb, axis=1)
    while zero.any():
        emb[zero] = rng.normal(0.0, std, size=(int(zero.sum()), dim))
        zero = ~np.any(emb, axis=1)
    return emb


def nll_from_probs(p_obs):
    """Mean negative log of observed probabilities and ``d loss / d p``."""
    m = p_obs.shape[0]
    ok = p_obs > PROB_FLOOR
    loss = -np.mean(np.log(np.where(ok, p_obs, PROB_FLOOR)))
    g = np.where(ok, -1.0 / (m * np.where(ok, p_obs, 1.0)), 0.0)
    return loss, g

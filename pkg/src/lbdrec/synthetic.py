"""Ratings sampled from a known (planted) LBD-S model."""

from __future__ import annotations

import numpy as np

from .dataio import MOVIELENS_10M, RatingDataset
from .lbd import LbdConfig, LbdModel


def planted_lbd(num_users=200, num_items=100, dim=8, num_ratings=50_000,
                scale=MOVIELENS_10M, seed=0, norm_spread=0.6, base_norm=2.0):
    """Sample ``num_ratings`` ratings from a random static-bin LBD model.

    Embedding directions are uniform and row norms log-normal around
    ``base_norm`` so the confidence ``||U + V||`` varies across pairs.  Pairs
    are drawn uniformly with replacement, so a pair may be rated more than
    once.  Returns ``(dataset, generator)``.
    """
    rng = np.random.default_rng(seed)
    gen = LbdModel(num_users, num_items, scale,
                   LbdConfig(embedding_dim=dim, confidence_fn="sum", bias_scheme="none"),
                   seed=int(rng.integers(2 ** 31)))
    for name, rows in (("U", num_users), ("V", num_items)):
        direction = rng.normal(size=(rows, dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        norms = base_norm * np.exp(norm_spread * rng.normal(size=rows))
        gen.params[name] = direction * norms[:, None]

    users = rng.integers(0, num_users, num_ratings)
    items = rng.integers(0, num_items, num_ratings)
    probs = gen.distribution(users, items)
    cum = np.cumsum(probs, axis=1)
    draw = rng.random(num_ratings)[:, None]
    ratings = np.minimum((draw > cum).sum(axis=1), scale.n - 1)
    data = RatingDataset(users, items, ratings, scale,
                         [str(u) for u in range(num_users)], [str(i) for i in range(num_items)])
    return data, gen

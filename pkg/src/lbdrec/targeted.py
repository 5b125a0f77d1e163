"""High-precision targeted recommendation: one item each for the N most
promising users, scored by Precision@1 against true ratings."""

from __future__ import annotations

import csv
from dataclasses import dataclass
import io
import logging

import numpy as np

log = logging.getLogger(__name__)

SUCCESS_THRESHOLD = 4.5


def success_probability(probs, scale, threshold=SUCCESS_THRESHOLD):
    """Probability mass on scale values at or above ``threshold`` (row-wise)."""
    mask = scale.values >= threshold - 1e-9
    return np.asarray(probs)[..., mask].sum(axis=-1)


def default_n_grid(cap):
    """Half-powers of ten at two significant digits (1, 3, 10, 32, 100, 320, ...) up to ``cap``."""
    grid, k = [], 0
    while True:
        n = int(float(f"{10 ** (k / 2):.2g}"))
        if n > cap:
            return grid
        grid.append(n)
        k += 1


@dataclass
class TargetedResult:
    model_kind: str
    n_values: list
    precision: list
    cap: int
    truncated: bool
    relative_gain_vs_mf: list | None = None

    def to_csv(self):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["N", "precision_at_1", "relative_gain_vs_mf"])
        gains = self.relative_gain_vs_mf or [None] * len(self.n_values)
        for n, p, g in zip(self.n_values, self.precision, gains):
            w.writerow([n, repr(p), "" if g is None else repr(g)])
        return out.getvalue()

    def with_gain(self, mf):
        gains = []
        ref = dict(zip(mf.n_values, mf.precision))
        for n, p in zip(self.n_values, self.precision):
            base = ref.get(n)
            gains.append(None if not base else (p - base) / base)
        self.relative_gain_vs_mf = gains
        return self


def rank_users(users, items, score):
    """Best item per user by ``score`` (ties to the lower item index), then
    users ordered by that score descending (ties to the lower user index).

    Returns the positions of the chosen records in ranked order.
    """
    users = np.asarray(users)
    items = np.asarray(items)
    score = np.asarray(score, dtype=float)
    order = np.lexsort((items, -score, users))
    first = np.r_[True, users[order][1:] != users[order][:-1]]
    chosen = order[first]
    return chosen[np.lexsort((users[chosen], -score[chosen]))]


def run_targeted(records, n_values=None, threshold=SUCCESS_THRESHOLD, model_kind=""):
    """Precision@1 of the top-``N`` user picks for each ``N``.

    ``N`` is capped at the number of users with at least one test rating of
    ``threshold`` or more; larger requested values are dropped with a warning.
    """
    true = records.true_rating
    success = true >= threshold - 1e-9
    eligible = np.unique(records.users[success])
    cap = int(len(eligible))
    if n_values is None:
        n_values = default_n_grid(cap)
    n_values = [int(n) for n in n_values]
    if not n_values:
        raise ValueError("no N values requested")
    if any(n < 1 for n in n_values):
        raise ValueError("N values must be positive")
    kept = [n for n in n_values if n <= cap]
    truncated = len(kept) < len(n_values)
    if truncated:
        log.warning("N grid truncated at the %d users with a %.1f+ test rating", cap, threshold)

    score = success_probability(records.probs, records.scale, threshold)
    ranked = rank_users(records.users, records.items, score)
    hits = np.cumsum(success[ranked])
    precision = [float(hits[n - 1] / n) for n in kept]
    return TargetedResult(model_kind, kept, precision, cap, truncated)

"""Accuracy, ranking and confidence-error metrics over prediction records."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import io
import json
import math

import numpy as np

from .base import PROB_FLOOR
from .distribution import summarize

__all__ = [
    "EvalReport",
    "PredictionRecords",
    "UndefinedCorrelation",
    "classification_metrics",
    "confidence_correlations",
    "evaluate",
    "kendall_tau_b",
    "kendall_tau_b_bruteforce",
    "ndcg_at_k",
    "pearson_r",
    "predict_records",
    "regression_metrics",
    "variance_binned_profile",
]

PROFILE_HEADER = ("bin_id", "kind", "mean_variance", "mae", "mean_predicted_rating", "count")


class UndefinedCorrelation(ValueError):
    """A correlation was requested for a constant (or too short) input."""


@dataclass
class PredictionRecords:
    """Column-oriented predictions for a set of ``(user, item)`` pairs.

    ``probs`` holds one distribution per row; ``mean`` is the model's point
    estimate (used for RMSE, MAE and ranking), ``mode`` the most probable
    scale value (lowest on ties) and ``variance`` the distribution variance.
    """

    users: np.ndarray
    items: np.ndarray
    true_index: np.ndarray
    scale: object
    probs: np.ndarray
    mean: np.ndarray
    mode_index: np.ndarray = field(init=False)
    variance: np.ndarray = field(init=False)

    def __post_init__(self):
        _, _, self.variance = summarize(self.probs, self.scale)
        self.mode_index = np.argmax(self.probs, axis=1)
        lo, hi = self.scale.r_min, self.scale.r_max
        if np.any(self.mean < lo - 1e-12) or np.any(self.mean > hi + 1e-12):
            raise ValueError("mean estimates must lie on the rating range")

    def __len__(self):
        return len(self.users)

    @property
    def true_rating(self):
        return self.scale.values[self.true_index]

    @property
    def mode(self):
        return self.scale.values[self.mode_index]

    @property
    def abs_error(self):
        return np.abs(self.mean - self.true_rating)

    def subset(self, rows):
        return PredictionRecords(self.users[rows], self.items[rows], self.true_index[rows],
                                 self.scale, self.probs[rows], self.mean[rows])


def predict_records(model, data):
    probs = model.distribution(data.users, data.items)
    mean = model.predict_mean(data.users, data.items)
    return PredictionRecords(data.users.copy(), data.items.copy(), data.ratings.copy(),
                             data.scale, probs, np.asarray(mean, dtype=float))


def _require(records):
    if len(records) == 0:
        raise ValueError("no prediction records")


def regression_metrics(records):
    """``(rmse, mae)`` of the mean estimate."""
    _require(records)
    err = records.mean - records.true_rating
    return float(np.sqrt(np.mean(err * err))), float(np.mean(np.abs(err)))


def classification_metrics(records):
    """``(accuracy, average log-likelihood)``.

    Accuracy compares the mode with the true rating; the likelihood of each
    record is the probability its distribution gives the true rating,
    floored at ``PROB_FLOOR``.
    """
    _require(records)
    acc = float(np.mean(records.mode_index == records.true_index))
    p = records.probs[np.arange(len(records)), records.true_index]
    return acc, float(np.mean(np.log(np.maximum(p, PROB_FLOOR))))


def _gain(ratings, kind):
    if kind == "linear":
        return ratings
    if kind == "exponential":
        return np.exp2(ratings) - 1.0
    raise ValueError(f"unknown gain {kind!r}")


def ndcg_at_k(users, items, predicted, true, k, gain="linear"):
    """Mean over users of NDCG@k, reranking each user's own test items.

    Items are ordered by ``predicted`` descending, ties by item index.  A user
    with a single test item scores 1.
    """
    users = np.asarray(users)
    if len(users) == 0:
        raise ValueError("no records")
    if k < 1:
        raise ValueError("k must be at least 1")
    items = np.asarray(items)
    predicted = np.asarray(predicted, dtype=float)
    g = _gain(np.asarray(true, dtype=float), gain)

    pred_order = np.lexsort((items, -predicted, users))
    ideal_order = np.lexsort((items, -g, users))
    u_sorted = users[pred_order]
    starts = np.flatnonzero(np.r_[True, u_sorted[1:] != u_sorted[:-1]])
    sizes = np.diff(np.r_[starts, len(users)])
    rank = np.arange(len(users)) - np.repeat(starts, sizes)
    disc = np.where(rank < k, 1.0 / np.log2(rank + 2.0), 0.0)
    dcg = np.add.reduceat(g[pred_order] * disc, starts)
    idcg = np.add.reduceat(g[ideal_order] * disc, starts)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_user = np.where(idcg > 0, dcg / idcg, 1.0)
    per_user[sizes == 1] = 1.0
    return float(np.mean(per_user))


def pearson_r(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise UndefinedCorrelation("need two equal-length vectors of at least 2 values")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelation("correlation of a constant vector is undefined")
    return float(dx @ dy) / math.sqrt(sxx * syy)


def _tie_pairs(sorted_values):
    """Number of tied pairs in an already sorted array."""
    if len(sorted_values) == 0:
        return 0
    cuts = np.flatnonzero(np.r_[True, sorted_values[1:] != sorted_values[:-1], True])
    t = np.diff(cuts).astype(np.int64)
    return int(np.sum(t * (t - 1) // 2))


def _count_inversions(values):
    """Sort ``values`` by bottom-up merge sort and count strict inversions."""
    a = list(values)
    n = len(a)
    buf = [None] * n
    swaps = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            buf[k:k + mid - i] = a[i:mid]
            k += mid - i
            buf[k:k + hi - j] = a[j:hi]
        a, buf = buf, a
        width *= 2
    return swaps


def kendall_tau_b(x, y):
    """Tie-corrected Kendall tau in ``O(m log m)`` (Knight's merge-sort method).

    All pair counts are exact integers, so the result equals brute-force
    counting exactly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = len(x)
    if len(y) != m or m < 2:
        raise UndefinedCorrelation("need two equal-length vectors of at least 2 values")
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    n0 = m * (m - 1) // 2
    n1 = _tie_pairs(xs)
    # pairs tied in both coordinates are runs of equal (x, y) in lexicographic order
    same = np.r_[True, (xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1]), True]
    t = np.diff(np.flatnonzero(same)).astype(np.int64)
    n3 = int(np.sum(t * (t - 1) // 2))
    # ranks make the merge compare small ints instead of floats
    y_rank = np.unique(ys, return_inverse=True)[1].tolist()
    swaps = _count_inversions(y_rank)
    n2 = _tie_pairs(np.sort(ys))
    denom = (n0 - n1) * (n0 - n2)
    if denom == 0:
        raise UndefinedCorrelation("tau-b is undefined when either vector is constant")
    return (n0 - n1 - n2 + n3 - 2 * swaps) / math.sqrt(denom)


def kendall_tau_b_bruteforce(x, y):
    """``O(m^2)`` reference: concordant minus discordant over the tie-corrected norm."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = len(x)
    if len(y) != m or m < 2:
        raise UndefinedCorrelation("need two equal-length vectors of at least 2 values")
    iu = np.triu_indices(m, 1)
    sx = np.sign(x[iu[0]] - x[iu[1]]).astype(np.int64)
    sy = np.sign(y[iu[0]] - y[iu[1]]).astype(np.int64)
    n0 = len(sx)
    n1 = int(np.sum(sx == 0))
    n2 = int(np.sum(sy == 0))
    denom = (n0 - n1) * (n0 - n2)
    if denom == 0:
        raise UndefinedCorrelation("tau-b is undefined when either vector is constant")
    return int(np.sum(sx * sy)) / math.sqrt(denom)


def confidence_correlations(records):
    """Pearson r and Kendall tau-b between predicted variance and absolute error."""
    err = records.abs_error
    return pearson_r(records.variance, err), kendall_tau_b(records.variance, err)


def variance_binned_profile(records, kind="equispaced", bins=1000, outlier_discard=0.001):
    """Group records by predicted variance.

    The ``floor(outlier_discard * m)`` highest-variance records are removed
    first.  ``equispaced`` bins split the remaining variance range evenly and
    keep empty bins (count 0, other fields ``None``); ``quantile`` bins hold
    equal numbers of records (sizes differ by at most one), so with fewer
    records than bins only ``m`` rows come back.
    """
    if bins < 1:
        raise ValueError("bins must be at least 1")
    if not 0 <= outlier_discard < 1:
        raise ValueError("outlier_discard must lie in [0, 1)")
    var = records.variance
    order = np.argsort(var, kind="stable")
    drop = int(math.floor(outlier_discard * len(var)))
    keep = order[:len(order) - drop]
    v, err, pred = var[keep], records.abs_error[keep], records.mean[keep]

    groups = []
    if kind == "equispaced":
        if len(v):
            lo, hi = float(v.min()), float(v.max())
            width = (hi - lo) / bins
            idx = (np.zeros(len(v), dtype=np.int64) if width == 0
                   else np.minimum(((v - lo) / width).astype(np.int64), bins - 1))
        else:
            idx = np.zeros(0, dtype=np.int64)
        for b in range(bins):
            groups.append(np.flatnonzero(idx == b))
    elif kind == "quantile":
        groups = [g for g in np.array_split(np.arange(len(v)), min(bins, max(len(v), 1)))
                  if len(g)]
    else:
        raise ValueError(f"unknown profile kind {kind!r}")

    rows = []
    for b, g in enumerate(groups):
        if len(g):
            rows.append({"bin_id": b, "kind": kind, "mean_variance": float(v[g].mean()),
                         "mae": float(err[g].mean()),
                         "mean_predicted_rating": float(pred[g].mean()),
                         "count": int(len(g))})
        else:
            rows.append({"bin_id": b, "kind": kind, "mean_variance": None, "mae": None,
                         "mean_predicted_rating": None, "count": 0})
    return rows


def profile_to_csv(rows):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(PROFILE_HEADER)
    for r in rows:
        w.writerow(["" if r[h] is None else (repr(r[h]) if isinstance(r[h], float) else r[h])
                    for h in PROFILE_HEADER])
    return out.getvalue()


@dataclass
class EvalReport:
    model_kind: str
    count: int
    rmse: float
    mae: float
    accuracy: float
    avg_log_likelihood: float
    ndcg_at: dict
    pearson_r: float | None = None
    kendall_tau: float | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        d = {"model_kind": self.model_kind, "count": self.count, "rmse": self.rmse,
             "mae": self.mae, "accuracy": self.accuracy,
             "avg_log_likelihood": self.avg_log_likelihood,
             "ndcg_at": {str(k): v for k, v in sorted(self.ndcg_at.items())}}
        if self.pearson_r is not None:
            d["pearson_r"] = self.pearson_r
            d["kendall_tau"] = self.kendall_tau
        if self.meta:
            d["meta"] = self.meta
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def evaluate(model, data, ks=(3, 10), gain="linear", correlations=None):
    """Full report on ``data``; correlations are skipped for MF by default."""
    records = predict_records(model, data)
    rmse, mae = regression_metrics(records)
    acc, ll = classification_metrics(records)
    ndcg = {k: ndcg_at_k(records.users, records.items, records.mean, records.true_rating,
                         k, gain) for k in ks}
    report = EvalReport(model.kind, len(records), rmse, mae, acc, ll, ndcg)
    if correlations is None:
        correlations = model.kind != "mf"
    if correlations:
        report.pearson_r, report.kendall_tau = confidence_correlations(records)
    return report, records

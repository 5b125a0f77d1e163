"""Rating ingestion, dense indexing and cross-validation folds."""

from __future__ import annotations

from dataclasses import dataclass, field
import io
import json
import logging
import math
import os

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "FoldSplit",
    "RatingDataset",
    "RatingScale",
    "RecordError",
    "cold_start_guard",
    "kfold_split",
    "parse_ratings",
]

SNAP_TOL = 1e-9
VALIDATION_FRACTION = 0.05


class RecordError(ValueError):
    """A malformed or off-scale input record."""

    def __init__(self, lineno, message):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


@dataclass(frozen=True)
class RatingScale:
    """An equally spaced discrete rating scale ``r_min, r_min+step, ..., r_max``."""

    r_min: float
    r_max: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("a rating scale needs at least two values")
        if not self.r_max > self.r_min:
            raise ValueError("r_max must exceed r_min")

    @property
    def step(self):
        return (self.r_max - self.r_min) / (self.n - 1)

    @property
    def values(self):
        return self.r_min + self.step * np.arange(self.n)

    @property
    def span(self):
        return self.r_max - self.r_min

    def index_of(self, rating):
        """Scale index of ``rating`` or ``None`` when it is not on the scale."""
        pos = (rating - self.r_min) / self.step
        k = int(round(pos))
        if 0 <= k < self.n and abs(self.values[k] - rating) <= SNAP_TOL:
            return k
        return None

    def nearest_index(self, ratings):
        pos = np.rint((np.asarray(ratings, dtype=float) - self.r_min) / self.step)
        return np.clip(pos, 0, self.n - 1).astype(np.int64)

    def to_dict(self):
        return {"r_min": self.r_min, "r_max": self.r_max, "n": self.n}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["r_min"]), float(d["r_max"]), int(d["n"]))

    @classmethod
    def parse(cls, text):
        """``"0.5,5,10"`` -> RatingScale(0.5, 5.0, 10)."""
        lo, hi, n = text.split(",")
        return cls(float(lo), float(hi), int(n))


MOVIELENS_10M = RatingScale(0.5, 5.0, 10)
MOVIELENS_100K = RatingScale(1.0, 5.0, 5)


@dataclass
class RatingDataset:
    """Dense-indexed ``(user, item, rating)`` triples.

    ``ratings`` holds 0-based scale indices; ``user_ids[k]`` / ``item_ids[k]``
    give the external id of dense index ``k``.
    """

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    scale: RatingScale
    user_ids: list = field(default_factory=list)
    item_ids: list = field(default_factory=list)
    duplicates_dropped: int = 0
    rejected: int = 0

    def __post_init__(self):
        self.users = np.asarray(self.users, dtype=np.int64)
        self.items = np.asarray(self.items, dtype=np.int64)
        self.ratings = np.asarray(self.ratings, dtype=np.int64)
        if not (len(self.users) == len(self.items) == len(self.ratings)):
            raise ValueError("interaction columns differ in length")
        if not self.user_ids and len(self.users):
            self.user_ids = [str(k) for k in range(int(self.users.max()) + 1)]
        if not self.item_ids and len(self.items):
            self.item_ids = [str(k) for k in range(int(self.items.max()) + 1)]
        if len(self.ratings) and (self.ratings.min() < 0
                                  or self.ratings.max() >= self.scale.n):
            raise ValueError("rating index outside the scale")

    def __len__(self):
        return len(self.ratings)

    @property
    def num_users(self):
        return len(self.user_ids)

    @property
    def num_items(self):
        return len(self.item_ids)

    @property
    def rating_values(self):
        return self.scale.values[self.ratings]

    @property
    def user_index(self):
        return {u: k for k, u in enumerate(self.user_ids)}

    @property
    def item_index(self):
        return {i: k for k, i in enumerate(self.item_ids)}

    def subset(self, rows):
        """View restricted to interaction positions ``rows``; index maps are shared."""
        rows = np.asarray(rows, dtype=np.int64)
        return RatingDataset(self.users[rows], self.items[rows], self.ratings[rows],
                             self.scale, self.user_ids, self.item_ids)

    def user_counts(self):
        return np.bincount(self.users, minlength=self.num_users)

    def item_counts(self):
        return np.bincount(self.items, minlength=self.num_items)

    def save(self, path):
        np.savez(path, users=self.users, items=self.items, ratings=self.ratings)
        meta = {"scale": self.scale.to_dict(), "user_ids": self.user_ids,
                "item_ids": self.item_ids}
        with open(os.path.splitext(path)[0] + ".json", "w") as fh:
            json.dump(meta, fh)

    @classmethod
    def load(cls, path):
        with open(os.path.splitext(path)[0] + ".json") as fh:
            meta = json.load(fh)
        arr = np.load(path)
        return cls(arr["users"], arr["items"], arr["ratings"],
                   RatingScale.from_dict(meta["scale"]),
                   meta["user_ids"], meta["item_ids"])


def parse_ratings(source, scale, sep="::", strict=True):
    """Read ``user<sep>item<sep>rating[<sep>timestamp]`` records.

    ``source`` is a path, a text stream or a byte stream; ``sep=","`` reads
    plain CSV and skips a header line whose rating field is not numeric.  An
    off-scale rating raises :class:`RecordError`, or is skipped and counted
    when ``strict`` is false.  Repeated ``(user, item)`` pairs keep the last
    occurrence.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return parse_ratings(fh, scale, sep=sep, strict=strict)
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    if not isinstance(source, io.TextIOBase):
        source = io.TextIOWrapper(source, encoding="utf-8")

    user_index, item_index = {}, {}
    user_ids, item_ids = [], []
    last = {}  # (u, i) -> (position, rating index)
    rejected = 0
    duplicates = 0
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        fields = line.split(sep) if sep != " " else line.split()
        if len(fields) < 3:
            if strict:
                raise RecordError(lineno, f"expected at least 3 fields, got {len(fields)}")
            rejected += 1
            continue
        user, item, raw = fields[0].strip(), fields[1].strip(), fields[2].strip()
        try:
            value = float(raw)
        except ValueError:
            if lineno == 1 and sep == ",":
                continue
            if strict:
                raise RecordError(lineno, f"rating {raw!r} is not a number") from None
            rejected += 1
            continue
        k = scale.index_of(value) if math.isfinite(value) else None
        if k is None:
            if strict:
                raise RecordError(lineno, f"rating {raw} is not on the scale")
            rejected += 1
            continue
        if user not in user_index:
            user_index[user] = len(user_ids)
            user_ids.append(user)
        if item not in item_index:
            item_index[item] = len(item_ids)
            item_ids.append(item)
        key = (user_index[user], item_index[item])
        if key in last:
            duplicates += 1
        last[key] = (lineno, k)

    if duplicates:
        log.warning("%d duplicate (user, item) ratings replaced by their last occurrence",
                    duplicates)
    if rejected:
        log.warning("%d records rejected", rejected)
    entries = sorted(last.items(), key=lambda kv: kv[1][0])
    users = np.array([key[0] for key, _ in entries], dtype=np.int64)
    items = np.array([key[1] for key, _ in entries], dtype=np.int64)
    ratings = np.array([v[1] for _, v in entries], dtype=np.int64)
    return RatingDataset(users, items, ratings, scale, user_ids, item_ids,
                         duplicates_dropped=duplicates, rejected=rejected)


def cold_start_guard(train, eval):
    """Drop eval interactions whose user or item never occurs in ``train``."""
    keep = _guard_mask(train, eval)
    return eval.subset(np.flatnonzero(keep))


def _guard_mask(train, eval):
    seen_u = np.zeros(max(train.num_users, eval.num_users), dtype=bool)
    seen_i = np.zeros(max(train.num_items, eval.num_items), dtype=bool)
    seen_u[train.users] = True
    seen_i[train.items] = True
    return seen_u[eval.users] & seen_i[eval.items]


@dataclass
class FoldSplit:
    """One cross-validation fold.  ``*_rows`` are positions into ``data``."""

    data: RatingDataset
    fold_id: int
    seed: int
    train_rows: np.ndarray
    validation_rows: np.ndarray
    eval_rows: np.ndarray
    dropped_by_guard: int = 0

    @property
    def train(self):
        return self.data.subset(self.train_rows)

    @property
    def validation(self):
        return self.data.subset(self.validation_rows)

    @property
    def eval(self):
        return self.data.subset(self.eval_rows)

    def manifest(self, k):
        return {
            "fold_id": self.fold_id,
            "k": k,
            "seed": self.seed,
            "counts": {
                "train": int(len(self.train_rows)),
                "validation": int(len(self.validation_rows)),
                "eval": int(len(self.eval_rows)),
            },
            "dropped_by_guard": int(self.dropped_by_guard),
            "train_rows": self.train_rows.tolist(),
            "validation_rows": self.validation_rows.tolist(),
            "eval_rows": self.eval_rows.tolist(),
        }

    @classmethod
    def from_manifest(cls, data, manifest):
        return cls(
            data, int(manifest["fold_id"]), int(manifest["seed"]),
            np.asarray(manifest["train_rows"], dtype=np.int64),
            np.asarray(manifest["validation_rows"], dtype=np.int64),
            np.asarray(manifest["eval_rows"], dtype=np.int64),
            int(manifest["dropped_by_guard"]),
        )


def kfold_split(data, k, seed):
    """Interaction-level ``k``-fold splits.

    For each fold the held-out part becomes the eval set (after the
    cold-start guard) and the remainder is split 95/5 into train and
    validation.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(data) == 0:
        raise ValueError("cannot split an empty dataset")
    if k > len(data):
        raise ValueError(f"k={k} exceeds the {len(data)} available interactions")
    rng = np.random.default_rng(seed)
    folds = np.array_split(rng.permutation(len(data)), k)
    splits = []
    for f in range(k):
        rest = np.concatenate([folds[g] for g in range(k) if g != f])
        n_val = int(round(VALIDATION_FRACTION * len(rest)))
        validation, train = rest[:n_val], rest[n_val:]
        held = folds[f]
        keep = _guard_mask(data.subset(train), data.subset(held))
        splits.append(FoldSplit(data, f, seed, train, validation, held[keep],
                                dropped_by_guard=int((~keep).sum())))
    return splits

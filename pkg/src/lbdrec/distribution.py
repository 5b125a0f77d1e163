"""Discrete rating distributions over a :class:`~lbdrec.dataio.RatingScale`."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import RatingScale

SUM_TOL = 1e-9


def normalize_rows(probs):
    """Clip rounding-level negatives to zero and renormalize each row."""
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum(axis=-1, keepdims=True)


def summarize(probs, scale):
    """Row-wise ``(mean, mode_value, variance)`` of probability vectors."""
    values = scale.values
    mean = probs @ values
    mode = values[np.argmax(probs, axis=-1)]
    dev = values[None, :] - mean[..., None] if probs.ndim == 2 else values - mean
    variance = np.sum(probs * dev * dev, axis=-1)
    return mean, mode, variance


@dataclass(frozen=True)
class DiscreteRatingDistribution:
    probs: np.ndarray
    scale: RatingScale

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (self.scale.n,):
            raise ValueError(f"expected {self.scale.n} probabilities, got shape {p.shape}")
        if np.any(p < 0) or abs(p.sum() - 1.0) > SUM_TOL:
            raise ValueError("probabilities must be nonnegative and sum to one")
        object.__setattr__(self, "probs", p)

    @property
    def mean(self):
        return float(self.probs @ self.scale.values)

    @property
    def mode(self):
        """Most probable scale value; ties go to the lower rating."""
        return float(self.scale.values[int(np.argmax(self.probs))])

    @property
    def variance(self):
        dev = self.scale.values - self.mean
        return float(self.probs @ (dev * dev))

    def prob_at_least(self, threshold):
        return float(self.probs[self.scale.values >= threshold - 1e-9].sum())

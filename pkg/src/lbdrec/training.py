"""Mini-batch Adam with L2 regularization and validation early stopping."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
import logging
import time

import numpy as np

log = logging.getLogger(__name__)

L2_SCHEMES = ("uniform", "frequency_proportional")


class StateError(ValueError):
    """Optimizer state does not match the parameters it is applied to."""


class TrainingDiverged(ArithmeticError):
    """The training loss became non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 50
    batch_size: int = 8192
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    l2_weight: float = 1e-6
    l2_scheme: str = "uniform"
    patience: int = 10
    tolerance: float = 5e-4
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.max_epochs < 0 or self.patience < 0:
            raise ValueError("max_epochs and patience must be nonnegative")
        if self.l2_weight < 0:
            raise ValueError("l2_weight must be nonnegative")
        if self.l2_scheme not in L2_SCHEMES:
            raise ValueError(f"l2_scheme must be one of {L2_SCHEMES}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainState:
    """Adam moments plus early-stopping bookkeeping."""

    m: dict
    v: dict
    step: int = 0
    epoch: int = 0
    best_validation_rmse: float = float("inf")
    epochs_since_improvement: int = 0
    rng_state: dict = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(w) for k, w in params.items()},
                   {k: np.zeros_like(w) for k, w in params.items()})


@dataclass
class TrainResult:
    history: list
    initial_validation_rmse: float
    best_validation_rmse: float
    best_epoch: int
    stopped_early: bool


def adam_step(params, grads, state, config):
    """One bias-corrected Adam update, in place.  Returns ``(params, state)``."""
    if set(grads) - set(params):
        raise StateError(f"gradients for unknown parameters {sorted(set(grads) - set(params))}")
    state.step += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k, g in grads.items():
        w, m, v = params[k], state.m.get(k), state.v.get(k)
        if m is None or m.shape != w.shape or g.shape != w.shape:
            raise StateError(f"shape mismatch for parameter {k!r}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        w -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)
    return params, state


def l2_row_scales(model, train, scheme):
    """Per-row L2 multipliers for each regularized tensor.

    ``uniform`` gives every row weight 1; ``frequency_proportional`` weights a
    row by its training count over the mean count.
    """
    scales = {}
    counts = {"user": train.user_counts(), "item": train.item_counts()}
    for name, owner in model.embedding_groups.items():
        if name not in model.params:
            continue
        rows = model.params[name].shape[0]
        if scheme == "uniform":
            scales[name] = np.ones(rows)
        else:
            c = np.zeros(rows)
            k = min(rows, len(counts[owner]))
            c[:k] = counts[owner][:k]
            scales[name] = c / c.mean() if c.mean() > 0 else c
    return scales


def l2_penalty(params, scales, weight):
    """``weight/2 * sum_rows scale_row * |w_row|^2`` over regularized tensors."""
    total = 0.0
    for name, s in scales.items():
        w = params[name]
        total += 0.5 * weight * float(np.sum(s * np.sum(w * w, axis=1)))
    return total


def add_l2(grads, params, scales, weight):
    if weight == 0:
        return grads
    for name, s in scales.items():
        grads[name] = grads[name] + weight * s[:, None] * params[name]
    return grads


def validation_rmse(model, data):
    pred = model.predict_mean(data.users, data.items)
    err = pred - data.rating_values
    return float(np.sqrt(np.mean(err * err)))


def _sharded_loss_and_grad(model, users, items, ratings, pool, threads):
    """Loss/grad over ``threads`` shards, reduced in shard order."""
    m = len(users)
    bounds = np.linspace(0, m, threads + 1).astype(int)
    parts = [(bounds[s], bounds[s + 1]) for s in range(threads) if bounds[s + 1] > bounds[s]]
    jobs = [pool.submit(model.loss_and_grad, users[a:b], items[a:b], ratings[a:b])
            for a, b in parts]
    loss, grads = 0.0, None
    for (a, b), job in zip(parts, jobs):
        w = (b - a) / m
        part_loss, part_grads = job.result()
        loss += w * part_loss
        if grads is None:
            grads = {k: w * g for k, g in part_grads.items()}
        else:
            for k, g in part_grads.items():
                grads[k] += w * g
    return loss, grads


def train(model, split, config=None, progress=None):
    """Train ``model`` on ``split.train`` with early stopping on ``split.validation``.

    The parameters left in ``model`` are those of the epoch with the lowest
    validation RMSE (possibly the initial ones); ``model.finalize`` is then
    called on the training data.
    """
    config = config or TrainConfig()
    train_data, val_data = split.train, split.validation
    if len(train_data) == 0:
        raise ValueError("training split is empty")
    if len(val_data) == 0:
        log.warning("empty validation split; early stopping falls back to the training data")
        val_data = train_data

    rng = np.random.default_rng(config.seed)
    model.prepare(train_data)
    state = TrainState.zeros_like(model.params)
    scales = l2_row_scales(model, train_data, config.l2_scheme)

    initial = validation_rmse(model, val_data)
    state.best_validation_rmse = initial
    best_params, best_epoch = model.copy_params(), 0
    history = []
    stopped_early = False
    started = time.perf_counter()
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    n = len(train_data)
    try:
        for epoch in range(1, config.max_epochs + 1):
            state.epoch = epoch
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, config.batch_size):
                rows = order[start:start + config.batch_size]
                u, i, r = train_data.users[rows], train_data.items[rows], train_data.ratings[rows]
                if pool is None:
                    loss, grads = model.loss_and_grad(u, i, r)
                else:
                    loss, grads = _sharded_loss_and_grad(model, u, i, r, pool, config.threads)
                if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                    raise TrainingDiverged(
                        f"non-finite loss or gradient at epoch {epoch}, batch "
                        f"{start // config.batch_size} (lr={config.learning_rate})")
                add_l2(grads, model.params, scales, config.l2_weight)
                adam_step(model.params, grads, state, config)
                total += loss * len(rows)
            rmse = validation_rmse(model, val_data)
            if not np.isfinite(rmse):
                raise TrainingDiverged(f"non-finite validation RMSE at epoch {epoch}")
            history.append({"epoch": epoch, "train_loss": total / n,
                            "validation_rmse": rmse,
                            "elapsed_seconds": time.perf_counter() - started})
            if progress is not None:
                progress(history[-1])
            if state.best_validation_rmse - rmse > config.tolerance:
                state.epochs_since_improvement = 0
            else:
                state.epochs_since_improvement += 1
            if rmse < state.best_validation_rmse:
                state.best_validation_rmse = rmse
                best_params, best_epoch = model.copy_params(), epoch
            if state.epochs_since_improvement > config.patience:
                stopped_early = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    state.rng_state = rng.bit_generator.state
    model.params = best_params
    model.finalize(train_data)
    return TrainResult(history, initial, state.best_validation_rmse, best_epoch, stopped_early)

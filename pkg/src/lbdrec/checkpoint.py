"""Self-describing model checkpoints (``.npz`` binary or ``.json``)."""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .dataio import RatingScale
from .registry import build_model

FORMAT_VERSION = 1
_META_KEY = "__meta__"
_PARAM_PREFIX = "param:"


class CheckpointError(ValueError):
    """A checkpoint is malformed or incompatible."""


def config_hash(payload):
    """Short stable digest of a JSON-serializable configuration."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _meta(model, seed, extra):
    meta = {
        "format_version": FORMAT_VERSION,
        "model_kind": model.kind,
        "model_config": model.config_dict(),
        "scale": model.scale.to_dict(),
        "num_users": model.num_users,
        "num_items": model.num_items,
        "seed": seed,
        "extras": model.extras,
    }
    meta.update(extra or {})
    meta.setdefault("config_hash", config_hash(
        {k: meta[k] for k in ("model_kind", "model_config", "scale", "seed")}))
    return meta


def _restore(meta, tensors):
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {meta.get('format_version')!r}")
    kind = meta["model_kind"]
    options = dict(meta["model_config"])
    model = build_model(kind, meta["num_users"], meta["num_items"],
                        RatingScale.from_dict(meta["scale"]), options, seed=meta.get("seed") or 0)
    missing = set(model.params) - set(tensors)
    unexpected = set(tensors) - set(model.params)
    if missing or unexpected:
        raise CheckpointError(f"parameter mismatch: missing {sorted(missing)}, "
                              f"unexpected {sorted(unexpected)}")
    for k, v in tensors.items():
        if v.shape != model.params[k].shape:
            raise CheckpointError(f"shape mismatch for {k!r}: {v.shape} vs {model.params[k].shape}")
        model.params[k] = v
    model.extras = dict(meta.get("extras") or {})
    return model, meta


def save_checkpoint(model, path, seed=None, extra=None):
    """Write ``model`` to ``path``; the format follows the extension."""
    meta = _meta(model, seed, extra)
    path = str(path)
    if path.endswith(".json"):
        payload = {"meta": meta,
                   "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                              for k, v in model.params.items()}}
        with open(path, "w") as fh:
            json.dump(payload, fh, sort_keys=True)
        return meta
    arrays = {_PARAM_PREFIX + k: v for k, v in model.params.items()}
    arrays[_META_KEY] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return meta


def load_checkpoint(path):
    """Return ``(model, meta)``."""
    path = str(path)
    try:
        if path.endswith(".json"):
            with open(path) as fh:
                payload = json.load(fh)
            tensors = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"])
                       for k, v in payload["params"].items()}
            return _restore(payload["meta"], tensors)
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z[_META_KEY]))
            tensors = {k[len(_PARAM_PREFIX):]: z[k] for k in z.files if k != _META_KEY}
        return _restore(meta, tensors)
    except (KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: not a valid checkpoint ({exc})") from exc

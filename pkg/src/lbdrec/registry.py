"""Model construction by kind name."""

from __future__ import annotations

from .baselines import CmfModel, MfModel, OrdRecModel
from .lbd import LbdConfig, LbdModel

MODEL_KINDS = ("mf", "cmf", "ordrec-u", "ordrec-ui", "lbd-s", "lbd-a")

# Desk-scale preset used by the CLI when neither a config file nor a flag
# sets the value.  The library defaults (D=512, lr 1e-3, l2 1e-6) target
# MovieLens 10M; on 100K these settle faster and regularize harder.
DESK_MODEL_DEFAULTS = {"embedding_dim": 64, "bias_scheme": "mu_nu"}
DESK_TRAIN_DEFAULTS = {"learning_rate": 1e-2, "l2_weight": 1e-4}


def build_model(kind, num_users, num_items, scale, options=None, seed=0):
    """Instantiate a model; ``options`` is the model-specific config block."""
    options = dict(options or {})
    if kind in ("lbd-s", "lbd-a"):
        binning = "adaptive" if kind == "lbd-a" else "static"
        if options.setdefault("binning", binning) != binning:
            raise ValueError(f"{kind} requires binning={binning!r}")
        return LbdModel(num_users, num_items, scale, LbdConfig(**options), seed=seed)
    dim = int(options.pop("embedding_dim", 64))
    if kind == "mf":
        cls, extra = MfModel, {}
    elif kind == "cmf":
        cls, extra = CmfModel, {}
    elif kind in ("ordrec-u", "ordrec-ui"):
        variant = options.pop("variant", kind.split("-")[1].upper())
        if variant.lower() != kind.split("-")[1]:
            raise ValueError(f"{kind} requires variant {kind.split('-')[1].upper()!r}")
        cls, extra = OrdRecModel, {"variant": variant}
    else:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    if options:
        raise ValueError(f"unknown options for {kind}: {sorted(options)}")
    return cls(num_users, num_items, scale, embedding_dim=dim, seed=seed, **extra)

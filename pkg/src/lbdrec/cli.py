"""Command-line entry point: ``lbdrec {split,train,evaluate,targeted,sweep}``."""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
import time

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .checkpoint import CheckpointError, config_hash, load_checkpoint, save_checkpoint
from .dataio import FoldSplit, RatingDataset, RatingScale, RecordError, kfold_split, parse_ratings
from .evaluation import (
    evaluate as evaluate_model, predict_records, profile_to_csv, variance_binned_profile,
)
from .registry import DESK_MODEL_DEFAULTS, DESK_TRAIN_DEFAULTS, MODEL_KINDS, build_model
from .targeted import run_targeted
from .training import TrainConfig, TrainingDiverged, train

log = logging.getLogger("lbdrec")

DATA_ENV = "LBDREC_DATA_DIR"
EXIT_USAGE = 2
EXIT_DIVERGED = 3

# flag name -> TrainConfig field
TRAIN_FLAGS = {
    "lr": "learning_rate", "epochs": "max_epochs", "batch_size": "batch_size",
    "l2": "l2_weight", "l2_scheme": "l2_scheme", "patience": "patience",
    "tolerance": "tolerance", "seed": "seed", "threads": "threads",
}
MODEL_FLAGS = {
    "dim": "embedding_dim", "confidence_fn": "confidence_fn", "bias_scheme": "bias_scheme",
}


class InputMissing(FileNotFoundError):
    pass


def fmt(v):
    """Six significant digits for console output."""
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def resolve_input(path):
    """``path`` as given, else relative to ``$LBDREC_DATA_DIR``."""
    if os.path.exists(path):
        return path
    base = os.environ.get(DATA_ENV)
    if base and not os.path.isabs(path) and os.path.exists(os.path.join(base, path)):
        return os.path.join(base, path)
    raise InputMissing(f"input not found: {path}")


def load_config_file(path):
    if path is None:
        return {}
    path = resolve_input(path)
    with open(path, "rb") as fh:
        if path.endswith(".toml"):
            return tomllib.load(fh)
        return json.load(fh)


def experiment_config(args):
    """Merge a config file with command-line overrides.

    Top-level keys are TrainConfig fields; an optional ``model`` table holds
    model options and ``model_kind`` the model name.
    """
    cfg = load_config_file(getattr(args, "config", None))
    model_opts = dict(cfg.pop("model", {}))
    kind = cfg.pop("model_kind", None)
    if getattr(args, "model", None):
        kind = args.model
    for flag, key in TRAIN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            cfg[key] = v
    for flag, key in MODEL_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            model_opts[key] = v
    if kind is None:
        raise ValueError("no model kind given (--model or model_kind in the config file)")
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    if kind.startswith("lbd"):
        for key, v in DESK_MODEL_DEFAULTS.items():
            model_opts.setdefault(key, v)
        for key, v in DESK_TRAIN_DEFAULTS.items():
            cfg.setdefault(key, v)
    return kind, model_opts, TrainConfig.from_dict(cfg)


# -- split -------------------------------------------------------------------

def _fold_path(split_dir, fold):
    return os.path.join(split_dir, f"fold_{fold}.json")


def load_fold(split_dir, fold):
    ds_path = os.path.join(split_dir, "dataset.npz")
    manifest_path = _fold_path(split_dir, fold)
    for p in (ds_path, manifest_path):
        if not os.path.exists(p):
            raise InputMissing(f"split artifact not found: {p} (run `lbdrec split` first)")
    data = RatingDataset.load(ds_path)
    with open(manifest_path) as fh:
        return FoldSplit.from_manifest(data, json.load(fh))


def cmd_split(args):
    src = resolve_input(args.data)
    scale = RatingScale.parse(args.scale)
    sep = "," if args.format == "csv" else args.sep.encode().decode("unicode_escape")
    data = parse_ratings(src, scale, sep=sep, strict=not args.lenient)
    splits = kfold_split(data, args.k, args.seed)
    os.makedirs(args.out, exist_ok=True)
    data.save(os.path.join(args.out, "dataset.npz"))
    for s in splits:
        with open(_fold_path(args.out, s.fold_id), "w") as fh:
            json.dump(s.manifest(args.k), fh, sort_keys=True)
    summary = {"source": os.path.abspath(src), "k": args.k, "seed": args.seed,
               "interactions": len(data), "users": data.num_users, "items": data.num_items,
               "duplicates_dropped": data.duplicates_dropped, "rejected": data.rejected}
    with open(os.path.join(args.out, "split.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(f"{len(data)} interactions, {data.num_users} users, {data.num_items} items, "
          f"{args.k} folds -> {args.out}")
    return 0


# -- train -------------------------------------------------------------------

def _train_one(kind, model_opts, tcfg, split, init_from=None):
    data = split.data
    model = build_model(kind, data.num_users, data.num_items, data.scale, model_opts,
                        seed=tcfg.seed)
    if kind == "cmf":
        if init_from is None:
            raise InputMissing("cmf training needs a trained MF checkpoint to initialize "
                               "from (--init-from)")
        mf, _ = load_checkpoint(resolve_input(init_from))
        if mf.kind != "mf":
            raise ValueError(f"--init-from must be an MF checkpoint, got {mf.kind}")
        model.init_from(mf)
    started = time.perf_counter()
    result = train(model, split, tcfg)
    return model, result, time.perf_counter() - started


def _write_history(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "validation_rmse", "elapsed_seconds"])
        for h in history:
            w.writerow([h["epoch"], repr(h["train_loss"]), repr(h["validation_rmse"]),
                        repr(h["elapsed_seconds"])])


def cmd_train(args):
    kind, model_opts, tcfg = experiment_config(args)
    split = load_fold(args.split_dir, args.fold)
    model, result, wall = _train_one(kind, model_opts, tcfg, split, args.init_from)
    os.makedirs(args.out, exist_ok=True)
    run_cfg = {"model_kind": kind, "model": model_opts, "train": tcfg.to_dict(),
               "fold": args.fold}
    digest = config_hash(run_cfg)
    save_checkpoint(model, os.path.join(args.out, "model.npz"), seed=tcfg.seed,
                    extra={"config_hash": digest, "fold": args.fold})
    _write_history(os.path.join(args.out, "history.csv"), result.history)
    meta = {"config": run_cfg, "config_hash": digest, "seed": tcfg.seed,
            "wall_seconds": wall, "best_epoch": result.best_epoch,
            "initial_validation_rmse": result.initial_validation_rmse,
            "final_validation_rmse": result.best_validation_rmse,
            "epochs_run": len(result.history), "stopped_early": result.stopped_early}
    with open(os.path.join(args.out, "run.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    print(f"{kind} fold {args.fold}: best validation RMSE {fmt(result.best_validation_rmse)} "
          f"at epoch {result.best_epoch} ({len(result.history)} epochs)")
    return 0


# -- evaluate ----------------------------------------------------------------

def _load_for_fold(ckpt, split):
    model, meta = load_checkpoint(resolve_input(ckpt))
    if model.scale != split.data.scale:
        raise ValueError(f"checkpoint scale {model.scale} does not match data scale "
                         f"{split.data.scale}")
    if (model.num_users, model.num_items) != (split.data.num_users, split.data.num_items):
        raise ValueError("checkpoint dimensions do not match the dataset")
    return model, meta


def cmd_evaluate(args):
    split = load_fold(args.split_dir, args.fold)
    model, meta = _load_for_fold(args.checkpoint, split)
    report, records = evaluate_model(model, split.eval, ks=tuple(args.k), gain=args.gain)
    report.meta = {"fold": args.fold, "config_hash": meta.get("config_hash"),
                   "seed": meta.get("seed"), "gain": args.gain}
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        fh.write(report.to_json())
    if args.profiles and model.kind != "mf":
        for kind in ("equispaced", "quantile"):
            rows = variance_binned_profile(records, kind, args.bins, args.outlier_discard)
            with open(os.path.join(args.out, f"profile_{kind}.csv"), "w") as fh:
                fh.write(profile_to_csv(rows))
    for k, v in report.to_dict().items():
        if k == "meta":
            continue
        if isinstance(v, dict):
            v = ", ".join(f"@{kk}={fmt(vv)}" for kk, vv in v.items())
        print(f"{k}: {fmt(v)}")
    return 0


# -- targeted ----------------------------------------------------------------

def cmd_targeted(args):
    split = load_fold(args.split_dir, args.fold)
    results = []
    for ckpt in args.checkpoint:
        model, _ = _load_for_fold(ckpt, split)
        records = predict_records(model, split.eval)
        results.append(run_targeted(records, args.n or None, model_kind=model.kind))
    mf = next((r for r in results if r.model_kind == "mf"), None)
    os.makedirs(args.out, exist_ok=True)
    for r in results:
        if mf is not None and r is not mf:
            r.with_gain(mf)
        with open(os.path.join(args.out, f"targeted_{r.model_kind}.csv"), "w") as fh:
            fh.write(r.to_csv())
        cells = ", ".join(f"N={n}: {fmt(p)}" for n, p in zip(r.n_values, r.precision))
        print(f"{r.model_kind}: {cells}" + (" (grid truncated)" if r.truncated else ""))
    return 0


# -- sweep -------------------------------------------------------------------

def parse_grid(text):
    """``"learning_rate=1e-3,1e-2;l2_weight=1e-6"`` -> list of override dicts."""
    axes = []
    for part in filter(None, (p.strip() for p in text.split(";"))):
        key, _, values = part.partition("=")
        if not values:
            raise ValueError(f"bad grid axis {part!r}")
        axes.append([(key.strip(), json.loads(v)) for v in values.split(",")])
    if not axes:
        raise ValueError("empty sweep grid")
    return [dict(combo) for combo in itertools.product(*axes)]


def cmd_sweep(args):
    kind, model_opts, base = experiment_config(args)
    split = load_fold(args.split_dir, 0)
    rows = []
    train_keys = set(base.to_dict())
    for point in parse_grid(args.grid):
        opts = dict(model_opts)
        tdict = base.to_dict()
        for k, v in point.items():
            (tdict if k in train_keys else opts)[k] = v
        label = json.dumps(point, sort_keys=True)
        try:
            _, result, wall = _train_one(kind, opts, TrainConfig.from_dict(tdict), split,
                                         args.init_from)
            rows.append({"point": label, "validation_rmse": result.best_validation_rmse,
                         "best_epoch": result.best_epoch, "status": "ok"})
        except (TrainingDiverged, FloatingPointError, ValueError) as exc:
            rows.append({"point": label, "validation_rmse": float("nan"), "best_epoch": -1,
                         "status": f"failed: {exc}"})
        print(f"{label}: {rows[-1]['status']} {fmt(rows[-1]['validation_rmse'])}")
    rows.sort(key=lambda r: (r["status"] != "ok", r["validation_rmse"]
                             if r["status"] == "ok" else 0.0))
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "validation_rmse", "best_epoch", "status"])
        for r in rows:
            w.writerow([r["point"], repr(r["validation_rmse"]), r["best_epoch"], r["status"]])
    return 0


# -- parser --------------------------------------------------------------------

def _add_train_flags(p):
    p.add_argument("--config", help="JSON or TOML file with TrainConfig keys")
    p.add_argument("--model", choices=MODEL_KINDS)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--l2-scheme", choices=("uniform", "frequency_proportional"))
    p.add_argument("--patience", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--deterministic", action="store_true",
                   help="accepted for clarity; shard reduction is always fixed-order")
    p.add_argument("--dim", type=int)
    p.add_argument("--confidence-fn", choices=("norm", "sum", "dot"))
    p.add_argument("--bias-scheme", choices=("none", "alpha_beta", "mu_nu"))
    p.add_argument("--init-from", help="MF checkpoint used to initialize CMF")


def build_parser():
    parser = argparse.ArgumentParser(prog="lbdrec", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="parse ratings and write k-fold manifests")
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=("delimited", "csv"), default="delimited")
    p.add_argument("--sep", default="::")
    p.add_argument("--scale", default="0.5,5,10", help="r_min,r_max,n")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lenient", action="store_true", help="skip off-scale records")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one model on one fold")
    p.add_argument("--split-dir", required=True)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metrics and variance profiles on a fold's eval set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split-dir", required=True)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, nargs="+", default=[3, 10], help="NDCG cutoffs")
    p.add_argument("--gain", choices=("linear", "exponential"), default="linear")
    p.add_argument("--profiles", action="store_true")
    p.add_argument("--bins", type=int, default=1000)
    p.add_argument("--outlier-discard", type=float, default=0.001)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("targeted", help="Precision@1 for the top-N targeted users")
    p.add_argument("--checkpoint", required=True, nargs="+")
    p.add_argument("--split-dir", required=True)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--n", type=int, nargs="*")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_targeted)

    p = sub.add_parser("sweep", help="grid search on the first fold")
    p.add_argument("--split-dir", required=True)
    p.add_argument("--grid", required=True,
                   help='e.g. "learning_rate=1e-3,1e-2;l2_weight=1e-6,1e-4"')
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputMissing as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (RecordError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

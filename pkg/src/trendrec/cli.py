"""Command-line surface: synth, validate, train, eval, export.

Configuration comes from an optional flat key=value file plus flag
overrides; the resolved values, input digests, and phase timings land
in a manifest next to each command's outputs, so no run depends on
silent defaults. Exit codes: 0 success, 1 validation failure, 2
runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (cold_items, load_interactions, load_taxonomy,
                      split_leave_one_out, write_interactions, write_taxonomy)
from .errors import IncompatibleDataError, ValidationError
from .evaluation import (auc, pop_params, write_dimension_csv, write_heatmap_csv,
                         write_per_user_csv, write_report, write_style_csv,
                         write_weight_csv)
from .features import load_features, write_features
from .model import (Checkpoint, Model, TrainConfig, load_checkpoint,
                    save_checkpoint, variant_flags)
from .segmentation import EpochSegmentation, write_segments
from .synthetic import SynthConfig, generate, write_truth
from .trainer import coordinate_ascent

logger = logging.getLogger(__name__)

_CONFIG_FLAGS = {
    # flag dest -> TrainConfig field
    "variant": "variant",
    "dims": "latent_dims",
    "visual_dims": "visual_dims",
    "epochs": "num_epochs",
    "bins": "num_bins",
    "lr": "learning_rate",
    "lambda_theta": "lambda_theta",
    "lambda_temporal": "lambda_temporal",
    "iterations": "iterations",
    "patience": "patience",
    "seed": "seed",
    "threads": "threads",
    "neg_batch": "seg_negatives",
}


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _read_config_file(path):
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
            key, raw = (part.strip() for part in line.split("=", 1))
            values[key] = raw
    return values


def _coerce(field_name, raw):
    kind = TrainConfig.__dataclass_fields__[field_name].type
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def _resolve_train_config(args, feature_dim):
    values = {}
    if args.config:
        for key, raw in _read_config_file(args.config).items():
            if key not in TrainConfig.__dataclass_fields__:
                raise ValidationError(f"unknown config key {key!r} in {args.config}")
            values[key] = _coerce(key, raw)
    for flag, field_name in _CONFIG_FLAGS.items():
        val = getattr(args, flag)
        if val is not None:
            values[field_name] = val
    values["feature_dim"] = feature_dim
    config = TrainConfig(**values)
    config.validate()
    if config.threads > 1:
        logger.warning("this build runs single-threaded; --threads %d recorded but unused",
                       config.threads)
    return config


def _add_data_args(p, features_required=True):
    p.add_argument("--interactions", required=True, help="interaction TSV file")
    p.add_argument("--features", required=features_required, help="feature text file")
    p.add_argument("--taxonomy", help="item category TSV file")


def _load_data(args, flags=None):
    """Load the log, plus features/taxonomy when the variant needs them."""
    log = load_interactions(args.interactions)
    store = None
    taxonomy = None
    need_features = flags is None or flags.use_visual
    need_taxonomy = flags is None or flags.use_taxonomy
    if need_features and args.features:
        store = load_features(args.features, log.item_index)
    elif need_features and flags is not None:
        raise ValidationError("this variant needs --features")
    if args.taxonomy:
        taxonomy = load_taxonomy(args.taxonomy, log.item_index)
    elif need_taxonomy and flags is not None:
        raise ValidationError("this variant needs --taxonomy")
    return log, store, taxonomy


def cmd_synth(args):
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    boundaries = tuple(int(b) for b in args.boundaries.split(",")) if args.boundaries else ()
    config = SynthConfig(
        num_users=args.users, num_items=args.items, num_events=args.events,
        feature_dim=args.feature_dim, true_visual_dims=args.true_dims,
        epoch_boundaries=boundaries, t_start=args.t_start, t_end=args.t_end,
        feature_density=args.density, num_categories=args.categories,
        temperature=args.temperature, taste_mean_scale=args.taste_mean,
        taste_scale=args.taste_scale, seed=args.seed,
    )
    t0 = time.time()
    log, store, taxonomy, truth = generate(config)
    write_interactions(log, out / "interactions.tsv")
    write_features(store, log.item_ids, out / "features.txt")
    write_taxonomy(taxonomy, log.item_ids, out / "taxonomy.tsv")
    write_truth(truth, out / "truth.json")
    manifest = {
        "command": "synth",
        "package_version": __version__,
        "config": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                   for k, v in vars(config).items()},
        "outputs": {name: str(out / name) for name in
                    ("interactions.tsv", "features.txt", "taxonomy.tsv", "truth.json")},
        "stats": {"users": log.num_users, "items": log.num_items, "events": log.num_events},
        "timings": {"generate_s": round(time.time() - t0, 3)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(f"wrote {log.num_events} events for {log.num_users} users / "
          f"{log.num_items} items to {out}")
    return 0


def cmd_validate(args):
    log = load_interactions(args.interactions, min_actions=args.min_actions)
    print(f"interactions\tusers={log.num_users}\titems={log.num_items}\t"
          f"events={log.num_events}\ttimeline=[{log.t_min}, {log.t_max}]")
    if args.features:
        store = load_features(args.features, log.item_index)
        print(f"features\tdim={store.dim}\tdensity={store.density:.4f}")
    if args.taxonomy:
        taxonomy = load_taxonomy(args.taxonomy, log.item_index)
        known = int(np.count_nonzero(taxonomy.category_of))
        print(f"taxonomy\tcategories={taxonomy.num_categories - 1}\t"
              f"covered={known}/{log.num_items}")
    print("ok")
    return 0


def cmd_train(args):
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.time()
    flags = variant_flags(args.variant) if args.variant else None
    probe = args.variant or "tvbpr+"
    log, store, taxonomy = _load_data(args, variant_flags(probe))
    timings["load_s"] = round(time.time() - t0, 3)

    config = _resolve_train_config(args, store.dim if store is not None else 0)
    flags = config.flags
    t0 = time.time()
    split = split_leave_one_out(log, config.seed)
    timings["split_s"] = round(time.time() - t0, 3)

    t0 = time.time()
    log_path = out / "train.log"
    if config.variant == "pop":
        params = pop_params(split)
        seg = EpochSegmentation.initial(split.t_min, split.t_max, 1, 1)
        log_path.write_text("")
    else:
        with open(log_path, "w", encoding="utf-8") as fh:
            def progress(rec):
                line = f"{rec.iteration}\t{rec.objective:.6f}\t{rec.val_auc:.6f}"
                print(line)
                fh.write(line + "\n")
            params, seg, _history = coordinate_ascent(split, store, taxonomy, config,
                                                      progress=progress)
    timings["train_s"] = round(time.time() - t0, 3)

    checkpoint = Checkpoint(
        params=params, segmentation=seg, config=config,
        user_ids=log.user_ids, item_ids=log.item_ids,
        category_ids=taxonomy.category_ids if taxonomy is not None else [],
    )
    save_checkpoint(checkpoint, out / "checkpoint.bin")
    write_segments(seg, out / "segments.tsv")
    inputs = {"interactions": _sha256(args.interactions)}
    if args.features:
        inputs["features"] = _sha256(args.features)
    if args.taxonomy:
        inputs["taxonomy"] = _sha256(args.taxonomy)
    manifest = {
        "command": "train",
        "package_version": __version__,
        "config": config.as_dict(),
        "inputs": inputs,
        "artifacts": {
            "checkpoint": str(out / "checkpoint.bin"),
            "segments": str(out / "segments.tsv"),
            "train_log": str(log_path),
        },
        "timings": timings,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(f"checkpoint written to {out / 'checkpoint.bin'}")
    return 0


def _load_for_checkpoint(args, checkpoint):
    log = load_interactions(args.interactions)
    if log.user_ids != checkpoint.user_ids or log.item_ids != checkpoint.item_ids:
        raise IncompatibleDataError(
            "dataset does not match the checkpoint's ID maps; "
            "re-run training or point at the original files")
    flags = checkpoint.params.variant
    store = None
    if flags.use_visual:
        if not args.features:
            raise ValidationError("this checkpoint needs --features")
        store = load_features(args.features, log.item_index)
        if store.dim != checkpoint.params.feature_dim:
            raise IncompatibleDataError(
                f"feature dim {store.dim} != checkpoint's {checkpoint.params.feature_dim}")
    categories = None
    if flags.use_taxonomy:
        if not args.taxonomy:
            raise ValidationError("this checkpoint needs --taxonomy")
        taxonomy = load_taxonomy(args.taxonomy, log.item_index)
        if taxonomy.category_ids != checkpoint.category_ids:
            raise IncompatibleDataError("taxonomy does not match the checkpoint's categories")
        categories = taxonomy.category_of
    return log, Model(checkpoint.params, features=store, categories=categories)


def cmd_eval(args):
    checkpoint = load_checkpoint(args.checkpoint)
    log, model = _load_for_checkpoint(args, checkpoint)
    split = split_leave_one_out(log, checkpoint.config.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    modes = ["all", "cold"] if args.mode == "both" else [args.mode]
    for mode in modes:
        report = auc(model, checkpoint.segmentation, split, mode=mode,
                     cold_threshold=args.cold_threshold)
        write_report(report, out / f"report_{mode}.tsv")
        if args.per_user:
            write_per_user_csv(report, log.user_ids, out / f"per_user_{mode}.csv")
        print(f"{mode}\tauc={report.auc:.6f}\tusers={report.num_users_evaluated}")
    return 0


def cmd_export(args):
    checkpoint = load_checkpoint(args.checkpoint)
    log, model = _load_for_checkpoint(args, checkpoint)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    what = args.what
    if what == "segments":
        write_segments(checkpoint.segmentation, out / "segments.tsv")
    elif what == "dims":
        write_dimension_csv(model, log.item_ids, out / "dimensions.csv", top_n=args.top)
        if checkpoint.params.variant.use_temporal_visual:
            write_weight_csv(checkpoint.params, out / "dimension_weights.csv")
    elif what == "heatmap":
        write_heatmap_csv(model, log.item_ids, out / "heatmap.csv")
    elif what == "styles":
        write_style_csv(model, log.item_ids, out / "styles.csv")
    else:
        raise ValidationError(f"unknown export {what!r}")
    print(f"export {what} written to {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="trendrec",
        description="Train and evaluate temporally-evolving visually-aware rankers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--output", required=True)
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=500)
    p.add_argument("--events", type=int, default=4000)
    p.add_argument("--feature-dim", type=int, default=64)
    p.add_argument("--true-dims", type=int, default=4)
    p.add_argument("--boundaries", help="comma-separated interior epoch boundaries")
    p.add_argument("--t-start", type=int, default=0)
    p.add_argument("--t-end", type=int, default=30_000_000)
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--categories", type=int, default=6)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--taste-mean", type=float, default=1.5)
    p.add_argument("--taste-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="check data files and print stats")
    p.add_argument("--interactions", required=True)
    p.add_argument("--features")
    p.add_argument("--taxonomy")
    p.add_argument("--min-actions", type=int, default=5)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="fit a model variant")
    _add_data_args(p, features_required=False)
    p.add_argument("--output", required=True)
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--variant", choices=["pop", "bpr-mf", "bpr-tmf", "vbpr", "tvbpr", "tvbpr+"])
    p.add_argument("--dims", type=int)
    p.add_argument("--visual-dims", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda", type=float, dest="lambda_theta")
    p.add_argument("--lambda-temporal", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--neg-batch", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    _add_data_args(p, features_required=False)
    p.add_argument("--output", required=True)
    p.add_argument("--mode", choices=["all", "cold", "both"], default="both")
    p.add_argument("--cold-threshold", type=int, default=5)
    p.add_argument("--per-user", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="write plot-ready CSV exports")
    p.add_argument("what", choices=["dims", "heatmap", "styles", "segments"])
    p.add_argument("--checkpoint", required=True)
    _add_data_args(p, features_required=False)
    p.add_argument("--output", required=True)
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        logger.exception("command failed: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())

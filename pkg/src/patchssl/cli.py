"""Command-line entry point.

Subcommands: gen-data, filter, train, ssl-train, predict, tta-predict,
ensemble, eval, dump-schedule. Every run derives all randomness from one
--seed, writes its resolved config next to its outputs, and stamps each
artifact with tool version, seed and config hash, so rerunning a command
with identical inputs reproduces identical bytes.

Exit status: 0 on success, 2 for usage/validation/config errors, 1 for
numeric failures at runtime.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import config as cfgmod
from . import schedule
from .data import (Dataset, DatasetError, UNLABELED, filter_outliers,
                   generate_synthetic, is_labeled, label_value, load_dataset,
                   save_dataset, split)
from .infer import (ensemble_predict, get_preset, load_predictions,
                    predictions_csv, tta_predict)
from .metrics import MetricError, auc, roc_points
from .model import (ValidationError, ConfigError, load_checkpoint,
                    save_checkpoint)
from .numerics import NumericError, Rng, ShapeError, derive_seed
from .pseudolabel import predict_examples, run_ssl

USAGE_ERRORS = (cfgmod.ConfigFileError, DatasetError, ValidationError,
                ConfigError, MetricError, ShapeError, ValueError, OSError)


def _write_text(path, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(text)


def _gen_params(args) -> dict:
    return {
        "gen": {
            "n": args.n, "positive_frac": args.positive_frac,
            "patch_size": args.patch_size, "channels": args.channels,
            "noise": args.noise, "unlabeled_frac": args.unlabeled_frac,
        }
    }


def cmd_gen_data(args) -> int:
    meta = cfgmod.metadata_line(args.seed, _gen_params(args))
    d = generate_synthetic(args.n, args.positive_frac, args.patch_size,
                           args.noise, Rng(derive_seed(args.seed, "data")),
                           channels=args.channels)
    if args.unlabeled_frac > 0:
        keep, strip = split(d, args.unlabeled_frac, Rng(derive_seed(args.seed, "unlabel")))
        examples = {e.id: e for e in keep}
        examples.update({e.id: e.with_label(UNLABELED) for e in strip})
        d = Dataset([examples[e.id] for e in d], d.split_tag)
    path = save_dataset(d, args.out, metadata_line=meta)
    print(f"wrote {len(d)} examples to {path}")
    return 0


def cmd_filter(args) -> int:
    d = load_dataset(args.manifest)
    kept, removed = filter_outliers(d, args.white_thresh, args.black_thresh,
                                    args.white_level, args.black_level)
    meta = cfgmod.metadata_line(args.seed, {"filter": {
        "white_thresh": args.white_thresh, "black_thresh": args.black_thresh,
        "white_level": args.white_level, "black_level": args.black_level}})
    save_dataset(kept, os.path.join(args.out, "kept"), metadata_line=meta)
    save_dataset(removed, os.path.join(args.out, "removed"), metadata_line=meta)
    print(f"kept {len(kept)}, removed {len(removed)}")
    return 0


def _training_overrides(args) -> dict:
    return {
        "train.runs": getattr(args, "runs", None),
        "train.epochs": args.epochs,
        "train.batch_size": args.batch_size,
        "train.lr_max": args.lr_max,
        "pseudo.alpha_final": getattr(args, "alpha_final", None),
    }


def _run_training(args, forced: dict | None = None) -> int:
    file_cfg = cfgmod.load_toml(args.config) if args.config else {}
    overrides = _training_overrides(args)
    overrides.update(forced or {})
    resolved = cfgmod.resolve(file_cfg, overrides)
    meta_line = cfgmod.metadata_line(args.seed, resolved)
    meta = {"tool_version": cfgmod.TOOL_VERSION, "seed": args.seed,
            "config": cfgmod.config_hash(resolved)}

    experiment = cfgmod.build_experiment(resolved, args.seed)
    result = run_ssl(experiment)

    os.makedirs(args.out, exist_ok=True)
    _write_text(os.path.join(args.out, "resolved_config.toml"),
                "# " + meta_line + "\n" + cfgmod.dump_toml(resolved, seed=args.seed))
    _write_text(os.path.join(args.out, "history.jsonl"),
                result.history.to_jsonl(metadata=meta))
    save_checkpoint(result.network, os.path.join(args.out, "final.ckpt"), meta=meta)
    best_net = result.network
    saved_params = best_net.params
    best_net.params = result.best_params
    save_checkpoint(best_net, os.path.join(args.out, "best.ckpt"), meta=meta)
    best_net.params = saved_params
    h = result.history
    print(f"runs={len(h.pseudo_counts)} best_val_auc={h.best_val_auc:.4f} "
          f"final_val_auc={h.final_val_auc:.4f}")
    return 0


def cmd_train(args) -> int:
    return _run_training(args, forced={"train.runs": 1, "pseudo.alpha_final": 0.0})


def cmd_ssl_train(args) -> int:
    return _run_training(args)


def _load_eval_pair(preds_path, manifest_path):
    preds = load_predictions(preds_path)
    d = load_dataset(manifest_path)
    scores, labels = [], []
    for e in d:
        if not is_labeled(e.label):
            continue
        if e.id not in preds:
            raise DatasetError(f"no prediction for labeled example {e.id!r}")
        scores.append(preds[e.id])
        labels.append(label_value(e.label))
    return scores, labels


def _predict_common(args, use_tta: bool) -> int:
    net = load_checkpoint(args.ckpt).eval()
    d = load_dataset(args.manifest)
    meta = cfgmod.metadata_line(args.seed, {"predict": {
        "ckpt": os.path.basename(args.ckpt),
        "preset": getattr(args, "preset", "") if use_tta else ""}})
    if use_tta:
        preset = get_preset(args.preset)
        preds = {e.id: tta_predict(net, e, preset) for e in d}
    else:
        probs = predict_examples(net, list(d))
        preds = {e.id: float(p) for e, p in zip(d, probs)}
    _write_text(args.out, predictions_csv(preds, metadata_line=meta))
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_predict(args) -> int:
    return _predict_common(args, use_tta=False)


def cmd_tta_predict(args) -> int:
    return _predict_common(args, use_tta=True)


def cmd_ensemble(args) -> int:
    tables = [load_predictions(p) for p in args.preds]
    ids = list(tables[0])
    idset = set(ids)
    for path, table in zip(args.preds, tables):
        if set(table) != idset:
            raise ValidationError(f"prediction files disagree on ids (first mismatch: {path})")
    weights = args.weights
    if weights is not None and len(weights) != len(tables):
        raise ValidationError(f"{len(weights)} weights for {len(tables)} prediction files")
    meta = cfgmod.metadata_line(args.seed, {"ensemble": {
        "files": [os.path.basename(p) for p in args.preds],
        "weights": weights or []}})
    out = {eid: ensemble_predict([t[eid] for t in tables], weights) for eid in ids}
    _write_text(args.out, predictions_csv(out, metadata_line=meta))
    print(f"ensembled {len(tables)} files over {len(ids)} ids")
    return 0


def cmd_eval(args) -> int:
    scores, labels = _load_eval_pair(args.preds, args.manifest)
    curve = roc_points(scores, labels)
    value = auc(scores, labels)
    params = {"eval": {"preds": os.path.basename(args.preds),
                       "manifest": os.path.basename(args.manifest)}}
    meta = cfgmod.metadata_line(args.seed, params)
    os.makedirs(args.out, exist_ok=True)
    roc_lines = ["# " + meta, "fpr,tpr"]
    roc_lines += [f"{repr(x)},{repr(y)}" for x, y in curve.points]
    _write_text(os.path.join(args.out, "roc.csv"), "\n".join(roc_lines) + "\n")
    n_pos = int(sum(labels))
    summary = {"auc": value, "n_pos": n_pos, "n_neg": len(labels) - n_pos,
               "tool_version": cfgmod.TOOL_VERSION, "seed": args.seed,
               "config": cfgmod.config_hash(params)}
    _write_text(os.path.join(args.out, "summary.json"),
                json.dumps(summary, sort_keys=True) + "\n")
    print(f"auc={value:.6f} n_pos={n_pos} n_neg={len(labels) - n_pos}")
    return 0


def cmd_dump_schedule(args) -> int:
    cfg = schedule.OneCycleConfig(
        total_iterations=args.total, step_size=args.step, lr_max=args.lr_max,
        lr_min=args.lr_min, final_lr=args.final_lr,
        momentum_high=args.momentum_high, momentum_low=args.momentum_low)
    meta = cfgmod.metadata_line(args.seed, {"schedule": {
        "total": args.total, "step": args.step, "lr_max": args.lr_max}})
    _write_text(args.out, schedule.dump_csv(cfg, metadata_line="# " + meta))
    print(f"wrote {args.total} schedule rows to {args.out}")
    return 0


def _add_seed_out(p, out_help: str):
    p.add_argument("--seed", type=int, default=0, help="root seed for all randomness")
    p.add_argument("--out", required=True, help=out_help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchssl")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic patch dataset")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--positive-frac", type=float, default=0.5)
    p.add_argument("--patch-size", type=int, default=16)
    p.add_argument("--channels", type=int, default=1, choices=(1, 3))
    p.add_argument("--noise", type=float, default=0.25)
    p.add_argument("--unlabeled-frac", type=float, default=0.0,
                   help="strip labels from this fraction of examples")
    _add_seed_out(p, "output directory for manifest and patches")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("filter", help="split a dataset into kept/removed by outlier rule")
    p.add_argument("--manifest", required=True)
    p.add_argument("--white-thresh", type=float, default=0.95)
    p.add_argument("--black-thresh", type=float, default=0.95)
    p.add_argument("--white-level", type=float, default=0.96)
    p.add_argument("--black-level", type=float, default=0.04)
    _add_seed_out(p, "output directory for kept/ and removed/")
    p.set_defaults(func=cmd_filter)

    for name, func, with_ssl_flags in (("train", cmd_train, False),
                                       ("ssl-train", cmd_ssl_train, True)):
        p = sub.add_parser(name, help=f"{name} from a config file")
        p.add_argument("--config", default=None, help="TOML experiment config")
        if with_ssl_flags:
            p.add_argument("--runs", type=int, default=None)
            p.add_argument("--alpha-final", type=float, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--batch-size", type=int, default=None)
        p.add_argument("--lr-max", type=float, default=None)
        _add_seed_out(p, "output directory for checkpoints and history")
        p.set_defaults(func=func)

    for name, func in (("predict", cmd_predict), ("tta-predict", cmd_tta_predict)):
        p = sub.add_parser(name, help=f"{name} probabilities for a manifest")
        p.add_argument("--ckpt", required=True)
        p.add_argument("--manifest", required=True)
        if name == "tta-predict":
            p.add_argument("--preset", default="tta_dense10",
                           choices=("tta_dense10", "tta_ens15"))
        _add_seed_out(p, "output predictions CSV path")
        p.set_defaults(func=func)

    p = sub.add_parser("ensemble", help="average prediction files with equal or given weights")
    p.add_argument("--preds", nargs="+", required=True)
    p.add_argument("--weights", nargs="+", type=float, default=None)
    _add_seed_out(p, "output predictions CSV path")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("eval", help="score predictions against a labeled manifest")
    p.add_argument("--preds", required=True)
    p.add_argument("--manifest", required=True)
    _add_seed_out(p, "output directory for roc.csv and summary.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dump-schedule", help="emit the one-cycle (t, lr, momentum) table")
    p.add_argument("--lr-max", type=float, default=0.00055)
    p.add_argument("--lr-min", type=float, default=None)
    p.add_argument("--final-lr", type=float, default=None)
    p.add_argument("--momentum-high", type=float, default=0.95)
    p.add_argument("--momentum-low", type=float, default=0.85)
    p.add_argument("--step", type=int, required=True)
    p.add_argument("--total", type=int, required=True)
    _add_seed_out(p, "output CSV path")
    p.set_defaults(func=cmd_dump_schedule)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        return args.func(args)
    except NumericError as err:
        print(f"patchssl: numeric failure: {err}", file=sys.stderr)
        return 1
    except USAGE_ERRORS as err:
        print(f"patchssl: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

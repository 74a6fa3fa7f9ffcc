"""Command-line entry point.

Subcommands: gen-data, train, eval, verify, extract, report. Every command is
deterministic given its config and seeds; all artifacts are written with an
atomic write-then-rename, and wall-clock timestamps appear only inside
dedicated metadata fields. Exit codes: 0 success (or verification pass),
1 verification violations, 2 usage/config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import data, nets, plotting, tasks, verification
from .errors import ConfigError, DidaError, FormatError
from .metafeatures import extract_handcrafted

log = logging.getLogger("dida")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def write_atomic(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json_atomic(path, payload):
    write_atomic(path, json.dumps(payload, indent=1) + "\n")


def _load_config(path, schema, command):
    if path is None:
        cfg = {}
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{command} config must be a JSON object")
    unknown = set(cfg) - set(schema)
    if unknown:
        raise ConfigError(f"unknown {command} config keys: {sorted(unknown)}")
    for key, (required, check, what) in schema.items():
        if key not in cfg:
            if required:
                raise ConfigError(f"{command} config is missing required key {key!r}")
            continue
        if not check(cfg[key]):
            raise ConfigError(f"{command} config key {key!r} must be {what}")
    return cfg


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_str(v):
    return isinstance(v, str)


def _int_pair(v):
    return isinstance(v, list) and len(v) == 2 and all(_is_int(x) for x in v)


def _num_pair(v):
    return isinstance(v, list) and len(v) == 2 and all(_is_num(x) for x in v)


def _str_list(v):
    return isinstance(v, list) and all(_is_str(x) for x in v)


def _is_dict(v):
    return isinstance(v, dict)


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------

GEN_SCHEMA = {
    "count": (True, lambda v: _is_int(v) and v > 0, "a positive integer"),
    "kinds": (False, lambda v: _str_list(v) and set(v) <= set(data.TOY_KINDS), f"a subset of {data.TOY_KINDS}"),
    "n_range": (False, _int_pair, "a [lo, hi] integer pair"),
    "classes_range": (False, _int_pair, "a [lo, hi] integer pair"),
    "noise_range": (False, _num_pair, "a [lo, hi] number pair"),
    "seed": (False, _is_int, "an integer"),
    "prefix": (False, _is_str, "a string"),
}


def _gen_one(args):
    index, seed, kinds, n_range, classes_range, noise_range, prefix, out_dir = args
    rng = np.random.default_rng(data.split_seed(seed, index))
    cfg = data.ToyGenConfig(
        kind=kinds[int(rng.integers(len(kinds)))],
        n=int(rng.integers(n_range[0], n_range[1] + 1)),
        classes=int(rng.integers(classes_range[0], classes_range[1] + 1)),
        seed=data.split_seed(seed, index + 10**9),
        noise=float(rng.uniform(noise_range[0], noise_range[1])),
    )
    z = data.generate_toy(cfg)
    name = f"{prefix}-{index:05d}"
    rel = os.path.join("datasets", f"{name}.csv")
    data.save_csv(z, os.path.join(out_dir, rel))
    return {"id": name, "path": rel, "label_column": "label"}


def cmd_gen_data(args):
    cfg = _load_config(args.config, GEN_SCHEMA, "gen-data")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    plan = [
        (
            i,
            seed,
            tuple(cfg.get("kinds", data.TOY_KINDS)),
            tuple(cfg.get("n_range", [128, 512])),
            tuple(cfg.get("classes_range", [2, 7])),
            tuple(cfg.get("noise_range", [0.02, 0.25])),
            cfg.get("prefix", "toy"),
            args.out,
        )
        for i in range(cfg["count"])
    ]
    os.makedirs(os.path.join(args.out, "datasets"), exist_ok=True)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            entries = list(pool.map(_gen_one, plan))
    else:
        entries = [_gen_one(p) for p in plan]
    manifest = os.path.join(args.out, "manifest.json")
    write_atomic(manifest, json.dumps(entries, indent=1) + "\n")
    log.info("wrote %d datasets and %s", len(entries), manifest)
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

TRAIN_SCHEMA = {
    "manifest": (True, _is_str, "a path string"),
    "arch": (False, _is_dict, "an object of architecture overrides"),
    "train": (False, _is_dict, "an object of training overrides"),
    "seed": (False, _is_int, "an integer"),
}

_ARCH_KEYS = {"activation", "aggregation", "t", "r", "mid_dim", "head_dims", "hidden", "branch_dim", "channels"}
_PATCH_KEYS = {"epochs", "batch_size", "pairs_per_epoch", "eval_pairs", "rows_range", "feats_range", "learning_rate", "test_fraction"}
_RANK_KEYS = {"epochs", "batch_size", "triplets_per_epoch", "eval_triplets", "triplets_per_patch", "rows_range", "feats_range", "learning_rate", "test_fraction"}


def _tupled(overrides, keys):
    out = {}
    for k, v in overrides.items():
        if k not in keys:
            raise ConfigError(f"unknown override key {k!r}")
        out[k] = tuple(v) if isinstance(v, list) else v
    return out


def _metrics_text(meta, history):
    lines = [json.dumps(meta)]
    lines.extend(json.dumps(rec) for rec in history)
    return "\n".join(lines) + "\n"


def cmd_train(args):
    if args.model == "handcrafted":
        raise ConfigError("handcrafted meta-features are extract-only; they have no trainable model")
    cfg = _load_config(args.config, TRAIN_SCHEMA, "train")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    datasets = data.load_manifest(cfg["manifest"])
    arch = nets.ArchConfig(kind=args.model, **_tupled(cfg.get("arch", {}), _ARCH_KEYS))
    model = nets.init_model(arch, seed=data.split_seed(seed, 101))
    os.makedirs(args.out, exist_ok=True)
    ck_path = os.path.join(args.out, "checkpoint.json")
    metrics_path = os.path.join(args.out, "metrics.jsonl")
    meta = {
        "type": "meta",
        "task": args.task,
        "model": args.model,
        "seed": seed,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }

    def on_epoch(best_payload, history):
        write_json_atomic(ck_path, best_payload)
        write_atomic(metrics_path, _metrics_text(meta, history))

    if args.task == "patch-id":
        train_cfg = tasks.PatchIdConfig(seed=seed, **_tupled(cfg.get("train", {}), _PATCH_KEYS))
        payload, history = tasks.train_patch_id(model, datasets, train_cfg, on_epoch=on_epoch)
    else:
        train_cfg = tasks.RankerConfig(seed=seed, **_tupled(cfg.get("train", {}), _RANK_KEYS))
        head = tasks.init_ranker_head(arch.meta_dim, seed=data.split_seed(seed, 102))
        payload, history = tasks.train_ranker(model, head, datasets, train_cfg, on_epoch=on_epoch)
    write_json_atomic(ck_path, payload)
    write_atomic(metrics_path, _metrics_text(meta, history))
    final_test = [r for r in history if r["split"] == "test"][-1]
    log.info("final test accuracy %.4f; wrote %s", final_test["accuracy"], ck_path)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

EVAL_SCHEMA = {
    "pairs": (False, _is_int, "an integer"),
    "triplets": (False, _is_int, "an integer"),
    "rows_range": (False, _int_pair, "a [lo, hi] integer pair"),
    "feats_range": (False, _int_pair, "a [lo, hi] integer pair"),
    "triplets_per_patch": (False, _is_int, "an integer"),
    "split": (False, lambda v: v in ("all", "train", "test"), "all, train or test"),
    "test_fraction": (False, _is_num, "a number in (0, 1)"),
    "split_seed": (False, _is_int, "an integer"),
    "seed": (False, _is_int, "an integer"),
}


def _select_split(datasets, cfg, seed):
    which = cfg.get("split", "all")
    if which == "all":
        return datasets
    train, test = tasks.split_sources(datasets, cfg.get("test_fraction", 0.3), cfg.get("split_seed", seed))
    return train if which == "train" else test


def cmd_eval(args):
    cfg = _load_config(args.config, EVAL_SCHEMA, "eval")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    datasets = _select_split(data.load_manifest(args.manifest), cfg, seed)
    if args.task == "patch-id":
        model = nets.load_checkpoint(args.checkpoint)
        pairs = tasks.build_patch_pairs(
            datasets,
            cfg.get("pairs", 200),
            tuple(cfg.get("rows_range", [100, 300])),
            tuple(cfg.get("feats_range", [1, 2])),
            seed=data.split_seed(seed, 7),
        )
        loss, acc = tasks.eval_patch_id(model, pairs)
        report = {"task": args.task, "accuracy": acc, "loss": loss, "n_eval": len(pairs)}
    else:
        with open(args.checkpoint, encoding="utf-8") as fh:
            payload = json.load(fh)
        extract, head = tasks.ranker_from_payload(payload)
        triplets = tasks.build_rank_triplets(
            datasets,
            cfg.get("triplets", 200),
            data.split_seed(seed, 8),
            tuple(cfg.get("rows_range", [700, 900])),
            tuple(cfg.get("feats_range", [3, 10])),
            cfg.get("triplets_per_patch", 4),
        )
        loss, acc = tasks.eval_ranker(extract, head, triplets)
        report = {"task": args.task, "accuracy": acc, "loss": loss, "n_eval": len(triplets)}
    report.update({"checkpoint": args.checkpoint, "seed": seed})
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_json_atomic(os.path.join(args.out, "report.json"), report)
    print(json.dumps(report))
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

VERIFY_SCHEMA = {
    "trials": (False, lambda v: _is_int(v) and v > 0, "a positive integer"),
    "seed": (False, _is_int, "an integer"),
}


def cmd_verify(args):
    cfg = _load_config(args.config, VERIFY_SCHEMA, "verify")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    report = verification.run_suite(args.suite, trials=cfg.get("trials"), seed=seed, jobs=args.jobs)
    summary = {
        "suite": args.suite,
        "records": len(report.records),
        "violations": report.n_violations,
        "max_ratio": report.max_ratio,
        "passed": report.passed,
        "seed": seed,
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        lines = [json.dumps(rec) for rec in report.records]
        write_atomic(os.path.join(args.out, f"{args.suite}.jsonl"), "\n".join(lines) + "\n")
        write_json_atomic(os.path.join(args.out, f"{args.suite}-summary.json"), summary)
    print(json.dumps(summary))
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------


def cmd_extract(args):
    z = data.load_csv(args.data, args.label_column)
    if args.extractor == "handcrafted":
        payload = {
            "extractor": "handcrafted",
            "dataset": {"id": z.id, "n": z.n, "n_features": z.dx, "n_classes": z.n_classes},
            "meta_features": extract_handcrafted(z).as_dict(),
        }
    else:
        if not args.checkpoint:
            raise ConfigError("model extraction needs --checkpoint")
        model = nets.load_checkpoint(args.checkpoint)
        meta = nets.forward(data.normalize_features(z), model)
        payload = {
            "extractor": model.config.kind,
            "checkpoint": args.checkpoint,
            "dataset": {"id": z.id, "n": z.n, "n_features": z.dx, "n_classes": z.n_classes},
            "meta_features": [float(v) for v in meta.data],
        }
    text = json.dumps(payload, indent=1) + "\n"
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _read_metrics(path):
    with open(path, encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("type") != "meta":
        raise FormatError(f"{path}: expected a leading meta record")
    meta, records = lines[0], lines[1:]
    for rec in records:
        if not {"epoch", "split", "loss", "accuracy"} <= set(rec):
            raise FormatError(f"{path}: malformed metric record {rec}")
    return meta, records


def _read_scatter(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["true_perf", "pred_perf", "extractor_name"]:
            raise FormatError(f"{path}: expected true_perf,pred_perf,extractor_name columns")
        return [(float(r["true_perf"]), float(r["pred_perf"]), r["extractor_name"]) for r in reader]


def cmd_report(args):
    if not args.metrics and not args.scatter:
        raise ConfigError("report needs at least one --metrics or --scatter input")
    os.makedirs(args.out, exist_ok=True)
    summary = {"meta": {"generated": time.strftime("%Y-%m-%dT%H:%M:%S%z")}, "methods": [], "regression": []}
    figures = []

    rows = []
    if args.metrics:
        runs = [_read_metrics(p) for p in args.metrics]
        grouped = {}
        for meta, records in runs:
            key = (meta["task"], meta["model"])
            final = [r for r in records if r["split"] == "test"][-1]
            best = max(r["accuracy"] for r in records if r["split"] == "test")
            grouped.setdefault(key, []).append((final["accuracy"], best))
        for (task, model), vals in sorted(grouped.items()):
            finals = np.array([v[0] for v in vals])
            bests = np.array([v[1] for v in vals])
            rows.append(
                {
                    "task": task,
                    "method": model,
                    "n_runs": len(vals),
                    "final_accuracy_mean": float(finals.mean()),
                    "final_accuracy_std": float(finals.std()),
                    "best_accuracy_mean": float(bests.mean()),
                }
            )
        summary["methods"] = rows
        by_task = {}
        for meta, records in runs:
            label = f"{meta['model']}-seed{meta['seed']}"
            by_task.setdefault(meta["task"], {})[label] = records
        for task, curves in sorted(by_task.items()):
            fig_path = os.path.join(args.out, f"curves-{task}.png")
            plotting.accuracy_curves(curves, fig_path)
            figures.append(fig_path)

    if args.scatter:
        points = []
        for p in args.scatter:
            points.extend(_read_scatter(p))
        groups = {}
        for true, pred, name in points:
            groups.setdefault(name, ([], []))
            groups[name][0].append(true)
            groups[name][1].append(pred)
        for name, (true, pred) in sorted(groups.items()):
            true, pred = np.asarray(true), np.asarray(pred)
            summary["regression"].append(
                {"extractor": name, "n": int(true.size), "mse": float(((true - pred) ** 2).mean())}
            )
        fig_path = os.path.join(args.out, "scatter.png")
        plotting.scatter_true_pred(groups, fig_path)
        figures.append(fig_path)

    csv_path = os.path.join(args.out, "summary.csv")
    tmp = f"{csv_path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "method", "n_runs", "final_accuracy_mean", "final_accuracy_std", "best_accuracy_mean"])
        for row in rows:
            writer.writerow([
                row["task"], row["method"], row["n_runs"],
                f"{row['final_accuracy_mean']:.6f}", f"{row['final_accuracy_std']:.6f}",
                f"{row['best_accuracy_mean']:.6f}",
            ])
        for reg in summary["regression"]:
            writer.writerow(["regression", reg["extractor"], reg["n"], f"{reg['mse']:.6f}", "", ""])
    os.replace(tmp, csv_path)
    summary["figures"] = figures
    write_json_atomic(os.path.join(args.out, "summary.json"), summary)
    log.info("wrote %s and %d figures", csv_path, len(figures))
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="dida", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="JSON config path")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for independent trials")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("gen-data", help="generate synthetic dataset collections")
    common(p)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a meta-feature model on a task")
    p.add_argument("--task", required=True, choices=["patch-id", "ranker"])
    p.add_argument("--model", required=True, choices=list(nets.MODEL_KINDS) + ["handcrafted"])
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--task", required=True, choices=["patch-id", "ranker"])
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="JSON config path")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="output directory (report.json)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("verify", help="run a randomized verification suite")
    p.add_argument("--suite", required=True, choices=list(verification.SUITE_NAMES))
    common(p, needs_out=False)
    p.add_argument("--out", help="output directory for the JSONL report")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("extract", help="print meta-features for one dataset")
    p.add_argument("--extractor", default="model", choices=["model", "handcrafted"])
    p.add_argument("--checkpoint", help="model checkpoint (extractor=model)")
    p.add_argument("--data", required=True, help="CSV dataset path")
    p.add_argument("--label-column", default="label")
    p.add_argument("--out", help="output JSON path (default stdout)")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("report", help="aggregate metrics/scatter files into tables and figures")
    p.add_argument("--metrics", nargs="*", default=[], help="metrics JSONL files")
    p.add_argument("--scatter", nargs="*", default=[], help="scatter CSV files")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None):
    level = os.environ.get("DIDA_LOG", "info").lower()
    if level not in LOG_LEVELS:
        print(f"DIDA_LOG must be one of {sorted(LOG_LEVELS)}", file=sys.stderr)
        return 2
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DidaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

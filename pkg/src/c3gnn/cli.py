"""Command-line entry point: ``c3gnn <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import analysis
from .benchmark import MotifSpec, imbalanced_benchmark
from .checks import run_gradient_suite
from .encoder import load_checkpoint, save_checkpoint
from .graphdata import (Dataset, DatasetError, SplitSpec, imbalance_factor, load_dataset,
                        make_imbalanced, parse_tu_dataset, save_dataset, stratified_split)
from .subclassing import refresh_assignments, subclass_cap
from .trainer import VARIANTS, ConfigError, TrainConfig, fit, write_history

log = logging.getLogger("c3gnn")

SPLITS = ("train", "val", "test")


def _load_any(path: str, name: str | None = None) -> Dataset:
    p = Path(path)
    if p.is_dir():
        return parse_tu_dataset(p, name or p.name)
    return load_dataset(p)


def _load_splits(path: str) -> dict[str, Dataset]:
    root = Path(path)
    missing = [s for s in SPLITS if not (root / f"{s}.jsonl").exists()]
    if missing:
        raise DatasetError(f"{root}: missing split file(s) {', '.join(s + '.jsonl' for s in missing)}")
    return {s: load_dataset(root / f"{s}.jsonl") for s in SPLITS}


def _write_splits(out: Path, splits: dict[str, Dataset]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for s, ds in splits.items():
        save_dataset(ds, out / f"{s}.jsonl")


def _config(args) -> TrainConfig:
    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = TrainConfig(**{**cfg.__dict__, "seed": args.seed})
    if getattr(args, "variant", None):
        cfg = cfg.with_variant(args.variant)
    return cfg


def cmd_make_imbalanced(args) -> int:
    ds = _load_any(args.dataset, args.name)
    seed = args.seed or 0
    train, val, test = stratified_split(ds, SplitSpec(imbalance_factor=args.imbalance, seed=seed))
    train = make_imbalanced(train, args.imbalance, seed)
    out = Path(args.out)
    _write_splits(out, {"train": train, "val": val, "test": test})
    print(json.dumps({"train_counts": train.class_counts(), "val": len(val), "test": len(test),
                      "imbalance_factor": imbalance_factor(train)}))
    return 0


def cmd_synth(args) -> int:
    bm = imbalanced_benchmark(seed=args.seed or 0, imbalance_factor=args.imbalance, spec=MotifSpec())
    _write_splits(Path(args.out), {"train": bm.train, "val": bm.val, "test": bm.test})
    print(json.dumps({"train_counts": bm.train.class_counts(), "val": len(bm.val), "test": len(bm.test)}))
    return 0


def _train_to(out: Path, cfg: TrainConfig, splits: dict[str, Dataset]):
    out.mkdir(parents=True, exist_ok=True)
    res = fit(splits["train"], splits["val"], cfg)
    save_checkpoint(res.params, out / "checkpoint.bin")
    write_history(res.history, out / "history.jsonl")
    (out / "config.txt").write_text(cfg.to_text())
    return res


def cmd_train(args) -> int:
    cfg = _config(args)
    splits = _load_splits(args.dataset)
    res = _train_to(Path(args.out), cfg, splits)
    best = res.history[res.best_epoch]
    print(json.dumps({"best_epoch": res.best_epoch, "val_top1": best.val_top1,
                      "test_top1": analysis.top1_accuracy(res.params, splits["test"])}))
    return 0


def cmd_eval(args) -> int:
    params = load_checkpoint(args.checkpoint)
    splits = _load_splits(args.dataset)
    ds = splits[args.split]
    result = {"split": args.split, "top1": analysis.top1_accuracy(params, ds),
              "per_class": analysis.per_class_recall(params, ds)}
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / f"eval_{args.split}.json").write_text(json.dumps(result, indent=1) + "\n")
    print(json.dumps(result))
    return 0


def cmd_analyze(args) -> int:
    cfg = _config(args)
    params = load_checkpoint(args.checkpoint)
    splits = _load_splits(args.dataset)
    train = splits["train"]
    counts = train.class_counts()
    cap = subclass_cap(min(counts.values()), cfg.delta)
    assignment = refresh_assignments(params, train, cap, 0, 1, None, seed=cfg.seed)
    report = analysis.distance_report(params, assignment, splits[args.split], counts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_records(out / "distances.jsonl")
    (out / "summary.json").write_text(json.dumps(report.summary(), indent=1, sort_keys=True) + "\n")
    (out / "histogram.dat").write_text(report.histogram())
    (out / "assignment.tsv").write_text(assignment.to_table())
    print(json.dumps(report.summary()["all"]))
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradient_suite(seed=args.seed or 0)
    for r in results:
        print(r.line())
    ok = all(r.report.passed for r in results)
    print("gradcheck: all passed" if ok else "gradcheck: FAILED")
    return 0 if ok else 1


def cmd_ablate(args) -> int:
    base = _config(args)
    splits = _load_splits(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["variant\tbest_epoch\tval_top1\ttest_top1"]
    for variant in VARIANTS:
        cfg = base.with_variant(variant)
        res = _train_to(out / variant, cfg, splits)
        test = analysis.top1_accuracy(res.params, splits["test"])
        rows.append(f"{variant}\t{res.best_epoch}\t{res.history[res.best_epoch].val_top1:.6f}\t{test:.6f}")
        print(rows[-1], flush=True)
    (out / "ablation.tsv").write_text("\n".join(rows) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="c3gnn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        p.add_argument("--seed", type=int, default=None)
        return p

    p = add("make-imbalanced", cmd_make_imbalanced, "split a dataset 6:2:2 and imbalance the train split")
    p.add_argument("--dataset", required=True, help="TU directory or .jsonl dataset file")
    p.add_argument("--name", default=None, help="TU file prefix (default: directory name)")
    p.add_argument("--if", dest="imbalance", type=float, default=10.0)
    p.add_argument("--out", required=True)

    p = add("synth", cmd_synth, "write the synthetic motif benchmark splits")
    p.add_argument("--if", dest="imbalance", type=float, default=10.0)
    p.add_argument("--out", required=True)

    for name, fn, help_ in (("train", cmd_train, "train and write checkpoint + history"),
                            ("ablate", cmd_ablate, "train every ablation variant")):
        p = add(name, fn, help_)
        p.add_argument("--config", default=None)
        p.add_argument("--dataset", required=True, help="directory with train/val/test.jsonl")
        p.add_argument("--out", required=True)
        if name == "train":
            p.add_argument("--variant", choices=VARIANTS, default=None)

    p = add("eval", cmd_eval, "top-1 accuracy of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--out", default=None)

    p = add("analyze", cmd_analyze, "feature distance report of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--out", required=True)

    add("gradcheck", cmd_gradcheck, "finite-difference gradient suite")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("C3G_THREADS")
    try:
        limit = int(threads) if threads else None
        if limit is not None and limit < 1:
            raise ValueError
    except ValueError:
        print(f"c3gnn: error: C3G_THREADS must be a positive integer, got {threads!r}", file=sys.stderr)
        return 2
    try:
        with threadpool_limits(limits=limit):
            return args.func(args)
    except (DatasetError, ConfigError, ValueError, OSError) as e:
        print(f"c3gnn: error: {e}", file=sys.stderr)
        return 1


def run_command(argv) -> int:
    return main(list(argv))


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable images,
malformed files or plans, impossible requests), 3 numeric failure (diverged
synthesis, non-finite training loss).
"""

import argparse
import dataclasses
import json
import os
import sys

from . import harness
from .datagen import (benchmark_train_config, benchmark_transfer_config,
                      make_benchmark)
from .harness import Classifier, TrainConfig, run_experiment
from .imageio import load_image, save_image
from .network import default_network
from .pipeline import (AugmentationPlan, DatasetManifest, build_composite,
                       build_real_composite)
from .transfer import TransferConfig, prepare_targets, synthesize

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERIC_EXIT = 3


class _Parser(argparse.ArgumentParser):
    """argparse reserves exit code 2; here that one means a data error."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _load_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _transfer_config(args) -> TransferConfig:
    cfg = TransferConfig.from_dict(_load_json(args.config)) if args.config \
        else TransferConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.reseeded(args.seed)
    return cfg


def _cmd_transfer(args) -> int:
    cfg = _transfer_config(args)
    if args.snapshots:
        marks = frozenset(int(s) for s in args.snapshots.split(","))
        cfg = dataclasses.replace(cfg, snapshot_iterations=marks)
    content = load_image(args.content)
    reference = load_image(args.reference)
    net = default_network(seed=0)
    targets = prepare_targets(net, content, reference, cfg)
    result = synthesize(net, targets, cfg, content_image=content)

    os.makedirs(args.out, exist_ok=True)
    save_image(result.image, os.path.join(args.out, "final.png"))
    for it, image in sorted(result.snapshots.items()):
        save_image(image, os.path.join(args.out, f"snapshot-{it:02d}.png"))
    trace = {
        "content": [p.content for p in result.trace],
        "style": [p.style for p in result.trace],
        "tv": [p.tv for p in result.trace],
        "total": [p.total for p in result.trace],
    }
    with open(os.path.join(args.out, "trace.json"), "w", encoding="utf-8") as f:
        json.dump(trace, f)
        f.write("\n")
    print(f"wrote {args.out}/final.png after {len(result.trace)} steps "
          f"(loss {result.trace[0].total:.4g} -> {result.trace[-1].total:.4g})")
    return 0


def _cmd_augment(args) -> int:
    plan = AugmentationPlan(
        source_root=args.src,
        target_class=args.target_class,
        references=args.reference,
        output_root=args.out,
        ratio=args.ratio,
        transfer=_transfer_config(args),
        adverse_pool=args.adverse_pool,
    )
    if args.adverse_pool:
        manifest = build_real_composite(plan)
        origin = "adverse-real"
    else:
        manifest = build_composite(plan)
        origin = "styled"
    replaced = manifest.count(args.target_class, origin)
    total = manifest.count(args.target_class)
    print(f"composite at {args.out}: {replaced}/{total} {args.target_class!r} "
          f"entries {origin}, manifest.json written")
    return 0


def _cmd_train(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    cfg = TrainConfig.from_dict(_load_json(args.config)) if args.config \
        else TrainConfig()
    clf = harness.train(manifest, cfg=cfg)
    clf.save(args.out)
    last = clf.history[-1] if clf.history else {}
    extra = ""
    if "validation_accuracy" in last:
        extra = f", validation accuracy {last['validation_accuracy']:.3f}"
    print(f"model saved to {args.out} after {len(clf.history)} epochs{extra}")
    return 0


def _cmd_evaluate(args) -> int:
    clf = Classifier.load(args.model)
    manifest = DatasetManifest.from_directory(args.test)
    sample = harness.evaluate(clf, manifest, args.positive_class)
    print(json.dumps({
        "tp_rate": sample.tp_rate,
        "fp_rate": sample.fp_rate,
        "positives": sample.positives,
        "negatives": sample.negatives,
    }))
    return 0


def _cmd_experiment(args) -> int:
    plan = _load_json(args.plan)
    tcfg = TransferConfig.from_dict(plan.get("transfer", {}))
    cfg = TrainConfig.from_dict(plan.get("train", {}))
    out_root = plan["output_root"]

    base = AugmentationPlan(
        source_root=plan["source_root"],
        target_class=plan["target_class"],
        references=plan["references"],
        output_root=os.path.join(out_root, "styled"),
        ratio=plan.get("ratio", 0.2),
        transfer=tcfg,
        adverse_pool=plan.get("adverse_pool"),
    )
    models = {"A": DatasetManifest.from_directory(plan["source_root"])}
    models["B"] = build_composite(base)
    if plan.get("adverse_pool"):
        models["C"] = build_real_composite(dataclasses.replace(
            base, output_root=os.path.join(out_root, "adverse-real")))
    tests = {
        name: DatasetManifest.from_directory(path)
        for name, path in plan["tests"].items()
    }
    report = run_experiment(models, tests, cfg, plan["positive_class"])
    report.save(args.out)
    print(report.table())
    return 0


def _cmd_make_benchmark(args) -> int:
    paths = make_benchmark(
        args.out,
        train_per_class=args.per_class,
        adverse_test=args.test_images,
        negative_test=args.test_images,
        pool_size=args.pool,
        seed=args.seed,
    )
    plan = {
        "source_root": paths["train"],
        "target_class": "vehicle",
        "references": [paths["reference"]],
        "ratio": 0.2,
        "adverse_pool": paths["adverse_pool"],
        "output_root": os.path.join(args.out, "composites"),
        "tests": {
            "adverse": paths["adverse_test"],
            "negative": paths["negative_test"],
        },
        "positive_class": "vehicle",
        "transfer": benchmark_transfer_config().to_dict(),
        "train": benchmark_train_config(runs=args.runs).to_dict(),
    }
    plan_path = os.path.join(args.out, "plan.json")
    with open(plan_path, "w", encoding="utf-8") as f:
        json.dump(plan, f, indent=1)
        f.write("\n")
    print(f"benchmark at {args.out}; experiment plan at {plan_path}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="styleaug",
                     description="Style-transfer data augmentation toolkit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("transfer", help="synthesize one styled image")
    p.add_argument("--content", required=True, help="content image path")
    p.add_argument("--reference", required=True, help="style reference path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--snapshots", help="comma-separated iteration numbers")
    p.add_argument("--config", help="JSON file mirroring TransferConfig")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(run=_cmd_transfer)

    p = sub.add_parser("augment", help="build a composite dataset")
    p.add_argument("--src", required=True, help="labeled image tree")
    p.add_argument("--class", dest="target_class", required=True,
                   help="class whose images get replaced")
    p.add_argument("--reference", required=True, help="style reference path")
    p.add_argument("--ratio", type=float, default=0.2,
                   help="replaced fraction of the target class")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--config", help="JSON file mirroring TransferConfig")
    p.add_argument("--adverse-pool",
                   help="replace with real images from this directory instead")
    p.set_defaults(run=_cmd_augment)

    p = sub.add_parser("train", help="train a classifier on a manifest")
    p.add_argument("--manifest", required=True, help="manifest.json path")
    p.add_argument("--config", help="JSON file mirroring TrainConfig")
    p.add_argument("--out", required=True, help="model output directory")
    p.set_defaults(run=_cmd_train)

    p = sub.add_parser("evaluate", help="score a model on a test directory")
    p.add_argument("--model", required=True, help="saved model directory")
    p.add_argument("--test", required=True, help="labeled test image tree")
    p.add_argument("--positive-class", required=True)
    p.set_defaults(run=_cmd_evaluate)

    p = sub.add_parser("experiment", help="A/B/C comparison from a plan file")
    p.add_argument("--plan", required=True, help="experiment plan JSON")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(run=_cmd_experiment)

    p = sub.add_parser("make-benchmark",
                       help="generate the synthetic benchmark tree")
    p.add_argument("--out", required=True, help="benchmark root directory")
    p.add_argument("--per-class", type=int, default=500)
    p.add_argument("--test-images", type=int, default=200)
    p.add_argument("--pool", type=int, default=150)
    p.add_argument("--runs", type=int, default=20,
                   help="runs per model in the generated plan")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(run=_cmd_make_benchmark)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "run", None):
        parser.print_help(sys.stderr)
        return USAGE_EXIT
    try:
        return args.run(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"styleaug: data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except (RuntimeError, ArithmeticError) as exc:
        print(f"styleaug: numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())

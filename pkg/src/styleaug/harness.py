"""Train-and-evaluate harness for composite datasets.

A small softmax classifier (the shared conv stack plus a pooled dense head)
is trained end-to-end on a manifest, then scored on held-out domains as
true-positive and false-positive rates. Experiments repeat that over many
seeded runs and report mean with sample standard deviation per cell, which
is the whole deliverable: the protocol is deterministic from one master
seed, so every number in a report can be regenerated.
"""

import json
import math
import os
import statistics
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeMismatch
from .imageio import AUGMENT_OPS, load_image, resize_bilinear, traditional_augment
from .network import (
    AvgPool,
    Dense,
    Dropout,
    Flatten,
    Network,
    NetworkSpec,
    Softmax,
    default_spec,
    load_weights,
    save_weights,
)
from .pipeline import DatasetManifest, build_composite_series
from .seeding import derive_seed, rng

DTYPE = np.float32


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 5e-4
    dropout: float = 0.5
    batch_size: int = 16
    runs: int = 20
    seed: int = 0
    augment_ops: tuple = AUGMENT_OPS
    input_hw: tuple = (32, 32)
    validation_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "augment_ops", tuple(self.augment_ops))
        object.__setattr__(self, "input_hw", tuple(int(v) for v in self.input_hw))
        if not 1 <= self.epochs <= 10:
            raise ValueError(f"epochs must lie in [1, 10], got {self.epochs}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation fraction must lie in [0, 1)")
        bad = [op for op in self.augment_ops if op not in AUGMENT_OPS]
        if bad:
            raise ValueError(f"unknown augmentation ops {bad}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs, "learning_rate": self.learning_rate,
            "dropout": self.dropout, "batch_size": self.batch_size,
            "runs": self.runs, "seed": self.seed,
            "augment_ops": list(self.augment_ops),
            "input_hw": list(self.input_hw),
            "validation_fraction": self.validation_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for key in ("augment_ops", "input_hw"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def classifier_spec(n_classes: int, input_hw=(32, 32), dropout=0.5) -> NetworkSpec:
    """The shared feature extractor with a pooled softmax head on top."""
    if n_classes < 2:
        raise ValueError("a classifier needs at least 2 classes")
    base = default_spec()
    _, (c, ph, pw) = base.shape_chain(input_hw)[-1]
    if ph != pw:
        raise ShapeMismatch(
            f"input {input_hw} leaves a non-square {ph}x{pw} map to pool")
    layers = base.layers + (
        ("gap", AvgPool(k=ph, stride=ph)),
        ("flat", Flatten()),
        ("drop", Dropout(dropout)),
        ("fc", Dense(n_classes)),
        ("prob", Softmax()),
    )
    return NetworkSpec(layers=layers, input_channels=base.input_channels,
                       mean=base.mean, scale=base.scale)


def _dense_tag(spec: NetworkSpec) -> str:
    for tag, kind in reversed(spec.layers):
        if isinstance(kind, Dense):
            return tag
    raise ShapeMismatch("spec has no dense layer to read logits from")


def load_dataset(manifest: DatasetManifest, input_hw) -> tuple:
    """Decode every entry to a fixed-size tensor batch.

    Returns (images [N,3,h,w], label indices [N], labels). Label order is
    the manifest's sorted label set.
    """
    labels = manifest.labels
    index = {lab: i for i, lab in enumerate(labels)}
    xs, ys = [], []
    for e in manifest.entries:
        img = resize_bilinear(load_image(manifest.resolve(e)), input_hw)
        xs.append(img)
        ys.append(index[e.label])
    if not xs:
        raise ValueError("manifest holds no images")
    return np.stack(xs), np.asarray(ys, dtype=np.int64), labels


@dataclass
class Classifier:
    network: Network
    labels: tuple
    input_hw: tuple
    history: tuple = ()

    def predict_index(self, image) -> int:
        image = np.asarray(image, dtype=DTYPE)
        if image.shape[1:] != tuple(self.input_hw):
            image = resize_bilinear(image, self.input_hw)
        return int(np.argmax(self.network.predict(image)))

    def predict_label(self, image) -> str:
        return self.labels[self.predict_index(image)]

    def save(self, dirpath) -> None:
        os.makedirs(dirpath, exist_ok=True)
        doc = {
            "spec": self.network.spec.to_dict(),
            "labels": list(self.labels),
            "input_hw": list(self.input_hw),
            "history": list(self.history),
        }
        with open(os.path.join(dirpath, "model.json"), "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=1, sort_keys=True)
            f.write("\n")
        save_weights(self.network.store, os.path.join(dirpath, "weights.stwb"))

    @classmethod
    def load(cls, dirpath) -> "Classifier":
        with open(os.path.join(dirpath, "model.json"), encoding="utf-8") as f:
            doc = json.load(f)
        spec = NetworkSpec.from_dict(doc["spec"])
        store = load_weights(os.path.join(dirpath, "weights.stwb"))
        return cls(
            network=Network(spec, store=store),
            labels=tuple(doc["labels"]),
            input_hw=tuple(doc["input_hw"]),
            history=tuple(doc["history"]),
        )


def _adam_step(param, grad, m, v, t, lr, b1=0.9, b2=0.999, eps=1e-8):
    m *= DTYPE(b1)
    m += DTYPE(1 - b1) * grad
    v *= DTYPE(b2)
    v += DTYPE(1 - b2) * grad * grad
    mhat = m / DTYPE(1 - b1 ** t)
    vhat = v / DTYPE(1 - b2 ** t)
    param -= (DTYPE(lr) * mhat / (np.sqrt(vhat) + DTYPE(eps))).astype(DTYPE)


def _accuracy(net, xs, ys):
    hits = sum(int(np.argmax(net.predict(x)) == y) for x, y in zip(xs, ys))
    return hits / len(ys)


def train(manifest: DatasetManifest, spec: NetworkSpec | None = None,
          cfg: TrainConfig | None = None, *, run_index: int = 0,
          data: tuple | None = None) -> Classifier:
    """One seeded training run: cross-entropy over the manifest's classes.

    The whole schedule is a function of (cfg.seed, run_index): weight init,
    the train/validation split, epoch shuffles, per-sample augmentation,
    and dropout masks all derive from that pair, so the same call returns
    bit-identical weights. Pass `data` (from load_dataset) to reuse decoded
    images across runs.
    """
    cfg = cfg or TrainConfig()
    xs, ys, labels = data if data is not None else load_dataset(manifest, cfg.input_hw)
    if len(labels) < 2:
        raise ValueError(f"training needs >= 2 classes, manifest has {labels}")
    spec = spec or classifier_spec(len(labels), cfg.input_hw, cfg.dropout)
    fc = _dense_tag(spec)
    n_out = spec.kind(fc).out_features
    if n_out != len(labels):
        raise ShapeMismatch(
            f"spec head is {n_out}-way, manifest has {len(labels)} classes")

    run_seed = derive_seed(cfg.seed, "run", run_index)
    net = Network(spec, init_seed=derive_seed(run_seed, "weights"),
                  input_hw=cfg.input_hw)

    n = len(xs)
    perm = rng(derive_seed(run_seed, "split")).permutation(n)
    k_val = math.floor(cfg.validation_fraction * n)
    val_idx, train_idx = perm[:k_val], perm[k_val:]
    if len(train_idx) == 0:
        raise ValueError("validation fraction leaves no training samples")

    adam = {
        tag: [np.zeros_like(w), np.zeros_like(w), np.zeros_like(b), np.zeros_like(b)]
        for tag, (w, b) in net.store.entries.items()
    }
    t = 0
    counter = 0
    history = []
    for epoch in range(cfg.epochs):
        order = train_idx[
            rng(derive_seed(run_seed, "order", epoch)).permutation(len(train_idx))]
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            sums = {tag: [None, None] for tag in net.store.entries}
            for idx in batch:
                x = xs[idx]
                if cfg.augment_ops:
                    g = rng(derive_seed(run_seed, "augment", epoch, int(idx)))
                    pick = int(g.integers(0, len(cfg.augment_ops) + 1))
                    if pick:
                        x = traditional_augment(x, cfg.augment_ops[pick - 1])
                out, handle = net.training_pass(
                    x, dropout_seed=run_seed, dropout_counter=counter)
                counter += 1
                y = int(ys[idx])
                p = float(out[y])
                loss = -math.log(max(p, 1e-30))
                if not math.isfinite(loss):
                    raise NumericError(f"non-finite loss at epoch {epoch}, sample {idx}")
                epoch_loss += loss
                grad_logits = out.copy()
                grad_logits[y] -= DTYPE(1)
                grads = net.parameter_gradients(handle, {fc: grad_logits})
                for tag, (gw, gb) in grads.items():
                    if sums[tag][0] is None:
                        sums[tag] = [gw.copy(), gb.copy()]
                    else:
                        sums[tag][0] += gw
                        sums[tag][1] += gb
            t += 1
            inv = DTYPE(1.0 / len(batch))
            for tag, (w, b) in net.store.entries.items():
                gw, gb = sums[tag]
                mw, vw, mb, vb = adam[tag]
                _adam_step(w, gw * inv, mw, vw, t, cfg.learning_rate)
                _adam_step(b, gb * inv, mb, vb, t, cfg.learning_rate)
        record = {"epoch": epoch + 1, "train_loss": epoch_loss / len(order)}
        if len(val_idx):
            record["validation_accuracy"] = _accuracy(net, xs[val_idx], ys[val_idx])
        history.append(record)

    return Classifier(network=net, labels=labels, input_hw=cfg.input_hw,
                      history=tuple(history))


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RateSample:
    """TP/FP rates of one classifier on one test set; None when that side
    of the set is empty."""

    tp_rate: float | None
    fp_rate: float | None
    positives: int
    negatives: int


def evaluate(classifier: Classifier, manifest: DatasetManifest,
             positive_class: str, *, data: tuple | None = None) -> RateSample:
    """Argmax decision rule, dropout disabled.

    TP rate is the detected fraction of positive-class images; FP rate is
    the fraction of everything else predicted positive. Test sets are
    often single-sided (all positives, or object-free negatives), so the
    side a set does not carry comes back as None.
    """
    if positive_class not in classifier.labels:
        raise ValueError(
            f"classifier cannot predict {positive_class!r}; it knows {classifier.labels}")
    xs, ys, labels = data if data is not None else load_dataset(
        manifest, classifier.input_hw)
    if len(xs) == 0:
        raise ValueError("test set is empty")
    pos_index = classifier.labels.index(positive_class)
    predicted_pos = np.fromiter(
        (np.argmax(classifier.network.predict(x)) == pos_index for x in xs),
        dtype=bool, count=len(xs))
    actual_pos = np.asarray(
        [labels[y] == positive_class for y in ys], dtype=bool)
    n_pos = int(actual_pos.sum())
    n_neg = len(xs) - n_pos
    tp = float(predicted_pos[actual_pos].mean()) if n_pos else None
    fp = float(predicted_pos[~actual_pos].mean()) if n_neg else None
    return RateSample(tp_rate=tp, fp_rate=fp, positives=n_pos, negatives=n_neg)


@dataclass(frozen=True)
class Cell:
    """One report cell: a rate aggregated over runs."""

    mean: float
    std: float
    runs: tuple

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(float(v) for v in self.runs))
        if not self.runs:
            raise ValueError("a cell needs at least one run value")
        if any(not 0.0 <= v <= 1.0 for v in self.runs):
            raise ValueError(f"rates must lie in [0, 1]: {self.runs}")
        if self.std < 0:
            raise ValueError("std must be >= 0")
        if not min(self.runs) - 1e-9 <= self.mean <= max(self.runs) + 1e-9:
            raise ValueError("mean must lie within the run values")

    @classmethod
    def from_runs(cls, values) -> "Cell":
        vals = [float(v) for v in values]
        std = statistics.stdev(vals) if len(vals) > 1 else 0.0
        return cls(mean=statistics.fmean(vals), std=std, runs=tuple(vals))

    def formatted(self) -> str:
        return f"{self.mean:.3f}±{self.std:.3f}"


@dataclass(frozen=True)
class EvalReport:
    """Cells keyed "model/test/metric", metric being tp or fp."""

    cells: dict

    def __post_init__(self):
        object.__setattr__(self, "cells", dict(self.cells))
        for key in self.cells:
            if len(key.split("/")) != 3:
                raise ValueError(f"cell key {key!r} is not model/test/metric")

    def cell(self, model: str, test: str, metric: str) -> Cell:
        return self.cells[f"{model}/{test}/{metric}"]

    def to_dict(self) -> dict:
        return {
            key: {"mean": c.mean, "std": c.std, "runs": list(c.runs)}
            for key, c in sorted(self.cells.items())
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls({
            key: Cell(mean=v["mean"], std=v["std"], runs=tuple(v["runs"]))
            for key, v in d.items()
        })

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "EvalReport":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def table(self) -> str:
        """Aligned text table: one row per model, one column per test/metric."""
        models = sorted({k.split("/")[0] for k in self.cells})
        columns = sorted({tuple(k.split("/")[1:]) for k in self.cells})
        header = ["model"] + [f"{t} {m}" for t, m in columns]
        rows = [header]
        for model in models:
            row = [model]
            for t, m in columns:
                c = self.cells.get(f"{model}/{t}/{m}")
                row.append(c.formatted() if c else "-")
            rows.append(row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        lines = [
            "  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip()
            for r in rows
        ]
        return "\n".join(lines)


def run_experiment(models: dict, tests: dict, cfg: TrainConfig,
                   positive_class: str) -> EvalReport:
    """cfg.runs train+evaluate cycles per model, aggregated to a report.

    Run seeds depend only on (cfg.seed, run index), never on the model
    name, so models trained on identical manifests produce identical cells
    and cross-model differences are paired across seeds.
    """
    if not models or not tests:
        raise ValueError("need at least one model manifest and one test set")
    test_data = {
        name: load_dataset(m, cfg.input_hw) for name, m in sorted(tests.items())
    }
    cells = {}
    for model_name in sorted(models):
        data = load_dataset(models[model_name], cfg.input_hw)
        collected = {}
        for r in range(cfg.runs):
            clf = train(models[model_name], None, cfg, run_index=r, data=data)
            for test_name in sorted(tests):
                sample = evaluate(clf, tests[test_name], positive_class,
                                  data=test_data[test_name])
                for metric, value in (("tp", sample.tp_rate), ("fp", sample.fp_rate)):
                    if value is not None:
                        collected.setdefault((test_name, metric), []).append(value)
        for (test_name, metric), values in collected.items():
            cells[f"{model_name}/{test_name}/{metric}"] = Cell.from_runs(values)
    return EvalReport(cells)


def iteration_ablation(iteration_counts, plan, cfg: TrainConfig, tests: dict,
                       positive_class: str) -> dict:
    """Composite, train, and evaluate once per synthesis iteration count.

    Returns {count: EvalReport}. Rows depend only on their own count (one
    shared synthesis pass snapshots every requested depth), so the result
    is independent of list order.
    """
    counts = sorted({int(c) for c in iteration_counts})
    if not counts:
        raise ValueError("iteration list is empty")
    manifests = build_composite_series(plan, counts)
    return {
        c: run_experiment({"styled": manifests[c]}, tests, cfg, positive_class)
        for c in counts
    }

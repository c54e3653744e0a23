"""Dataset compositing: replace a seeded fraction of a class with styled
or adverse-real images, copy the rest, and write a manifest that makes the
whole build reproducible.

Layout convention: a dataset root contains one directory per class label,
each holding image files. A build mirrors that layout into the output root
and drops a manifest.json beside it.
"""

import hashlib
import json
import math
import os
import shutil
from dataclasses import dataclass, field, replace

from .errors import DecodeError, InsufficientPool
from .imageio import IMAGE_EXTENSIONS, load_image, resize_bilinear, save_image
from .network import default_network
from .seeding import derive_seed, rng
from .transfer import TransferConfig, prepare_targets, synthesize

ORIGINAL = "original"
STYLED = "styled"
ADVERSE = "adverse-real"


@dataclass(frozen=True)
class ManifestEntry:
    path: str          # relative to the output root
    label: str
    origin: str        # original | styled | adverse-real
    source: str        # where the pixels came from
    seed: int | None   # synthesis seed for styled entries

    def to_dict(self) -> dict:
        return {"path": self.path, "label": self.label, "origin": self.origin,
                "source": self.source, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        return cls(d["path"], d["label"], d["origin"], d["source"], d["seed"])


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    ratio: float
    master_seed: int
    config_digest: str
    skipped: tuple = ()
    # location on disk that entry paths are relative to; not serialized,
    # not part of equality
    root: str | None = field(default=None, compare=False)

    @property
    def labels(self) -> tuple:
        return tuple(sorted({e.label for e in self.entries}))

    def by_label(self) -> dict:
        out = {}
        for e in self.entries:
            out.setdefault(e.label, []).append(e)
        return out

    def count(self, label: str, origin: str | None = None) -> int:
        return sum(
            1 for e in self.entries
            if e.label == label and (origin is None or e.origin == origin))

    def to_dict(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "ratio": self.ratio,
            "master_seed": self.master_seed,
            "config_digest": self.config_digest,
            "skipped": list(self.skipped),
        }

    def resolve(self, entry: ManifestEntry) -> str:
        if self.root is None:
            raise ValueError("manifest has no root directory to resolve against")
        return os.path.join(self.root, entry.path)

    @classmethod
    def from_dict(cls, d: dict, root: str | None = None) -> "DatasetManifest":
        return cls(
            entries=tuple(ManifestEntry.from_dict(e) for e in d["entries"]),
            ratio=d["ratio"],
            master_seed=d["master_seed"],
            config_digest=d["config_digest"],
            skipped=tuple(d.get("skipped", ())),
            root=root,
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(
                json.load(f), root=os.path.dirname(os.path.abspath(path)))

    @classmethod
    def from_directory(cls, root) -> "DatasetManifest":
        """Wrap an existing class-folder dataset as an all-original manifest."""
        entries = []
        for label in _list_classes(root):
            for name in _list_images(os.path.join(root, label)):
                rel = f"{label}/{name}"
                entries.append(ManifestEntry(
                    path=rel, label=label, origin=ORIGINAL,
                    source=os.path.join(root, rel), seed=None))
        return cls(entries=tuple(entries), ratio=0.0, master_seed=0,
                   config_digest="", root=str(root))


@dataclass(frozen=True)
class AugmentationPlan:
    source_root: str
    target_class: str
    references: tuple
    output_root: str
    ratio: float = 0.2
    transfer: TransferConfig = field(default_factory=TransferConfig)
    synth_hw: tuple = (32, 32)
    adverse_pool: str | None = None

    def __post_init__(self):
        if isinstance(self.references, (str, os.PathLike)):
            object.__setattr__(self, "references", (str(self.references),))
        else:
            object.__setattr__(self, "references", tuple(str(r) for r in self.references))
        object.__setattr__(self, "synth_hw", tuple(int(v) for v in self.synth_hw))
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must lie in [0, 1], got {self.ratio}")

    def digest(self) -> str:
        payload = {
            "target_class": self.target_class,
            "ratio": self.ratio,
            "synth_hw": list(self.synth_hw),
            "transfer": self.transfer.to_dict(),
            "references": [os.path.basename(r) for r in self.references],
            "adverse_pool": bool(self.adverse_pool),
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _list_classes(root):
    if not os.path.isdir(root):
        raise FileNotFoundError(f"dataset root {root!r} does not exist")
    return sorted(
        d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d)))


def _list_images(dirpath):
    return sorted(
        f for f in os.listdir(dirpath)
        if f.lower().endswith(IMAGE_EXTENSIONS)
        and os.path.isfile(os.path.join(dirpath, f)))


def _select_targets(plan, files):
    """First floor(ratio*N) positions of a seeded shuffle, as a name set."""
    n = len(files)
    k = math.floor(plan.ratio * n)
    order = rng(derive_seed(plan.transfer.seed, "select")).permutation(n)
    return {files[i] for i in order[:k]}, k


def _fresh_name(base_stem, ext, taken):
    name = base_stem + ext
    bump = 1
    while name in taken:
        name = f"{base_stem}_{bump}{ext}"
        bump += 1
    taken.add(name)
    return name


def build_composite(plan: AugmentationPlan, net=None) -> DatasetManifest:
    """Replace a seeded fraction of the target class with synthesized images.

    Every other image is copied through byte-identical. Unreadable selected
    images are skipped and recorded rather than failing the build; a
    diverging synthesis (StepSizeError) does abort, since it means the
    transfer config is bad for the whole dataset, not one file.
    """
    if not plan.references:
        raise ValueError("plan needs at least one reference image")
    classes = _list_classes(plan.source_root)
    if plan.target_class not in classes:
        raise ValueError(
            f"target class {plan.target_class!r} not found under {plan.source_root!r}")
    target_files = _list_images(os.path.join(plan.source_root, plan.target_class))
    if not target_files:
        raise ValueError(f"target class {plan.target_class!r} has no images")
    selected, _ = _select_targets(plan, target_files)

    if net is None:
        net = default_network(seed=0)
    refs = [
        resize_bilinear(load_image(p), plan.synth_hw) for p in plan.references
    ]

    entries, skipped = [], []
    seed = plan.transfer.seed
    for label in classes:
        src_dir = os.path.join(plan.source_root, label)
        out_dir = os.path.join(plan.output_root, label)
        os.makedirs(out_dir, exist_ok=True)
        taken = set()
        for i, name in enumerate(_list_images(src_dir)):
            src = os.path.join(src_dir, name)
            stem, ext = os.path.splitext(name)
            if label == plan.target_class and name in selected:
                image_seed = derive_seed(seed, "synth", i)
                try:
                    content = resize_bilinear(load_image(src), plan.synth_hw)
                except DecodeError as exc:
                    skipped.append({"source": src, "reason": str(exc)})
                    continue
                cfg = plan.transfer.reseeded(image_seed)
                targets = prepare_targets(net, content, refs[i % len(refs)], cfg)
                result = synthesize(net, targets, cfg, content_image=content)
                out_name = _fresh_name(stem, ".png", taken)
                save_image(result.image, os.path.join(out_dir, out_name))
                entries.append(ManifestEntry(
                    path=f"{label}/{out_name}", label=label, origin=STYLED,
                    source=src, seed=image_seed))
            else:
                out_name = _fresh_name(stem, ext, taken)
                shutil.copyfile(src, os.path.join(out_dir, out_name))
                entries.append(ManifestEntry(
                    path=f"{label}/{out_name}", label=label, origin=ORIGINAL,
                    source=src, seed=None))

    manifest = DatasetManifest(
        entries=tuple(entries), ratio=plan.ratio, master_seed=seed,
        config_digest=plan.digest(), skipped=tuple(skipped),
        root=plan.output_root)
    manifest.save(os.path.join(plan.output_root, "manifest.json"))
    return manifest


def build_composite_series(plan: AugmentationPlan, iteration_counts) -> dict:
    """One composite per iteration count from a single synthesis pass.

    Running each image once to the largest count and snapshotting the
    evolving pixels at every requested count produces, per count, exactly
    the tree build_composite would write with that iteration setting: the
    optimizer's trajectory through iteration c does not depend on how many
    iterations follow. Returns {count: manifest}; each composite lands in
    output_root/iterations-NN.
    """
    counts = sorted({int(c) for c in iteration_counts})
    if not counts:
        raise ValueError("iteration_counts is empty")
    if counts[0] < 1:
        raise ValueError("iteration counts must be >= 1")
    if not plan.references:
        raise ValueError("plan needs at least one reference image")
    classes = _list_classes(plan.source_root)
    if plan.target_class not in classes:
        raise ValueError(
            f"target class {plan.target_class!r} not found under {plan.source_root!r}")
    target_files = _list_images(os.path.join(plan.source_root, plan.target_class))
    if not target_files:
        raise ValueError(f"target class {plan.target_class!r} has no images")
    selected, _ = _select_targets(plan, target_files)

    roots = {c: os.path.join(plan.output_root, f"iterations-{c:02d}") for c in counts}
    row_plans = {
        c: replace(plan, output_root=roots[c], transfer=replace(
            plan.transfer, iterations=c, snapshot_iterations=frozenset()))
        for c in counts}
    base_cfg = replace(
        plan.transfer, iterations=counts[-1], snapshot_iterations=frozenset(counts))

    net = default_network(seed=0)
    refs = [
        resize_bilinear(load_image(p), plan.synth_hw) for p in plan.references
    ]

    entries = {c: [] for c in counts}
    skipped = []
    seed = plan.transfer.seed
    for label in classes:
        src_dir = os.path.join(plan.source_root, label)
        taken = {c: set() for c in counts}
        for c in counts:
            os.makedirs(os.path.join(roots[c], label), exist_ok=True)
        for i, name in enumerate(_list_images(src_dir)):
            src = os.path.join(src_dir, name)
            stem, ext = os.path.splitext(name)
            if label == plan.target_class and name in selected:
                image_seed = derive_seed(seed, "synth", i)
                try:
                    content = resize_bilinear(load_image(src), plan.synth_hw)
                except DecodeError as exc:
                    skipped.append({"source": src, "reason": str(exc)})
                    continue
                cfg = base_cfg.reseeded(image_seed)
                targets = prepare_targets(net, content, refs[i % len(refs)], cfg)
                result = synthesize(net, targets, cfg, content_image=content)
                for c in counts:
                    out_name = _fresh_name(stem, ".png", taken[c])
                    save_image(result.snapshots[c],
                               os.path.join(roots[c], label, out_name))
                    entries[c].append(ManifestEntry(
                        path=f"{label}/{out_name}", label=label, origin=STYLED,
                        source=src, seed=image_seed))
            else:
                for c in counts:
                    out_name = _fresh_name(stem, ext, taken[c])
                    shutil.copyfile(src, os.path.join(roots[c], label, out_name))
                    entries[c].append(ManifestEntry(
                        path=f"{label}/{out_name}", label=label, origin=ORIGINAL,
                        source=src, seed=None))

    manifests = {}
    for c in counts:
        manifest = DatasetManifest(
            entries=tuple(entries[c]), ratio=plan.ratio, master_seed=seed,
            config_digest=row_plans[c].digest(), skipped=tuple(skipped),
            root=roots[c])
        manifest.save(os.path.join(roots[c], "manifest.json"))
        manifests[c] = manifest
    return manifests


def build_real_composite(plan: AugmentationPlan) -> DatasetManifest:
    """As build_composite, but replacements come from a real adverse pool,
    drawn without replacement by a seeded shuffle."""
    if not plan.adverse_pool:
        raise ValueError("plan needs adverse_pool set for a real composite")
    classes = _list_classes(plan.source_root)
    if plan.target_class not in classes:
        raise ValueError(
            f"target class {plan.target_class!r} not found under {plan.source_root!r}")
    target_files = _list_images(os.path.join(plan.source_root, plan.target_class))
    if not target_files:
        raise ValueError(f"target class {plan.target_class!r} has no images")
    selected, k = _select_targets(plan, target_files)

    pool = _list_images(plan.adverse_pool)
    if len(pool) < k:
        raise InsufficientPool(
            f"adverse pool holds {len(pool)} images, need {k}")
    seed = plan.transfer.seed
    pool_order = rng(derive_seed(seed, "pool")).permutation(len(pool))

    entries, skipped = [], []
    drawn = 0
    for label in classes:
        src_dir = os.path.join(plan.source_root, label)
        out_dir = os.path.join(plan.output_root, label)
        os.makedirs(out_dir, exist_ok=True)
        taken = set()
        for name in _list_images(src_dir):
            src = os.path.join(src_dir, name)
            stem, ext = os.path.splitext(name)
            if label == plan.target_class and name in selected:
                pool_name = pool[pool_order[drawn]]
                drawn += 1
                pool_src = os.path.join(plan.adverse_pool, pool_name)
                out_name = _fresh_name(stem, os.path.splitext(pool_name)[1], taken)
                shutil.copyfile(pool_src, os.path.join(out_dir, out_name))
                entries.append(ManifestEntry(
                    path=f"{label}/{out_name}", label=label, origin=ADVERSE,
                    source=pool_src, seed=None))
            else:
                out_name = _fresh_name(stem, ext, taken)
                shutil.copyfile(src, os.path.join(out_dir, out_name))
                entries.append(ManifestEntry(
                    path=f"{label}/{out_name}", label=label, origin=ORIGINAL,
                    source=src, seed=None))

    manifest = DatasetManifest(
        entries=tuple(entries), ratio=plan.ratio, master_seed=seed,
        config_digest=plan.digest(), skipped=tuple(skipped),
        root=plan.output_root)
    manifest.save(os.path.join(plan.output_root, "manifest.json"))
    return manifest

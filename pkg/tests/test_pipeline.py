import dataclasses
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from styleaug.errors import InsufficientPool
from styleaug.imageio import load_image, resize_bilinear, save_image
from styleaug.network import default_network
from styleaug.pipeline import (
    ADVERSE,
    ORIGINAL,
    STYLED,
    AugmentationPlan,
    DatasetManifest,
    ManifestEntry,
    _select_targets,
    build_composite,
    build_composite_series,
    build_real_composite,
)
from styleaug.transfer import TransferConfig, prepare_targets, synthesize

HW = (8, 8)


def _write_image(path, key, hw=HW):
    raw = np.random.default_rng(key).integers(0, 256, size=(3, *hw))
    save_image((raw / 255.0).astype(np.float32), path)


def _make_dataset(root, spec, key=100):
    """spec: {class_name: image_count}; returns nothing, writes PNGs."""
    for label, n in spec.items():
        d = root / label
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            _write_image(d / f"{label}{i:02d}.png", key)
            key += 1


def _quick_cfg(seed=5):
    return TransferConfig(iterations=1, steps_per_iteration=2, seed=seed)


def _plan(tmp_path, ratio=0.2, seed=5, **kw):
    src = tmp_path / "src"
    out = tmp_path / "out"
    ref = tmp_path / "ref.png"
    if not ref.exists():
        _write_image(ref, 7)
    kw.setdefault("references", (str(ref),))
    kw.setdefault("transfer", _quick_cfg(seed))
    return AugmentationPlan(
        source_root=str(src), target_class="pos", output_root=str(out),
        ratio=ratio, synth_hw=HW, **kw)


def test_ratio_zero_copies_everything(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 4, "neg": 3})
    plan = _plan(tmp_path, ratio=0.0)
    manifest = build_composite(plan)
    assert len(manifest.entries) == 7
    assert all(e.origin == ORIGINAL for e in manifest.entries)
    for e in manifest.entries:
        src = (tmp_path / "src" / e.path).read_bytes()
        dst = (tmp_path / "out" / e.path).read_bytes()
        assert src == dst
    assert (tmp_path / "out" / "manifest.json").exists()


def test_ratio_replaces_floor_of_target_class(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 10, "neg": 5})
    manifest = build_composite(_plan(tmp_path, ratio=0.2))
    assert manifest.count("pos", STYLED) == 2
    assert manifest.count("pos", ORIGINAL) == 8
    assert manifest.count("neg", ORIGINAL) == 5
    assert manifest.count("neg", STYLED) == 0


def test_ratio_one_styles_whole_class(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 3, "neg": 2})
    manifest = build_composite(_plan(tmp_path, ratio=1.0))
    assert manifest.count("pos", STYLED) == 3
    assert manifest.count("neg", ORIGINAL) == 2
    for e in manifest.entries:
        assert (tmp_path / "out" / e.path).exists()


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(1, 300),
    ratio=st.floats(0.0, 1.0, allow_nan=False),
    seed=st.integers(0, 2**31 - 1),
)
def test_selection_size_is_floor_of_ratio(n, ratio, seed):
    plan = AugmentationPlan(
        source_root="unused", target_class="t", references=("r",),
        output_root="unused", ratio=ratio, transfer=TransferConfig(seed=seed))
    files = [f"f{i:03d}.png" for i in range(n)]
    selected, k = _select_targets(plan, files)
    assert k == math.floor(ratio * n)
    assert len(selected) == k
    assert selected <= set(files)


def test_build_is_deterministic(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 5, "neg": 3})
    ref = tmp_path / "ref.png"
    _write_image(ref, 7)
    manifests, trees = [], []
    for sub in ("a", "b"):
        plan = AugmentationPlan(
            source_root=str(tmp_path / "src"), target_class="pos",
            references=(str(ref),), output_root=str(tmp_path / sub),
            ratio=0.4, transfer=_quick_cfg(11), synth_hw=HW)
        manifests.append(build_composite(plan))
        trees.append({
            e.path: (tmp_path / sub / e.path).read_bytes()
            for e in manifests[-1].entries})
    assert manifests[0].to_dict() == manifests[1].to_dict()
    assert trees[0] == trees[1]


def test_styled_entry_rebuilds_from_recorded_seed(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 5})
    plan = _plan(tmp_path, ratio=0.4, seed=21)
    manifest = build_composite(plan)
    styled = [e for e in manifest.entries if e.origin == STYLED]
    assert styled
    net = default_network(seed=0)
    names = sorted(os.path.basename(e.source) for e in manifest.entries
                   if e.label == "pos")
    refs = [resize_bilinear(load_image(p), plan.synth_hw) for p in plan.references]
    for e in styled:
        i = names.index(os.path.basename(e.source))
        content = resize_bilinear(load_image(e.source), plan.synth_hw)
        cfg = plan.transfer.reseeded(e.seed)
        targets = prepare_targets(net, content, refs[i % len(refs)], cfg)
        result = synthesize(net, targets, cfg, content_image=content)
        redo = tmp_path / "redo.png"
        save_image(result.image, redo)
        assert redo.read_bytes() == (tmp_path / "out" / e.path).read_bytes()


def test_non_target_classes_are_untouched(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 4, "neg": 4, "zed": 2})
    manifest = build_composite(_plan(tmp_path, ratio=0.5))
    for e in manifest.entries:
        if e.label == "pos":
            continue
        assert e.origin == ORIGINAL
        assert (tmp_path / "out" / e.path).read_bytes() == \
            (tmp_path / "src" / e.path).read_bytes()


def test_unreadable_selected_image_is_skipped_not_fatal(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 3, "neg": 2})
    (tmp_path / "src" / "pos" / "broken.png").write_bytes(b"not pixels")
    manifest = build_composite(_plan(tmp_path, ratio=1.0))
    assert len(manifest.skipped) == 1
    assert manifest.skipped[0]["source"].endswith("broken.png")
    assert manifest.count("pos", STYLED) == 3
    assert not any("broken" in e.path for e in manifest.entries)
    for e in manifest.entries:
        assert (tmp_path / "out" / e.path).exists()


def test_stem_collisions_get_distinct_names(tmp_path):
    d = tmp_path / "src" / "pos"
    d.mkdir(parents=True)
    _write_image(d / "a.png", 1)
    img = (np.random.default_rng(2).integers(0, 256, (3, *HW)) / 255).astype(np.float32)
    save_image(img, d / "a_tmp.png")
    os.rename(d / "a_tmp.png", d / "a.bmp")
    manifest = build_composite(_plan(tmp_path, ratio=1.0))
    paths = sorted(e.path for e in manifest.entries)
    assert paths == ["pos/a.png", "pos/a_1.png"]
    assert all((tmp_path / "out" / p).exists() for p in paths)


def test_missing_target_class_raises(tmp_path):
    _make_dataset(tmp_path / "src", {"neg": 2})
    with pytest.raises(ValueError, match="pos"):
        build_composite(_plan(tmp_path))


def test_empty_references_raise(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 2})
    with pytest.raises(ValueError, match="reference"):
        build_composite(_plan(tmp_path, references=()))


def test_ratio_outside_unit_interval_rejected(tmp_path):
    with pytest.raises(ValueError):
        _plan(tmp_path, ratio=1.5)
    with pytest.raises(ValueError):
        _plan(tmp_path, ratio=-0.1)


def test_manifest_round_trips_through_json(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 5, "neg": 2})
    manifest = build_composite(_plan(tmp_path, ratio=0.4))
    back = DatasetManifest.load(tmp_path / "out" / "manifest.json")
    assert back == manifest
    assert back.config_digest == manifest.config_digest
    assert len(back.config_digest) == 64


def test_from_directory_wraps_existing_dataset(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 3, "neg": 4})
    manifest = DatasetManifest.from_directory(tmp_path / "src")
    assert manifest.ratio == 0.0
    assert manifest.labels == ("neg", "pos")
    assert manifest.count("pos") == 3 and manifest.count("neg") == 4
    assert all(e.origin == ORIGINAL for e in manifest.entries)
    assert all(os.path.exists(e.source) for e in manifest.entries)


# -- real-image replacement ---------------------------------------------------

def _pool(tmp_path, n, key=500):
    pool = tmp_path / "pool"
    pool.mkdir()
    for i in range(n):
        _write_image(pool / f"adv{i:02d}.png", key + i)
    return pool


def test_real_composite_draws_from_pool(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 5, "neg": 3})
    pool = _pool(tmp_path, 4)
    plan = _plan(tmp_path, ratio=0.4, adverse_pool=str(pool))
    manifest = build_real_composite(plan)
    adverse = [e for e in manifest.entries if e.origin == ADVERSE]
    assert len(adverse) == 2
    assert manifest.count("pos", ORIGINAL) == 3
    assert manifest.count("neg", ORIGINAL) == 3
    sources = [e.source for e in adverse]
    assert len(set(sources)) == len(sources)  # drawn without replacement
    for e in adverse:
        assert e.label == "pos" and e.seed is None
        assert (tmp_path / "out" / e.path).read_bytes() == \
            open(e.source, "rb").read()


def test_real_composite_same_slots_as_synthetic(tmp_path):
    """Both builders must replace the same files for a given seed, so the
    model comparison isolates what fills the slot, not which slots."""
    _make_dataset(tmp_path / "src", {"pos": 6})
    pool = _pool(tmp_path, 6)
    synth = build_composite(_plan(tmp_path, ratio=0.5, seed=13))
    real_plan = dataclasses.replace(
        _plan(tmp_path, ratio=0.5, seed=13, adverse_pool=str(pool)),
        output_root=str(tmp_path / "out2"))
    real = build_real_composite(real_plan)
    synth_slots = {os.path.basename(e.source) for e in synth.entries
                   if e.origin == STYLED}
    real_slots = {e.path.split("/")[-1].split(".")[0] + ".png"
                  for e in real.entries if e.origin == ADVERSE}
    assert synth_slots == real_slots


def test_pool_smaller_than_slots_raises(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 10})
    pool = _pool(tmp_path, 1)
    plan = _plan(tmp_path, ratio=0.5, adverse_pool=str(pool))
    with pytest.raises(InsufficientPool, match="1"):
        build_real_composite(plan)


def test_real_composite_requires_pool(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 2})
    with pytest.raises(ValueError, match="adverse_pool"):
        build_real_composite(_plan(tmp_path))


def test_real_composite_is_deterministic(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 6, "neg": 2})
    pool = _pool(tmp_path, 5)
    outs = []
    for sub in ("a", "b"):
        plan = AugmentationPlan(
            source_root=str(tmp_path / "src"), target_class="pos",
            references=("unused.png",), output_root=str(tmp_path / sub),
            ratio=0.5, transfer=_quick_cfg(3), adverse_pool=str(pool))
        m = build_real_composite(plan)
        outs.append([(e.path, e.origin, e.source) for e in m.entries])
    assert outs[0] == outs[1]


def test_manifest_entry_dict_round_trip():
    e = ManifestEntry("pos/x.png", "pos", STYLED, "/data/x.png", 42)
    assert ManifestEntry.from_dict(e.to_dict()) == e


# -- iteration series ----------------------------------------------------------

def test_series_row_matches_standalone_build(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 5, "neg": 2})
    cfg = TransferConfig(iterations=2, steps_per_iteration=3, seed=17)
    plan = _plan(tmp_path, ratio=0.4, transfer=cfg)
    row = build_composite_series(plan, [2])[2]
    solo = build_composite(
        dataclasses.replace(plan, output_root=str(tmp_path / "solo")))
    assert [e.to_dict() for e in row.entries] == [e.to_dict() for e in solo.entries]
    assert row.config_digest == solo.config_digest
    for e in row.entries:
        assert (os.path.join(row.root, e.path) != os.path.join(solo.root, e.path))
        with open(os.path.join(row.root, e.path), "rb") as a, \
                open(os.path.join(solo.root, e.path), "rb") as b:
            assert a.read() == b.read()


def test_series_shares_slots_and_seeds_across_rows(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 4})
    cfg = TransferConfig(iterations=1, steps_per_iteration=2, seed=9)
    plan = _plan(tmp_path, ratio=0.5, transfer=cfg)
    series = build_composite_series(plan, [3, 1])
    assert sorted(series) == [1, 3]
    s1 = [e for e in series[1].entries if e.origin == STYLED]
    s3 = [e for e in series[3].entries if e.origin == STYLED]
    assert len(s1) == 2
    assert [e.seed for e in s1] == [e.seed for e in s3]
    assert [e.path for e in s1] == [e.path for e in s3]
    changed = False
    for a, b in zip(s1, s3):
        pa = open(os.path.join(series[1].root, a.path), "rb").read()
        pb = open(os.path.join(series[3].root, b.path), "rb").read()
        changed = changed or pa != pb
    assert changed, "more optimization iterations left every pixel untouched"


def test_series_rejects_empty_and_bad_counts(tmp_path):
    _make_dataset(tmp_path / "src", {"pos": 2})
    with pytest.raises(ValueError):
        build_composite_series(_plan(tmp_path), [])
    with pytest.raises(ValueError):
        build_composite_series(_plan(tmp_path), [0, 2])

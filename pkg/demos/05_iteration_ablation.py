"""How synthesis depth affects downstream accuracy.

Longer optimization pushes the styled images further toward the reference
statistics, which is not automatically better for training. This sweep
builds one composite per iteration budget from a single synthesis pass
(the trajectory through iteration c does not depend on what follows it)
and trains a fresh model on each.

At this scale the ordering bounces around between runs; treat the printed
numbers as a record of one draw, not a law.
"""

import os

from styleaug import (
    AugmentationPlan,
    DatasetManifest,
    iteration_ablation,
    make_benchmark,
)
from styleaug.datagen import benchmark_train_config, benchmark_transfer_config

OUT = os.path.join(os.path.dirname(__file__), "out", "ablation")
os.makedirs(OUT, exist_ok=True)

paths = make_benchmark(os.path.join(OUT, "bench"), train_per_class=40,
                       adverse_test=60, negative_test=60, pool_size=5, seed=5)

plan = AugmentationPlan(
    source_root=paths["train"],
    target_class="vehicle",
    references=(paths["reference"],),
    output_root=os.path.join(OUT, "series"),
    ratio=0.2,
    transfer=benchmark_transfer_config(),
)

reports = iteration_ablation(
    iteration_counts=[3, 5, 7, 10],
    plan=plan,
    cfg=benchmark_train_config(runs=3, seed=2),
    tests={"adverse": DatasetManifest.from_directory(paths["adverse_test"]),
           "negative": DatasetManifest.from_directory(paths["negative_test"])},
    positive_class="vehicle",
)

print("iterations  adverse tp      negative fp")
for count in sorted(reports):
    tp = reports[count].cell("styled", "adverse", "tp")
    fp = reports[count].cell("styled", "negative", "fp")
    print(f"{count:10d}  {tp.formatted():14s}  {fp.formatted()}")

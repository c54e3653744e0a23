"""The core claim, at desk scale: styled data buys adverse-domain recall.

Three models, identical seeds. One sees only clean training data, one a
20:80 styled composite, one a composite where the restyled entries are
replaced by real adverse frames. Training on clean data leaves heavy
weather looking like the haze-carrying distractor class, so the clean
model misses adverse vehicles almost entirely. The styled composite
transfers just the texture and recovers much of the recall; the real
adverse data does even better on recall but pays with false alarms on
glyph-free weather.

This is a shrunken version of the shipped benchmark (the acceptance suite
runs the full 500-per-class, 20-run configuration). Expect a couple of
minutes.
"""

import dataclasses
import os

from styleaug import (
    AugmentationPlan,
    DatasetManifest,
    build_composite,
    build_real_composite,
    make_benchmark,
    run_experiment,
)
from styleaug.datagen import benchmark_train_config, benchmark_transfer_config

OUT = os.path.join(os.path.dirname(__file__), "out", "directional")
os.makedirs(OUT, exist_ok=True)

paths = make_benchmark(os.path.join(OUT, "bench"), train_per_class=120,
                       adverse_test=80, negative_test=80, pool_size=40, seed=0)

clean = DatasetManifest.from_directory(paths["train"])

plan = AugmentationPlan(
    source_root=paths["train"],
    target_class="vehicle",
    references=(paths["reference"],),
    output_root=os.path.join(OUT, "styled"),
    ratio=0.2,
    transfer=benchmark_transfer_config(),
)
styled = build_composite(plan)

real = build_real_composite(dataclasses.replace(
    plan, output_root=os.path.join(OUT, "real-adverse"),
    adverse_pool=paths["adverse_pool"]))

report = run_experiment(
    models={"clean": clean, "styled": styled, "real-adverse": real},
    tests={"adverse": DatasetManifest.from_directory(paths["adverse_test"]),
           "negative": DatasetManifest.from_directory(paths["negative_test"])},
    cfg=benchmark_train_config(runs=5),
    positive_class="vehicle",
)

print(report.table())
report.save(os.path.join(OUT, "report.json"))
print(f"full report saved to {os.path.join(OUT, 'report.json')}")

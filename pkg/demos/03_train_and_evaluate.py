"""Training the small classifier and reading its detection rates.

A manifest is all the trainer needs. We fit the two-class network on
clean glyphs, confirm it separates the classes it was shown, then score
it on heavy-weather vehicles it has never seen. The collapse on that
last set is the domain gap this library exists to close; demo 04 shows
the styled composite recovering it. Saving and reloading the model
changes nothing about its answers.
"""

import os

from styleaug import (
    Classifier,
    DatasetManifest,
    TrainConfig,
    evaluate,
    make_benchmark,
    train,
)

OUT = os.path.join(os.path.dirname(__file__), "out", "train-eval")
os.makedirs(OUT, exist_ok=True)

paths = make_benchmark(os.path.join(OUT, "bench"), train_per_class=60,
                       adverse_test=40, negative_test=40, pool_size=5, seed=1)

manifest = DatasetManifest.from_directory(paths["train"])

# Short schedule, no validation split, single run. Learning rate and
# dropout stay at their defaults (5e-4 and 0.5); three epochs is plenty
# for 32x32 glyphs learned from scratch.
cfg = TrainConfig(epochs=3, batch_size=4, runs=1, seed=9,
                  validation_fraction=0.0)
clf = train(manifest, cfg=cfg)

for row in clf.history[-2:]:
    print(f"epoch {row['epoch']}: training loss {row['train_loss']:.4f}")

# Resubstitution first: on its own training images the model lands far
# from chance, so the collapse below is a domain gap rather than a model
# that never learned anything.
fit = evaluate(clf, manifest, positive_class="vehicle")
print(f"training-set tp rate: {fit.tp_rate:.3f} over {fit.positives} images, "
      f"fp rate {fit.fp_rate:.3f}")

adverse = evaluate(clf, DatasetManifest.from_directory(paths["adverse_test"]),
                   positive_class="vehicle")
negative = evaluate(clf, DatasetManifest.from_directory(paths["negative_test"]),
                    positive_class="vehicle")

# The adverse set holds only vehicles, so only the true-positive side is
# defined there; the negative set is the mirror case.
print(f"adverse tp rate:      {adverse.tp_rate:.3f} over {adverse.positives} images")
print(f"negative fp rate:     {negative.fp_rate:.3f} over {negative.negatives} images")

model_path = os.path.join(OUT, "model.stwb")
clf.save(model_path)
restored = Classifier.load(model_path)
again = evaluate(restored, DatasetManifest.from_directory(paths["adverse_test"]),
                 positive_class="vehicle")
assert again.tp_rate == adverse.tp_rate
print(f"model round-trips through {model_path}")

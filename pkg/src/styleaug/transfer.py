"""Iterative pixel-space synthesis.

An image is initialized (seeded white noise or a copy of the content
image), then driven downhill on the composite loss by plain gradient
descent or adaptive-moment updates, with pixels clamped to the valid
range after every step. Snapshots of the work in progress are captured
at scheduled iterations, one iteration being a fixed number of steps.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeMismatch, StepSizeError
from .losses import ContentTarget, LossParts, LossWeights, StyleTarget, gram, total_loss_parts
from .network import DEFAULT_CONTENT_TAG, DEFAULT_STYLE_TAGS
from .seeding import derive_seed, rng

DTYPE = np.float32

PLAIN_GD = "plain-gd"
ADAPTIVE = "adaptive-moment"
WHITE_NOISE = "white-noise"
CONTENT_COPY = "content-copy"


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = ADAPTIVE
    step_size: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in (PLAIN_GD, ADAPTIVE):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.step_size <= 0:
            raise ValueError("step size must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("moment decays must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("optimizer eps must be positive")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "step_size": self.step_size,
                "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        return cls(**d)


@dataclass(frozen=True)
class TransferConfig:
    """Everything a synthesis run depends on, hashable and serializable."""

    weights: LossWeights | None = None
    style_tags: tuple = DEFAULT_STYLE_TAGS
    content_tag: str = DEFAULT_CONTENT_TAG
    iterations: int = 7
    steps_per_iteration: int = 50
    snapshot_iterations: frozenset = frozenset()
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    init: str = WHITE_NOISE
    seed: int = 0
    clamp: tuple = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "style_tags", tuple(self.style_tags))
        object.__setattr__(
            self, "snapshot_iterations", frozenset(int(i) for i in self.snapshot_iterations))
        if self.weights is None:
            object.__setattr__(
                self, "weights", LossWeights.with_uniform_layers(self.style_tags))
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.steps_per_iteration < 1:
            raise ValueError("steps_per_iteration must be >= 1")
        if not all(1 <= i <= self.iterations for i in self.snapshot_iterations):
            raise ValueError(
                f"snapshot iterations {sorted(self.snapshot_iterations)} must lie "
                f"in [1, {self.iterations}]")
        if self.init not in (WHITE_NOISE, CONTENT_COPY):
            raise ValueError(f"unknown init mode {self.init!r}")
        lo, hi = self.clamp
        if not lo < hi:
            raise ValueError("clamp range must be ordered")
        missing = [t for t in self.style_tags if t not in self.weights.layer_weights]
        if missing:
            raise ValueError(f"layer weights missing for style tags {missing}")

    def to_dict(self) -> dict:
        w = self.weights
        return {
            "weights": {
                "content_weight": w.content_weight,
                "style_weight": w.style_weight,
                "tv_weight": w.tv_weight,
                "layer_weights": dict(w.layer_weights),
            },
            "style_tags": list(self.style_tags),
            "content_tag": self.content_tag,
            "iterations": self.iterations,
            "steps_per_iteration": self.steps_per_iteration,
            "snapshot_iterations": sorted(self.snapshot_iterations),
            "optimizer": self.optimizer.to_dict(),
            "init": self.init,
            "seed": self.seed,
            "clamp": list(self.clamp),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransferConfig":
        d = dict(d)
        if "weights" in d and d["weights"] is not None:
            d["weights"] = LossWeights(**d["weights"])
        if "optimizer" in d and d["optimizer"] is not None:
            d["optimizer"] = OptimizerConfig.from_dict(d["optimizer"])
        for key in ("style_tags", "clamp"):
            if key in d:
                d[key] = tuple(d[key])
        if "snapshot_iterations" in d:
            d["snapshot_iterations"] = frozenset(d["snapshot_iterations"])
        return cls(**d)

    def reseeded(self, seed: int) -> "TransferConfig":
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class TransferResult:
    image: np.ndarray
    snapshots: dict
    trace: tuple

    @property
    def initial_total(self) -> float:
        return self.trace[0].total

    @property
    def final_total(self) -> float:
        return self.trace[-1].total


def prepare_targets(net, content_image, reference_image, config: TransferConfig):
    """Record the content activations and reference Gram matrices."""
    content_image = np.asarray(content_image, dtype=DTYPE)
    reference_image = np.asarray(reference_image, dtype=DTYPE)
    c_acts = net.forward_record(content_image, {config.content_tag})
    s_acts = net.forward_record(reference_image, set(config.style_tags))
    content = ContentTarget(tag=config.content_tag, p=c_acts[config.content_tag])
    style = StyleTarget(
        grams={t: gram(s_acts[t]) for t in config.style_tags},
        sizes={t: s_acts[t].shape for t in config.style_tags},
    )
    return content, style


def _initial_image(config, content_image, shape):
    if config.init == CONTENT_COPY:
        if content_image is None:
            raise ShapeMismatch("content-copy init needs the content image")
        x = np.array(content_image, dtype=DTYPE)
    else:
        if shape is None and content_image is not None:
            shape = np.asarray(content_image).shape
        if shape is None:
            raise ShapeMismatch("white-noise init needs a shape or a content image")
        x = rng(derive_seed(config.seed, "init")).random(shape, dtype=DTYPE)
    lo, hi = config.clamp
    return np.clip(x, lo, hi)


def synthesize(net, targets, config: TransferConfig, *,
               content_image=None, shape=None) -> TransferResult:
    """Minimize the composite loss from a fresh image; snapshots included.

    The loss trace records the value seen at the top of each step, before
    that step's update, so trace[0] is the starting loss. If the run never
    gets below its starting loss the step size diverged: StepSizeError.
    """
    content_target, style_target = targets
    x = _initial_image(config, content_image, shape)
    lo, hi = config.clamp
    opt = config.optimizer
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    trace = []
    snapshots = {}
    t = 0
    for iteration in range(1, config.iterations + 1):
        for _ in range(config.steps_per_iteration):
            total, grad, parts = total_loss_parts(
                x, net, content_target, style_target, config.weights)
            if not np.isfinite(total):
                raise StepSizeError(f"loss became non-finite at step {t}")
            trace.append(parts)
            t += 1
            if opt.kind == ADAPTIVE:
                m = DTYPE(opt.beta1) * m + DTYPE(1 - opt.beta1) * grad
                v = DTYPE(opt.beta2) * v + DTYPE(1 - opt.beta2) * grad * grad
                mhat = m / DTYPE(1 - opt.beta1 ** t)
                vhat = v / DTYPE(1 - opt.beta2 ** t)
                x = x - DTYPE(opt.step_size) * mhat / (np.sqrt(vhat) + DTYPE(opt.eps))
            else:
                x = x - DTYPE(opt.step_size) * grad
            x = np.clip(x, lo, hi)
        if iteration in config.snapshot_iterations:
            snapshots[iteration] = x.copy()
    initial, final = trace[0].total, trace[-1].total
    if not (final < initial or (initial == 0.0 and final == 0.0)):
        raise StepSizeError(
            f"no loss decrease achieved: started at {initial:.6g}, "
            f"ended at {final:.6g}; lower the step size")
    return TransferResult(image=x, snapshots=snapshots, trace=tuple(trace))


@dataclass(frozen=True)
class BatchItem:
    """Outcome of one batch entry; exactly one of result/error is set."""

    index: int
    result: TransferResult | None = None
    error: Exception | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def batch_synthesize(net, content_images, reference_image, config: TransferConfig):
    """Synthesize against one reference; per-image seed = hash(seed, index).

    Entries run independently: a failing image yields a BatchItem carrying
    the exception while the rest of the batch completes.
    """
    if not len(content_images):
        raise ValueError("batch_synthesize needs at least one content image")
    items = []
    for i, image in enumerate(content_images):
        cfg = config.reseeded(derive_seed(config.seed, i))
        try:
            targets = prepare_targets(net, image, reference_image, cfg)
            result = synthesize(net, targets, cfg, content_image=image)
            items.append(BatchItem(index=i, result=result))
        except (ShapeMismatch, StepSizeError) as exc:
            items.append(BatchItem(index=i, error=exc))
    return items

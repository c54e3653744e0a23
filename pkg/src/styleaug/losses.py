"""Loss stack for pixel-space synthesis: content, Gram-matrix style, TV.

Every operation returns both the scalar value and the analytic gradient
with respect to its direct input (feature maps for the data terms, pixels
for the smoothness term). Values are accumulated in float64; gradients
stay float32 like the rest of the pipeline.

Conventions worth stating once: the Gram matrix carries no normalization
of its own, the 1/(4 N^2 M^2) prefactor lives entirely in style_energy,
and feature maps are [filters, positions] as produced by forward_record.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, UnknownTag

DTYPE = np.float32

DEFAULT_CONTENT_WEIGHT = 3e-4
DEFAULT_STYLE_WEIGHT = 1.0
DEFAULT_TV_WEIGHT = 1e-5


# --------------------------------------------------------------------------
# Targets and weights
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StyleTarget:
    """Per-tag Gram matrices A (one [N, N] per style tag) plus the (N, M)
    extents of the reference activations they were computed from."""

    grams: dict
    sizes: dict

    def __post_init__(self):
        grams = {}
        for tag, a in self.grams.items():
            a = np.asarray(a, dtype=DTYPE)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ShapeMismatch(f"style target {tag!r} must be square, got {a.shape}")
            if tag not in self.sizes:
                raise UnknownTag(f"style target {tag!r} has no recorded extents")
            n, m = self.sizes[tag]
            if a.shape[0] != n:
                raise ShapeMismatch(
                    f"style target {tag!r} is {a.shape[0]}x{a.shape[0]}, "
                    f"recorded filter count is {n}")
            if not np.allclose(a, a.T, atol=1e-5):
                raise ShapeMismatch(f"style target {tag!r} is not symmetric")
            grams[tag] = a
        object.__setattr__(self, "grams", grams)
        object.__setattr__(
            self, "sizes", {t: (int(n), int(m)) for t, (n, m) in self.sizes.items()})

    @property
    def tags(self):
        return tuple(self.grams)


@dataclass(frozen=True)
class ContentTarget:
    """Reference activations [N, M] recorded at a single content tag."""

    tag: str
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=DTYPE)
        if p.ndim != 2:
            raise ShapeMismatch(f"content target must be [filters, positions], got {p.shape}")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights: alpha for content, beta for style, a TV weight, and
    per-tag layer weights that must be a convex combination."""

    content_weight: float = DEFAULT_CONTENT_WEIGHT
    style_weight: float = DEFAULT_STYLE_WEIGHT
    tv_weight: float = DEFAULT_TV_WEIGHT
    layer_weights: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.content_weight, self.style_weight, self.tv_weight) < 0:
            raise ValueError("loss weights must be nonnegative")
        if any(w < 0 for w in self.layer_weights.values()):
            raise ValueError("layer weights must be nonnegative")
        if self.layer_weights:
            total = sum(self.layer_weights.values())
            if abs(total - 1.0) > 1e-6:
                raise ValueError(f"layer weights must sum to 1, got {total}")

    @classmethod
    def with_uniform_layers(cls, style_tags, **kw) -> "LossWeights":
        tags = tuple(style_tags)
        return cls(layer_weights={t: 1.0 / len(tags) for t in tags}, **kw)

    def scaled(self, c: float) -> "LossWeights":
        return LossWeights(
            content_weight=self.content_weight * c,
            style_weight=self.style_weight * c,
            tv_weight=self.tv_weight * c,
            layer_weights=self.layer_weights,
        )


# --------------------------------------------------------------------------
# Elementary losses
# --------------------------------------------------------------------------

def gram(f) -> np.ndarray:
    """G = F F^T over [filters, positions]; unnormalized by design."""
    f = np.asarray(f, dtype=DTYPE)
    if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
        raise ShapeMismatch(f"gram input must be [N>=1, M>=1], got {f.shape}")
    return f @ f.T


def content_loss(f, p):
    f = np.asarray(f, dtype=DTYPE)
    p = np.asarray(p, dtype=DTYPE)
    if f.shape != p.shape:
        raise ShapeMismatch(f"content shapes differ: {f.shape} vs {p.shape}")
    d = f - p
    value = 0.5 * float(np.sum(d.astype(np.float64) ** 2))
    return value, d


def style_energy(f, a):
    """Mean-squared Gram distance with the 1/(4 N^2 M^2) prefactor.

    grad_F follows from G = F F^T and the symmetry of G - A:
    d/dF [sum (G-A)^2 / (4 N^2 M^2)] = (G - A) F / (N^2 M^2).
    """
    f = np.asarray(f, dtype=DTYPE)
    a = np.asarray(a, dtype=DTYPE)
    g = gram(f)
    if a.shape != g.shape:
        raise ShapeMismatch(f"style target is {a.shape}, gram is {g.shape}")
    n, m = f.shape
    norm = 1.0 / (float(n) * float(n) * float(m) * float(m))
    diff = g - a
    value = 0.25 * norm * float(np.sum(diff.astype(np.float64) ** 2))
    grad = (DTYPE(norm) * (diff @ f)).astype(DTYPE)
    return value, grad


def style_loss(activations, target: StyleTarget, layer_weights):
    """Weighted sum of per-tag style energies; grads keyed by tag."""
    value = 0.0
    grads = {}
    for tag in target.tags:
        if tag not in activations:
            raise UnknownTag(f"no activation recorded for style tag {tag!r}")
        if tag not in layer_weights:
            raise UnknownTag(f"no layer weight for style tag {tag!r}")
        w = float(layer_weights[tag])
        e, g = style_energy(activations[tag], target.grams[tag])
        value += w * e
        grads[tag] = DTYPE(w) * g
    return value, grads


def tv_loss(image):
    """Sum of squared adjacent-pixel differences, vertical plus horizontal.

    Accepts any [C, H, W] with H, W >= 1; with a single row or column the
    corresponding difference set is simply empty.
    """
    x = np.asarray(image, dtype=DTYPE)
    if x.ndim != 3 or x.shape[1] < 1 or x.shape[2] < 1:
        raise ShapeMismatch(f"tv_loss needs a [C, H, W] image, got {x.shape}")
    dv = x[:, 1:, :] - x[:, :-1, :]
    dh = x[:, :, 1:] - x[:, :, :-1]
    value = float(np.sum(dv.astype(np.float64) ** 2) + np.sum(dh.astype(np.float64) ** 2))
    grad = np.zeros_like(x)
    grad[:, 1:, :] += 2.0 * dv
    grad[:, :-1, :] -= 2.0 * dv
    grad[:, :, 1:] += 2.0 * dh
    grad[:, :, :-1] -= 2.0 * dh
    return value, grad


# --------------------------------------------------------------------------
# Composite
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LossParts:
    """Weighted contributions; content + style + tv = total."""

    content: float
    style: float
    tv: float

    @property
    def total(self) -> float:
        return self.content + self.style + self.tv


def total_loss(image, net, content_target: ContentTarget,
               style_target: StyleTarget, weights: LossWeights):
    value, grad, _ = total_loss_parts(image, net, content_target, style_target, weights)
    return value, grad


def total_loss_parts(image, net, content_target, style_target, weights):
    """(value, pixel gradient, LossParts) in one pass.

    Tag gradients from the data terms are injected into a single backward
    sweep; the TV gradient is added directly in pixel space.
    """
    alpha = float(weights.content_weight)
    beta = float(weights.style_weight)
    tvw = float(weights.tv_weight)

    tags = set()
    if alpha != 0.0:
        tags.add(content_target.tag)
    if beta != 0.0:
        tags.update(style_target.tags)

    image = np.asarray(image, dtype=DTYPE)
    tag_grads = {}
    c_part = s_part = tv_part = 0.0

    if tags:
        acts = net.forward_record(image, tags)
        if alpha != 0.0:
            cv, cg = content_loss(acts[content_target.tag], content_target.p)
            c_part = alpha * cv
            tag_grads[content_target.tag] = DTYPE(alpha) * cg
        if beta != 0.0:
            sv, sgrads = style_loss(acts, style_target, weights.layer_weights)
            s_part = beta * sv
            for tag, g in sgrads.items():
                prev = tag_grads.get(tag)
                g = DTYPE(beta) * g
                tag_grads[tag] = g if prev is None else prev + g
        grad = net.backward_to_input(image, tag_grads)
    else:
        grad = np.zeros_like(image)

    if tvw != 0.0:
        tvv, tvg = tv_loss(image)
        tv_part = tvw * tvv
        grad = grad + DTYPE(tvw) * tvg

    parts = LossParts(content=c_part, style=s_part, tv=tv_part)
    return parts.total, grad.astype(DTYPE), parts

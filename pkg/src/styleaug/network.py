"""Sequential CNN assembly with tagged activation capture.

A `NetworkSpec` names an ordered list of (tag, layer) pairs; binding it to a
`WeightStore` yields a `Network` whose forward pass can record activations at
any tagged layer and whose backward pass chains injected per-tag gradients all
the way down to the input pixels.

Weight files use a little-endian binary container ("STWB"):

    magic "STWB" | u32 version=1 | u32 entry_count
    per entry: u32 tag_len | tag utf-8 | u8 rank | u64 dims[rank] | f32 data
    trailer:   u32 json_len | json utf-8 {"means": [...], "scales": [...]}

Conv/Dense parameters are stored as two entries per layer tag,
"<tag>.weight" and "<tag>.bias".
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import FormatError, ShapeMismatch, UnknownTag
from .seeding import derive_seed, rng

DTYPE = np.float32

STWB_MAGIC = b"STWB"
STWB_VERSION = 1


# --------------------------------------------------------------------------
# Layer kinds
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if min(self.out_channels, self.kernel_h, self.kernel_w, self.stride) < 1:
            raise ValueError(f"conv extents must be strictly positive: {self}")
        if self.padding < 0:
            raise ValueError(f"conv padding must be >= 0: {self}")


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool:
    k: int
    stride: int

    def __post_init__(self):
        if min(self.k, self.stride) < 1:
            raise ValueError(f"pool extents must be strictly positive: {self}")


@dataclass(frozen=True)
class AvgPool:
    k: int
    stride: int

    def __post_init__(self):
        if min(self.k, self.stride) < 1:
            raise ValueError(f"pool extents must be strictly positive: {self}")


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    out_features: int

    def __post_init__(self):
        if self.out_features < 1:
            raise ValueError(f"dense width must be strictly positive: {self}")


@dataclass(frozen=True)
class Dropout:
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1): {self}")


@dataclass(frozen=True)
class Softmax:
    pass


LayerKind = Conv | ReLU | MaxPool | AvgPool | Flatten | Dense | Dropout | Softmax

_KIND_NAMES = {
    Conv: "conv", ReLU: "relu", MaxPool: "maxpool", AvgPool: "avgpool",
    Flatten: "flatten", Dense: "dense", Dropout: "dropout", Softmax: "softmax",
}
_NAME_KINDS = {v: k for k, v in _KIND_NAMES.items()}


def layer_to_dict(kind: LayerKind) -> dict:
    d = {"kind": _KIND_NAMES[type(kind)]}
    d.update(vars(kind))
    return d


def layer_from_dict(d: dict) -> LayerKind:
    d = dict(d)
    name = d.pop("kind")
    if name not in _NAME_KINDS:
        raise FormatError(f"unknown layer kind {name!r}")
    return _NAME_KINDS[name](**d)


# --------------------------------------------------------------------------
# NetworkSpec
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkSpec:
    """Ordered (tag, layer) pairs plus input channel count and preprocessing."""

    layers: tuple
    input_channels: int = 3
    mean: tuple = (0.5, 0.5, 0.5)
    scale: tuple = (0.5, 0.5, 0.5)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple((t, k) for t, k in self.layers))
        seen = set()
        for tag, kind in self.layers:
            if not tag:
                raise ValueError("layer tags must be non-empty")
            if tag in seen:
                raise ValueError(f"duplicate layer tag {tag!r}")
            seen.add(tag)
        if self.input_channels < 1:
            raise ValueError("input_channels must be >= 1")
        if len(self.mean) != self.input_channels or len(self.scale) != self.input_channels:
            raise ValueError("mean/scale must have one value per input channel")
        if any(s == 0 for s in self.scale):
            raise ValueError("preprocessing scale must be non-zero")

    @property
    def tags(self):
        return tuple(t for t, _ in self.layers)

    def kind(self, tag: str) -> LayerKind:
        for t, k in self.layers:
            if t == tag:
                return k
        raise UnknownTag(tag)

    def shape_chain(self, hw: tuple) -> list:
        """Per-layer output shapes for a [input_channels, H, W] input.

        Raises ShapeMismatch where a layer cannot consume its input, which
        also validates chain compatibility for the declared channel count.
        """
        shape = (self.input_channels, int(hw[0]), int(hw[1]))
        out = []
        for tag, kind in self.layers:
            shape = _layer_output_shape(tag, kind, shape)
            out.append((tag, shape))
        return out

    def to_dict(self) -> dict:
        return {
            "layers": [[t, layer_to_dict(k)] for t, k in self.layers],
            "input_channels": self.input_channels,
            "mean": list(self.mean),
            "scale": list(self.scale),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(
            layers=tuple((t, layer_from_dict(k)) for t, k in d["layers"]),
            input_channels=d["input_channels"],
            mean=tuple(d["mean"]),
            scale=tuple(d["scale"]),
        )


def _layer_output_shape(tag, kind, shape):
    if isinstance(kind, Conv):
        if len(shape) != 3:
            raise ShapeMismatch(f"layer {tag!r}: conv needs a CHW input, got {shape}")
        c, h, w = shape
        ho = (h + 2 * kind.padding - kind.kernel_h) // kind.stride + 1
        wo = (w + 2 * kind.padding - kind.kernel_w) // kind.stride + 1
        if h + 2 * kind.padding < kind.kernel_h or w + 2 * kind.padding < kind.kernel_w \
                or ho < 1 or wo < 1:
            raise ShapeMismatch(f"layer {tag!r}: kernel does not fit {h}x{w}")
        return (kind.out_channels, ho, wo)
    if isinstance(kind, (MaxPool, AvgPool)):
        if len(shape) != 3:
            raise ShapeMismatch(f"layer {tag!r}: pool needs a CHW input, got {shape}")
        c, h, w = shape
        if h < kind.k or w < kind.k:
            raise ShapeMismatch(f"layer {tag!r}: pool window {kind.k} exceeds {h}x{w}")
        return (c, (h - kind.k) // kind.stride + 1, (w - kind.k) // kind.stride + 1)
    if isinstance(kind, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(kind, Dense):
        if len(shape) != 1:
            raise ShapeMismatch(f"layer {tag!r}: dense needs a flat input, got {shape}")
        return (kind.out_features,)
    # ReLU / Dropout / Softmax preserve shape
    return shape


def default_spec() -> NetworkSpec:
    """The desk-scale feature extractor: a miniature VGG-style conv stack.

    Style activations are conventionally read at the early ReLUs (c1, c3),
    content at the deepest one (c4).
    """
    return NetworkSpec(
        layers=(
            ("conv1", Conv(16, 3, 3, stride=1, padding=1)),
            ("c1", ReLU()),
            ("conv2", Conv(16, 3, 3, stride=1, padding=1)),
            ("c2", ReLU()),
            ("pool1", MaxPool(2, 2)),
            ("conv3", Conv(32, 3, 3, stride=1, padding=1)),
            ("c3", ReLU()),
            ("conv4", Conv(32, 3, 3, stride=1, padding=1)),
            ("c4", ReLU()),
            ("pool2", MaxPool(2, 2)),
        ),
        input_channels=3,
    )


DEFAULT_STYLE_TAGS = ("c1", "c3")
DEFAULT_CONTENT_TAG = "c4"


# --------------------------------------------------------------------------
# WeightStore and the STWB container
# --------------------------------------------------------------------------

@dataclass
class WeightStore:
    """Tag -> (weights, bias) tensors plus preprocessing metadata."""

    entries: dict = field(default_factory=dict)
    means: tuple = (0.5, 0.5, 0.5)
    scales: tuple = (0.5, 0.5, 0.5)
    version: int = STWB_VERSION

    def __post_init__(self):
        self.entries = {
            tag: (np.asarray(w, dtype=DTYPE), np.asarray(b, dtype=DTYPE))
            for tag, (w, b) in self.entries.items()
        }
        self.means = tuple(float(m) for m in self.means)
        self.scales = tuple(float(s) for s in self.scales)


def save_weights(store: WeightStore, path) -> None:
    tensors = []
    for tag, (w, b) in store.entries.items():
        tensors.append((f"{tag}.weight", w))
        tensors.append((f"{tag}.bias", b))
    meta = {"means": list(store.means), "scales": list(store.scales)}
    with open(path, "wb") as f:
        f.write(STWB_MAGIC)
        f.write(struct.pack("<II", STWB_VERSION, len(tensors)))
        for name, arr in tensors:
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        blob = json.dumps(meta).encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)


def load_weights(path) -> WeightStore:
    """Read an STWB weight container; shapes are validated lazily at bind time."""
    with open(path, "rb") as f:
        data = f.read()
    off = 0

    def take(n, what):
        nonlocal off
        if off + n > len(data):
            raise FormatError(f"truncated weight file while reading {what}")
        chunk = data[off : off + n]
        off += n
        return chunk

    if take(4, "magic") != STWB_MAGIC:
        raise FormatError("bad magic: not an STWB weight file")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != STWB_VERSION:
        raise FormatError(f"unsupported STWB version {version} (supported: {STWB_VERSION})")

    raw = {}
    for _ in range(count):
        (tag_len,) = struct.unpack("<I", take(4, "tag length"))
        tag = take(tag_len, "tag").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank, "dims")) if rank else ()
        n = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(take(4 * n, f"data of {tag!r}"), dtype="<f4").reshape(dims)
        raw[tag] = arr.astype(DTYPE)

    (meta_len,) = struct.unpack("<I", take(4, "metadata length"))
    meta = json.loads(take(meta_len, "metadata").decode("utf-8"))

    entries = {}
    for name, arr in raw.items():
        if name.endswith(".weight"):
            tag = name[: -len(".weight")]
            bias = raw.get(f"{tag}.bias")
            if bias is None:
                raise FormatError(f"entry {tag!r} has weights but no bias")
            entries[tag] = (arr, bias)
        elif not name.endswith(".bias"):
            raise FormatError(f"unrecognized entry name {name!r}")
    for name in raw:
        if name.endswith(".bias") and name[: -len(".bias")] not in entries:
            raise FormatError(f"entry {name!r} has a bias but no weights")

    return WeightStore(
        entries=entries,
        means=tuple(meta.get("means", (0.5, 0.5, 0.5))),
        scales=tuple(meta.get("scales", (0.5, 0.5, 0.5))),
        version=version,
    )


def he_init_store(spec: NetworkSpec, seed: int = 0) -> WeightStore:
    """Seeded scaled-Gaussian init for every Conv layer in the spec.

    Random features are enough to exercise style transfer end to end when no
    trained weight file is available. Specs containing Dense layers need the
    input extents to size the flat fan-in; use `Network(..., input_hw=...)`.
    """
    if any(isinstance(k, Dense) for _, k in spec.layers):
        raise ShapeMismatch("specs with Dense layers need input_hw to initialize")
    entries = {}
    in_c = spec.input_channels
    for tag, kind in spec.layers:
        if isinstance(kind, Conv):
            fan_in = in_c * kind.kernel_h * kind.kernel_w
            g = rng(derive_seed(seed, "init", tag))
            w = g.standard_normal(
                (kind.out_channels, in_c, kind.kernel_h, kind.kernel_w)
            ).astype(DTYPE) * DTYPE(np.sqrt(2.0 / fan_in))
            entries[tag] = (w, np.zeros(kind.out_channels, DTYPE))
            in_c = kind.out_channels
    return WeightStore(entries=entries, means=spec.mean, scales=spec.scale)


# --------------------------------------------------------------------------
# Bound network
# --------------------------------------------------------------------------

class Network:
    """A NetworkSpec bound to concrete weights.

    The layer structure is fixed after construction; the bound arrays are the
    live parameters, and a trainer may update them in place.
    """

    def __init__(self, spec: NetworkSpec, store: WeightStore | None = None, *,
                 init_seed: int = 0, input_hw: tuple | None = None):
        self.spec = spec
        if store is None:
            store = _init_store_for(spec, init_seed, input_hw)
        self.store = store
        self.means = np.asarray(store.means, dtype=DTYPE).reshape(-1, 1, 1)
        self.scales = np.asarray(store.scales, dtype=DTYPE).reshape(-1, 1, 1)
        if self.means.shape[0] != spec.input_channels:
            raise ShapeMismatch(
                f"store metadata has {self.means.shape[0]} channels, "
                f"spec declares {spec.input_channels}"
            )
        self._bind()

    def _bind(self):
        """Check every Conv/Dense tag has a chain-compatible weight entry."""
        in_c = self.spec.input_channels
        for tag, kind in self.spec.layers:
            if isinstance(kind, Conv):
                if tag not in self.store.entries:
                    raise ShapeMismatch(f"no weights for conv layer {tag!r}")
                w, b = self.store.entries[tag]
                want = (kind.out_channels, in_c, kind.kernel_h, kind.kernel_w)
                if w.shape != want:
                    raise ShapeMismatch(
                        f"layer {tag!r}: weights {w.shape} do not match {want}")
                if b.shape != (kind.out_channels,):
                    raise ShapeMismatch(
                        f"layer {tag!r}: bias {b.shape} does not match {kind.out_channels}")
                in_c = kind.out_channels
            elif isinstance(kind, Dense):
                if tag not in self.store.entries:
                    raise ShapeMismatch(f"no weights for dense layer {tag!r}")
                w, b = self.store.entries[tag]
                if w.shape[0] != kind.out_features or b.shape != (kind.out_features,):
                    raise ShapeMismatch(
                        f"layer {tag!r}: weights {w.shape} do not match {kind}")

    # -- forward ------------------------------------------------------------

    def preprocess(self, image):
        image = np.asarray(image, dtype=DTYPE)
        if image.ndim == 3:
            return (image - self.means) / self.scales
        return (image - self.means[None]) / self.scales[None]

    def _forward(self, image, *, train=False, dropout_seed=0, dropout_counter=0):
        """Run all layers, caching each layer's input for the backward pass."""
        x = self.preprocess(image)
        caches = []
        for li, (tag, kind) in enumerate(self.spec.layers):
            extra = None
            if isinstance(kind, Conv):
                w, b = self.store.entries[tag]
                y = ops.conv2d_forward(x, w, b, kind.stride, kind.padding)
            elif isinstance(kind, ReLU):
                y = ops.relu_forward(x)
            elif isinstance(kind, MaxPool):
                y = ops.maxpool_forward(x, kind.k, kind.stride)
            elif isinstance(kind, AvgPool):
                y = ops.avgpool_forward(x, kind.k, kind.stride)
            elif isinstance(kind, Flatten):
                y = ops.flatten_forward(x)
            elif isinstance(kind, Dense):
                w, b = self.store.entries[tag]
                y = ops.dense_forward(x, w, b)
            elif isinstance(kind, Dropout):
                y, extra = ops.dropout_forward(
                    x, kind.rate, seed=derive_seed(dropout_seed, "layer", li),
                    counter=dropout_counter, train=train)
            elif isinstance(kind, Softmax):
                y = ops.softmax_forward(x)
                extra = y
            else:  # pragma: no cover
                raise TypeError(f"unhandled layer kind {kind!r}")
            caches.append((tag, kind, x, extra))
            x = y
        return x, caches

    def _backward(self, caches, out_shape, grad_out=None, tag_grads=None,
                  want_param_grads=False):
        """Chain gradients from the output (and/or injected tags) to the input.

        tag_grads values must match each tagged layer's *output* shape;
        out_shape is the shape of the network's final output. Returns
        (grad_input, param_grads) where param_grads maps tag to
        (grad_weights, grad_bias) when requested.
        """
        tag_grads = tag_grads or {}
        g = grad_out if grad_out is not None else np.zeros(out_shape, DTYPE)
        param_grads = {}
        for tag, kind, x, extra in reversed(caches):
            if tag in tag_grads:
                g = g + np.asarray(tag_grads[tag], dtype=DTYPE).reshape(g.shape)
            if isinstance(kind, Conv):
                w, _ = self.store.entries[tag]
                g, gw, gb = ops.conv2d_backward(x, w, g, kind.stride, kind.padding)
                if want_param_grads:
                    param_grads[tag] = (gw, gb)
            elif isinstance(kind, ReLU):
                g = ops.relu_backward(x, g)
            elif isinstance(kind, MaxPool):
                g = ops.maxpool_backward(x, kind.k, kind.stride, g)
            elif isinstance(kind, AvgPool):
                g = ops.avgpool_backward(x, kind.k, kind.stride, g)
            elif isinstance(kind, Flatten):
                g = ops.flatten_backward(x, g)
            elif isinstance(kind, Dense):
                w, _ = self.store.entries[tag]
                g, gw, gb = ops.dense_backward(x, w, g)
                if want_param_grads:
                    param_grads[tag] = (gw, gb)
            elif isinstance(kind, Dropout):
                g = ops.dropout_backward(g, kind.rate, extra)
            elif isinstance(kind, Softmax):
                g = ops.softmax_backward(extra, g)
        scales = self.scales if g.ndim == 3 else self.scales[None]
        g = (g / scales).astype(DTYPE)
        return g, param_grads

    # -- public API ----------------------------------------------------------

    def forward_record(self, image, tags) -> dict:
        """Activations at the requested tags, flattened to [filters, positions]."""
        acts, _, _ = self._forward_record(image, tags)
        return acts

    def _check_image(self, image):
        image = np.asarray(image, dtype=DTYPE)
        if image.ndim != 3 or image.shape[0] != self.spec.input_channels:
            raise ShapeMismatch(
                f"expected [{self.spec.input_channels}, H, W] image, got {image.shape}")
        return image

    def _forward_record(self, image, tags):
        tags = set(tags)
        unknown = tags - set(self.spec.tags)
        if unknown:
            raise UnknownTag(f"unknown tags {sorted(unknown)}")
        image = self._check_image(image)
        out, caches = self._forward(image)
        acts = {}
        for i, (tag, kind, x, extra) in enumerate(caches):
            if tag in tags:
                val = caches[i + 1][2] if i + 1 < len(caches) else out
                acts[tag] = _to_filters_positions(val)
        return acts, caches, out

    def backward_to_input(self, image, per_tag_gradients) -> np.ndarray:
        """Pixel gradient of sum_tag <grad_tag, activation_tag>, chain-ruled
        through every layer below each tag (preprocessing scale included)."""
        acts, caches, out = self._forward_record(image, set(per_tag_gradients))
        for tag, g in per_tag_gradients.items():
            g = np.asarray(g, dtype=DTYPE)
            if g.shape != acts[tag].shape:
                raise ShapeMismatch(
                    f"gradient for {tag!r} has shape {g.shape}, "
                    f"activation is {acts[tag].shape}")
        return self._inject_backward(caches, out.shape, per_tag_gradients)

    def _inject_backward(self, caches, out_shape, tag_grads):
        """Backward with [filters, positions] grads reshaped per layer output."""
        shaped = {}
        for i, (tag, kind, x, extra) in enumerate(caches):
            if tag in tag_grads:
                shape = caches[i + 1][2].shape if i + 1 < len(caches) else out_shape
                shaped[tag] = np.asarray(tag_grads[tag], dtype=DTYPE).reshape(shape)
        g, _ = self._backward(caches, out_shape, grad_out=None, tag_grads=shaped)
        return g

    def predict(self, image) -> np.ndarray:
        """Evaluation-mode output of the final layer (dropout disabled)."""
        out, _ = self._forward(self._check_image(image))
        return out

    def training_pass(self, image, *, dropout_seed=0, dropout_counter=0):
        """Forward with dropout live.

        Returns (output, handle); the handle carries the cached activations
        that parameter_gradients consumes, dropout masks included, so the
        backward pass sees exactly the randomness the forward pass used.
        """
        out, caches = self._forward(
            self._check_image(image), train=True,
            dropout_seed=dropout_seed, dropout_counter=dropout_counter)
        return out, (out.shape, caches)

    def parameter_gradients(self, handle, tag_grads) -> dict:
        """Weight and bias gradients for every Conv and Dense layer.

        tag_grads maps layer tags to gradients with respect to those layers'
        outputs (natural shapes); the result maps each parameterized tag to
        (grad_weights, grad_bias).
        """
        unknown = set(tag_grads) - set(self.spec.tags)
        if unknown:
            raise UnknownTag(f"unknown tags {sorted(unknown)}")
        out_shape, caches = handle
        shaped = {t: np.asarray(g, dtype=DTYPE) for t, g in tag_grads.items()}
        _, param_grads = self._backward(
            caches, out_shape, tag_grads=shaped, want_param_grads=True)
        return param_grads


def _to_filters_positions(out):
    """Reshape a layer output to [filters, spatial positions]."""
    out = np.asarray(out, dtype=DTYPE)
    if out.ndim == 3:
        return np.ascontiguousarray(out.reshape(out.shape[0], -1))
    if out.ndim == 1:
        return out.reshape(-1, 1)
    raise ShapeMismatch(f"cannot flatten activation of shape {out.shape}")


def _init_store_for(spec, seed, input_hw):
    """He-style init; Dense fan-in resolved via the shape chain when needed."""
    has_dense = any(isinstance(k, Dense) for _, k in spec.layers)
    if not has_dense:
        return he_init_store(spec, seed)
    if input_hw is None:
        raise ShapeMismatch("specs with Dense layers need input_hw to initialize")
    entries = {}
    shape = (spec.input_channels, int(input_hw[0]), int(input_hw[1]))
    for tag, kind in spec.layers:
        if isinstance(kind, Conv):
            fan_in = shape[0] * kind.kernel_h * kind.kernel_w
            g = rng(derive_seed(seed, "init", tag))
            w = g.standard_normal(
                (kind.out_channels, shape[0], kind.kernel_h, kind.kernel_w)
            ).astype(DTYPE) * DTYPE(np.sqrt(2.0 / fan_in))
            entries[tag] = (w, np.zeros(kind.out_channels, DTYPE))
        elif isinstance(kind, Dense):
            fan_in = shape[0]
            g = rng(derive_seed(seed, "init", tag))
            w = g.standard_normal((kind.out_features, fan_in)).astype(DTYPE) \
                * DTYPE(np.sqrt(2.0 / fan_in))
            entries[tag] = (w, np.zeros(kind.out_features, DTYPE))
        shape = _layer_output_shape(tag, kind, shape)
    return WeightStore(entries=entries, means=spec.mean, scales=spec.scale)


def default_network(seed: int = 0) -> Network:
    """The desk-scale extractor with seeded random features."""
    return Network(default_spec(), init_seed=seed)

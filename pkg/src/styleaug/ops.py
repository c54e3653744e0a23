"""Dense float32 array primitives with forward evaluation and exact gradients.

Conventions: images and feature maps are CHW; an optional leading batch axis
(NCHW) is accepted everywhere and handled in one vectorized pass. Convolution
weights are [out_channels, in_channels, kh, kw], dense weights [out, in].

Output extents follow the usual floor rule:

    H_out = (H + 2*padding - kh) // stride + 1

Backward functions return exact analytic gradients of the forward map; the
input gradient of a convolution is computed as a stride-dilated correlation
with the flipped kernel, so the hot path stays inside BLAS.
"""

import numpy as np

from .errors import ShapeMismatch
from .seeding import derive_seed

DTYPE = np.float32


def _as_batched(x, ndim):
    """View x with a leading batch axis; returns (array, had_batch)."""
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == ndim:
        return x[None], False
    if x.ndim == ndim + 1:
        return x, True
    raise ShapeMismatch(f"expected {ndim}D or {ndim + 1}D input, got shape {x.shape}")


def _windows(xp, kh, kw, stride):
    """Sliding [N, C, Ho, Wo, kh, kw] view over a padded NCHW array."""
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, ho, wo, kh, kw),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )


def _pad_hw(x, pad_h, pad_w):
    if pad_h == 0 and pad_w == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))


def _check_conv_shapes(x, w, b, stride, padding):
    if stride < 1 or padding < 0:
        raise ShapeMismatch(f"stride must be >= 1 and padding >= 0, got {stride}, {padding}")
    if w.ndim != 4:
        raise ShapeMismatch(f"conv weights must be 4D [O,C,kh,kw], got shape {w.shape}")
    o, cw, kh, kw = w.shape
    n, c, h, hw = x.shape
    if c != cw:
        raise ShapeMismatch(f"input has {c} channels, weights expect {cw}")
    if b.shape != (o,):
        raise ShapeMismatch(f"bias shape {b.shape} does not match {o} output channels")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (hw + 2 * padding - kw) // stride + 1
    if h + 2 * padding < kh or hw + 2 * padding < kw or ho < 1 or wo < 1:
        raise ShapeMismatch(
            f"kernel {kh}x{kw} does not fit input {h}x{hw} with padding {padding}"
        )
    return ho, wo


def conv2d_forward(x, w, b, stride=1, padding=0):
    """Cross-correlate x [.., C, H, W] with w [O, C, kh, kw], add bias [O]."""
    xb, batched = _as_batched(x, 3)
    w = np.asarray(w, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    o, _, kh, kw = w.shape
    ho, wo = _check_conv_shapes(xb, w, b, stride, padding)
    n = xb.shape[0]

    xp = _pad_hw(xb, padding, padding)
    win = _windows(xp, kh, kw, stride)
    # [N, Ho, Wo, C*kh*kw] @ [C*kh*kw, O] in one BLAS call
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, -1)
    y = cols @ w.reshape(o, -1).T
    y += b
    y = y.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    y = np.ascontiguousarray(y)
    return y if batched else y[0]


def conv2d_backward(x, w, grad_output, stride=1, padding=0):
    """Gradients of conv2d_forward w.r.t. input, weights, and bias."""
    xb, batched = _as_batched(x, 3)
    gb_, _ = _as_batched(grad_output, 3)
    w = np.asarray(w, dtype=DTYPE)
    o, c, kh, kw = w.shape
    ho, wo = _check_conv_shapes(xb, w, np.zeros(o, DTYPE), stride, padding)
    if gb_.shape != (xb.shape[0], o, ho, wo):
        raise ShapeMismatch(
            f"grad_output shape {gb_.shape} does not match forward output "
            f"{(xb.shape[0], o, ho, wo)}"
        )
    n, _, h, hw = xb.shape

    grad_bias = gb_.sum(axis=(0, 2, 3), dtype=np.float64).astype(DTYPE)

    xp = _pad_hw(xb, padding, padding)
    win = _windows(xp, kh, kw, stride)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, -1)
    gmat = gb_.transpose(1, 0, 2, 3).reshape(o, -1)
    grad_weights = (gmat @ cols.reshape(n * ho * wo, c * kh * kw)).reshape(o, c, kh, kw)

    # Input gradient: dilate grad_output by the stride, then correlate with
    # the channel-transposed, spatially-flipped kernel at stride 1.
    if stride > 1:
        gd = np.zeros((n, o, (ho - 1) * stride + 1, (wo - 1) * stride + 1), DTYPE)
        gd[:, :, ::stride, ::stride] = gb_
    else:
        gd = gb_
    w_flip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    gxp = conv2d_forward(_pad_hw(gd, kh - 1, kw - 1), w_flip, np.zeros(c, DTYPE))
    # Rows/cols of the padded input that no window covered contribute zero.
    hp, wp = h + 2 * padding, hw + 2 * padding
    grad_xp = np.zeros((n, c, hp, wp), DTYPE)
    grad_xp[:, :, : gxp.shape[2], : gxp.shape[3]] = gxp
    grad_input = grad_xp[:, :, padding : padding + h, padding : padding + hw]
    grad_input = np.ascontiguousarray(grad_input)

    if not batched:
        grad_input = grad_input[0]
    return grad_input, grad_weights.astype(DTYPE), grad_bias


def relu_forward(x):
    return np.maximum(np.asarray(x, dtype=DTYPE), DTYPE(0))


def relu_backward(x, grad_output):
    x = np.asarray(x, dtype=DTYPE)
    g = np.asarray(grad_output, dtype=DTYPE)
    if g.shape != x.shape:
        raise ShapeMismatch(f"grad shape {g.shape} != input shape {x.shape}")
    return np.where(x > 0, g, DTYPE(0))


def _check_pool(xb, k, stride):
    if k < 1 or stride < 1:
        raise ShapeMismatch(f"pool size and stride must be >= 1, got {k}, {stride}")
    n, c, h, w = xb.shape
    if h < k or w < k:
        raise ShapeMismatch(f"pool window {k} exceeds input {h}x{w}")
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    return ho, wo


def maxpool_forward(x, k, stride):
    xb, batched = _as_batched(x, 3)
    ho, wo = _check_pool(xb, k, stride)
    win = _windows(xb, k, k, stride)  # [N,C,Ho,Wo,k,k]
    y = win.reshape(*win.shape[:4], k * k).max(axis=-1)
    y = np.ascontiguousarray(y)
    return y if batched else y[0]


def maxpool_backward(x, k, stride, grad_output):
    """Routes each window's gradient to its argmax; first (row-major) index wins ties."""
    xb, batched = _as_batched(x, 3)
    gb_, _ = _as_batched(grad_output, 3)
    ho, wo = _check_pool(xb, k, stride)
    n, c, h, w = xb.shape
    if gb_.shape != (n, c, ho, wo):
        raise ShapeMismatch(f"grad_output shape {gb_.shape} != pooled shape {(n, c, ho, wo)}")

    win = _windows(xb, k, k, stride).reshape(n, c, ho, wo, k * k)
    am = win.argmax(axis=-1)  # np.argmax keeps the first maximum
    if k == stride and h % k == 0 and w % k == 0:
        # Non-overlapping fast path: scatter straight into the window grid.
        gwin = np.zeros((n, c, ho, wo, k * k), DTYPE)
        np.put_along_axis(gwin, am[..., None], gb_[..., None].astype(DTYPE), axis=-1)
        gx = (
            gwin.reshape(n, c, ho, wo, k, k)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, ho * k, wo * k)
        )
    else:
        # Overlapping windows: accumulate via flat-index scatter-add.
        di, dj = np.unravel_index(am, (k, k))
        oi = np.arange(ho)[:, None] * stride
        oj = np.arange(wo)[None, :] * stride
        rows = oi[None, None] + di
        cols = oj[None, None] + dj
        nn = np.arange(n)[:, None, None, None]
        cc = np.arange(c)[None, :, None, None]
        flat = ((nn * c + cc) * h + rows) * w + cols
        gx = np.zeros(n * c * h * w, DTYPE)
        np.add.at(gx, flat.ravel(), gb_.astype(DTYPE).ravel())
        gx = gx.reshape(n, c, h, w)
    return gx if batched else gx[0]


def avgpool_forward(x, k, stride):
    xb, batched = _as_batched(x, 3)
    _check_pool(xb, k, stride)
    win = _windows(xb, k, k, stride)
    y = win.mean(axis=(-2, -1), dtype=DTYPE)
    y = np.ascontiguousarray(y)
    return y if batched else y[0]


def avgpool_backward(x, k, stride, grad_output):
    xb, batched = _as_batched(x, 3)
    gb_, _ = _as_batched(grad_output, 3)
    ho, wo = _check_pool(xb, k, stride)
    n, c, h, w = xb.shape
    if gb_.shape != (n, c, ho, wo):
        raise ShapeMismatch(f"grad_output shape {gb_.shape} != pooled shape {(n, c, ho, wo)}")
    share = (gb_ / DTYPE(k * k)).astype(DTYPE)
    if k == stride and h % k == 0 and w % k == 0:
        gx = np.broadcast_to(share[:, :, :, None, :, None], (n, c, ho, k, wo, k))
        gx = gx.reshape(n, c, ho * k, wo * k)
        if gx.shape[2:] != (h, w):
            full = np.zeros((n, c, h, w), DTYPE)
            full[:, :, : gx.shape[2], : gx.shape[3]] = gx
            gx = np.ascontiguousarray(full)
        else:
            gx = np.ascontiguousarray(gx)
    else:
        gx = np.zeros((n, c, h, w), DTYPE)
        for di in range(k):
            for dj in range(k):
                view = gx[:, :, di : di + ho * stride : stride, dj : dj + wo * stride : stride]
                view += share
    return gx if batched else gx[0]


def flatten_forward(x):
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == 1:
        return x
    if x.ndim == 3:
        return x.reshape(-1)
    return x.reshape(x.shape[0], -1)


def flatten_backward(x, grad_output):
    x = np.asarray(x, dtype=DTYPE)
    g = np.asarray(grad_output, dtype=DTYPE)
    if g.size != x.size or (x.ndim == 4 and g.shape[0] != x.shape[0]):
        raise ShapeMismatch(f"flatten grad size {g.shape} incompatible with input {x.shape}")
    return g.reshape(x.shape)


def dense_forward(x, w, b):
    """Affine map y = x @ w.T + b with w [out, in], x [in] or [N, in]."""
    x = np.asarray(x, dtype=DTYPE)
    w = np.asarray(w, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if w.ndim != 2 or x.shape[-1] != w.shape[1]:
        raise ShapeMismatch(f"dense: input {x.shape} incompatible with weights {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeMismatch(f"dense: bias {b.shape} incompatible with weights {w.shape}")
    return x @ w.T + b


def dense_backward(x, w, grad_output):
    x = np.asarray(x, dtype=DTYPE)
    w = np.asarray(w, dtype=DTYPE)
    g = np.asarray(grad_output, dtype=DTYPE)
    if g.shape[-1] != w.shape[0] or g.ndim != x.ndim:
        raise ShapeMismatch(f"dense grad {g.shape} incompatible with weights {w.shape}")
    grad_input = g @ w
    if x.ndim == 1:
        grad_weights = np.outer(g, x).astype(DTYPE)
        grad_bias = g.copy()
    else:
        grad_weights = (g.T @ x).astype(DTYPE)
        grad_bias = g.sum(axis=0, dtype=np.float64).astype(DTYPE)
    return grad_input, grad_weights, grad_bias


def softmax_forward(x):
    x = np.asarray(x, dtype=DTYPE)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=-1, keepdims=True)).astype(DTYPE)


def softmax_backward(y, grad_output):
    """Backward given the forward *output* y (Jacobian-vector product)."""
    y = np.asarray(y, dtype=DTYPE)
    g = np.asarray(grad_output, dtype=DTYPE)
    if g.shape != y.shape:
        raise ShapeMismatch(f"softmax grad shape {g.shape} != output shape {y.shape}")
    dot = (g * y).sum(axis=-1, keepdims=True)
    return (y * (g - dot)).astype(DTYPE)


def dropout_mask(shape, rate, seed, counter):
    """Deterministic keep-mask drawn from a counter-based stream.

    Same (seed, counter) always gives the same mask; distinct counters give
    non-overlapping streams, so one seed can drive a whole training run.
    """
    if not 0.0 <= rate < 1.0:
        raise ShapeMismatch(f"dropout rate must be in [0, 1), got {rate}")
    key = derive_seed(seed, "dropout")
    bg = np.random.Philox(key=key, counter=(counter & ((1 << 64) - 1)) << 128)
    g = np.random.Generator(bg)
    return (g.random(shape, dtype=DTYPE) >= rate)


def dropout_forward(x, rate, seed=0, counter=0, train=False):
    """Inverted dropout: identity in evaluation mode, mask/(1-rate) in training."""
    x = np.asarray(x, dtype=DTYPE)
    if not train or rate == 0.0:
        return x, None
    mask = dropout_mask(x.shape, rate, seed, counter)
    return x * mask / DTYPE(1.0 - rate), mask


def dropout_backward(grad_output, rate, mask):
    g = np.asarray(grad_output, dtype=DTYPE)
    if mask is None:
        return g
    if mask.shape != g.shape:
        raise ShapeMismatch(f"dropout mask shape {mask.shape} != grad shape {g.shape}")
    return g * mask / DTYPE(1.0 - rate)

"""Image file handling and the classical geometric augmentations.

Images are [3, H, W] float32 in [0, 1] everywhere in this package; this
module is the only place that talks to image files or PIL.
"""

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError

DTYPE = np.float32

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")

AUGMENT_OPS = ("rot90", "rot180", "rot270", "flip-h", "flip-v")


def load_image(path) -> np.ndarray:
    """Decode to [3, H, W] float32 in [0, 1]; 8-bit inputs only."""
    try:
        with Image.open(path) as im:
            if im.mode in ("I", "I;16", "I;16B", "I;16L", "I;16N", "F"):
                raise DecodeError(f"UnsupportedBitDepth: {path} has mode {im.mode}, "
                                  "only 8-bit images are supported")
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    return (arr.astype(DTYPE) / DTYPE(255.0)).transpose(2, 0, 1)


def save_image(image, path) -> None:
    """Clamp to [0, 1], quantize to 8 bits, write a PNG."""
    x = np.asarray(image, dtype=DTYPE)
    if x.ndim != 3 or x.shape[0] != 3:
        raise DecodeError(f"save_image needs a [3, H, W] tensor, got {x.shape}")
    q = np.rint(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(q.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def resize_bilinear(image, out_hw) -> np.ndarray:
    """Bilinear resample with half-pixel centers and edge clamping.

    Implemented here rather than through PIL so resampling is bit-stable
    across library versions; manifests promise bit-exact rebuilds.
    """
    x = np.asarray(image, dtype=DTYPE)
    c, h, w = x.shape
    oh, ow = int(out_hw[0]), int(out_hw[1])
    if oh < 1 or ow < 1:
        raise ValueError(f"target extents must be positive, got {out_hw}")
    if (oh, ow) == (h, w):
        return x.copy()

    def axis_coords(n_in, n_out):
        src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        lo = np.floor(src).astype(np.int64)
        frac = (src - lo).astype(DTYPE)
        lo0 = np.clip(lo, 0, n_in - 1)
        lo1 = np.clip(lo + 1, 0, n_in - 1)
        return lo0, lo1, frac

    y0, y1, fy = axis_coords(h, oh)
    x0, x1, fx = axis_coords(w, ow)
    top = x[:, y0][:, :, x0] * (1 - fx) + x[:, y0][:, :, x1] * fx
    bot = x[:, y1][:, :, x0] * (1 - fx) + x[:, y1][:, :, x1] * fx
    return (top * (1 - fy)[:, None] + bot * fy[:, None]).astype(DTYPE)


def traditional_augment(image, op: str) -> np.ndarray:
    """Apply one exact dihedral transform in the (H, W) plane."""
    x = np.asarray(image, dtype=DTYPE)
    if op == "rot90":
        return np.ascontiguousarray(np.rot90(x, 1, axes=(1, 2)))
    if op == "rot180":
        return np.ascontiguousarray(np.rot90(x, 2, axes=(1, 2)))
    if op == "rot270":
        return np.ascontiguousarray(np.rot90(x, 3, axes=(1, 2)))
    if op == "flip-h":
        return np.ascontiguousarray(x[:, :, ::-1])
    if op == "flip-v":
        return np.ascontiguousarray(x[:, ::-1, :])
    raise ValueError(f"unknown augmentation op {op!r}; expected one of {AUGMENT_OPS}")

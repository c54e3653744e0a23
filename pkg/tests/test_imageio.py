import numpy as np
import pytest
from PIL import Image

from styleaug.errors import DecodeError
from styleaug.imageio import (
    AUGMENT_OPS,
    load_image,
    resize_bilinear,
    save_image,
    traditional_augment,
)


def _quantized(key, shape=(3, 2, 2)):
    """Random pixels already on the 1/255 grid, so PNG round-trips exactly."""
    raw = np.random.default_rng(key).integers(0, 256, size=shape)
    return (raw / 255.0).astype(np.float32)


def test_png_round_trip_is_exact(tmp_path):
    img = _quantized(0)
    p = tmp_path / "t.png"
    save_image(img, p)
    back = load_image(p)
    assert back.dtype == np.float32
    assert np.array_equal(back, img.astype(np.float32))


def test_load_shape_and_range(tmp_path):
    Image.new("RGB", (5, 3), (10, 200, 255)).save(tmp_path / "c.png")
    img = load_image(tmp_path / "c.png")
    assert img.shape == (3, 3, 5)  # channels, height, width
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert np.allclose(img[1], 200 / 255)


def test_save_clamps_before_quantizing(tmp_path):
    img = np.array([[[-0.5, 2.0], [0.0, 1.0]]] * 3, dtype=np.float32)
    p = tmp_path / "c.png"
    save_image(img, p)
    back = load_image(p)
    assert np.array_equal(back[:, 0, 0], np.zeros(3, np.float32))
    assert np.array_equal(back[:, 0, 1], np.ones(3, np.float32))


def test_save_rejects_bad_layout(tmp_path):
    with pytest.raises(Exception):
        save_image(np.zeros((2, 2, 3), np.float32), tmp_path / "x.png")


def test_grayscale_promotes_to_three_channels(tmp_path):
    Image.new("L", (2, 2), 128).save(tmp_path / "g.png")
    img = load_image(tmp_path / "g.png")
    assert img.shape == (3, 2, 2)
    assert np.array_equal(img[0], img[1]) and np.array_equal(img[1], img[2])


def test_sixteen_bit_png_is_rejected(tmp_path):
    im = Image.new("I;16", (2, 2))
    im.putdata([0, 1000, 2000, 3000])
    im.save(tmp_path / "deep.png")
    with pytest.raises(DecodeError, match="UnsupportedBitDepth"):
        load_image(tmp_path / "deep.png")


def test_non_image_bytes_are_rejected(tmp_path):
    p = tmp_path / "junk.png"
    p.write_bytes(b"definitely not pixels")
    with pytest.raises(DecodeError):
        load_image(p)


def test_missing_file_is_oserror(tmp_path):
    with pytest.raises(OSError):
        load_image(tmp_path / "absent.png")


# -- dihedral augmentations --------------------------------------------------

def test_flip_h_swaps_columns():
    img = np.array([[[1.0, 2.0]]] * 3, dtype=np.float32)
    out = traditional_augment(img, "flip-h")
    assert np.array_equal(out, np.array([[[2.0, 1.0]]] * 3, np.float32))


def test_rot90_four_times_is_identity():
    img = _quantized(1, (3, 4, 6))
    out = img
    for _ in range(4):
        out = traditional_augment(out, "rot90")
    assert np.array_equal(out, img)


def test_rot180_equals_both_flips():
    img = _quantized(2, (3, 5, 4))
    via_rot = traditional_augment(img, "rot180")
    via_flips = traditional_augment(traditional_augment(img, "flip-h"), "flip-v")
    assert np.array_equal(via_rot, via_flips)


def test_rot270_is_inverse_of_rot90():
    img = _quantized(3, (3, 4, 4))
    back = traditional_augment(traditional_augment(img, "rot90"), "rot270")
    assert np.array_equal(back, img)


@pytest.mark.parametrize("op", AUGMENT_OPS)
def test_ops_preserve_pixel_multiset(op):
    img = _quantized(4, (3, 3, 5))
    out = traditional_augment(img, op)
    assert out.dtype == np.float32
    assert np.array_equal(np.sort(out.ravel()), np.sort(img.ravel()))


def test_unknown_op_raises():
    with pytest.raises(ValueError):
        traditional_augment(_quantized(5), "rot45")


# -- resize ------------------------------------------------------------------

def test_resize_same_size_is_exact_copy():
    img = _quantized(6, (3, 4, 4))
    out = resize_bilinear(img, (4, 4))
    assert out is not img
    assert np.array_equal(out, img)


def test_resize_constant_stays_constant():
    img = np.full((3, 5, 7), 0.25, np.float32)
    out = resize_bilinear(img, (9, 3))
    assert out.shape == (3, 9, 3)
    assert np.allclose(out, 0.25, atol=1e-7)


def test_resize_respects_value_bounds():
    img = _quantized(7, (3, 8, 8))
    out = resize_bilinear(img, (13, 5))
    assert out.min() >= img.min() - 1e-6
    assert out.max() <= img.max() + 1e-6


def test_resize_is_deterministic():
    img = _quantized(8, (3, 6, 10))
    a = resize_bilinear(img, (32, 32))
    b = resize_bilinear(img, (32, 32))
    assert np.array_equal(a, b)


def test_resize_2x_upsample_interpolates_midpoints():
    img = np.zeros((3, 1, 2), np.float32)
    img[:, 0, 1] = 1.0
    out = resize_bilinear(img, (1, 4))
    # half-pixel centers: sample points at 0, 0.5, 1.0 (clamped), so the
    # middle two outputs straddle the single input edge
    assert out.shape == (3, 1, 4)
    assert np.allclose(out[0, 0], [0.0, 0.25, 0.75, 1.0])

"""Content, style, and TV losses: hand values, FD oracles, properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from styleaug.errors import ShapeMismatch, UnknownTag
from styleaug.losses import (
    ContentTarget,
    LossWeights,
    StyleTarget,
    content_loss,
    gram,
    style_energy,
    style_loss,
    total_loss,
    total_loss_parts,
    tv_loss,
)
from styleaug.network import Network, default_spec, he_init_store

from gradcheck import fd_gradient, max_rel_err
from refnet import kink_pattern, margin_biased_store, ref_forward, same_pattern


def _rand(shape, key):
    return np.random.Generator(np.random.Philox(key=key)).standard_normal(shape).astype(np.float32)


# --------------------------------------------------------------------------
# gram
# --------------------------------------------------------------------------

def test_gram_orthonormal_rows_give_identity():
    np.testing.assert_array_equal(gram(np.eye(2, dtype=np.float32)), np.eye(2))


def test_gram_hand_inner_product():
    np.testing.assert_array_equal(gram(np.array([[1.0, 1.0]])), [[2.0]])


def test_gram_is_column_permutation_invariant():
    f = _rand((4, 9), 1)
    perm = np.random.Generator(np.random.Philox(key=2)).permutation(9)
    np.testing.assert_allclose(gram(f), gram(f[:, perm]), rtol=1e-6)


def test_gram_rejects_bad_rank():
    with pytest.raises(ShapeMismatch):
        gram(np.zeros(3, np.float32))


@settings(deadline=None, max_examples=60)
@given(hnp.arrays(np.float32,
                  hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=6),
                  elements=st.floats(-100, 100, width=32)))
def test_gram_symmetric_and_psd(f):
    g = gram(f).astype(np.float64)
    np.testing.assert_allclose(g, g.T, atol=1e-3)
    evals = np.linalg.eigvalsh((g + g.T) / 2)
    assert evals.min() >= -1e-4 * max(1.0, np.abs(g).max())


# --------------------------------------------------------------------------
# content_loss
# --------------------------------------------------------------------------

def test_content_loss_zero_at_match():
    f = _rand((3, 5), 3)
    v, g = content_loss(f, f)
    assert v == 0.0
    np.testing.assert_array_equal(g, np.zeros_like(f))


def test_content_loss_hand_value():
    v, g = content_loss(np.array([[2.0]]), np.array([[0.0]]))
    assert v == 2.0
    np.testing.assert_array_equal(g, [[2.0]])


def test_content_loss_value_symmetric_under_swap():
    f, p = _rand((4, 6), 4), _rand((4, 6), 5)
    assert content_loss(f, p)[0] == content_loss(p, f)[0]


def test_content_loss_rejects_mismatched_shapes():
    with pytest.raises(ShapeMismatch):
        content_loss(np.zeros((2, 3)), np.zeros((3, 2)))


@settings(deadline=None, max_examples=60)
@given(hnp.arrays(np.float32, (3, 4), elements=st.floats(-50, 50, width=32)),
       hnp.arrays(np.float32, (3, 4), elements=st.floats(-50, 50, width=32)))
def test_content_loss_nonnegative_zero_iff_equal(f, p):
    v, _ = content_loss(f, p)
    assert v >= 0.0
    assert (v == 0.0) == bool(np.array_equal(f, p))


# --------------------------------------------------------------------------
# style_energy
# --------------------------------------------------------------------------

def test_style_energy_zero_at_matched_statistics():
    f = _rand((4, 7), 6)
    v, g = style_energy(f, gram(f))
    assert v == 0.0
    np.testing.assert_array_equal(g, np.zeros_like(f))


def test_style_energy_hand_value():
    # N=1, M=2: G = [[2]], diff = 2, value = 4 / (4*1*4) = 0.25
    v, _ = style_energy(np.array([[1.0, 1.0]]), np.array([[0.0]]))
    assert v == pytest.approx(0.25, abs=1e-12)


def test_style_energy_rejects_wrong_target_shape():
    with pytest.raises(ShapeMismatch):
        style_energy(np.zeros((3, 4), np.float32), np.zeros((2, 2), np.float32))


def test_style_energy_gradient_vs_finite_differences():
    f = 2.0 * _rand((3, 4), 7)
    a = gram(2.0 * _rand((3, 4), 8))
    _, analytic = style_energy(f, a)

    def value(x):
        x = x.astype(np.float64)
        g = x @ x.T
        n, m = x.shape
        return float(np.sum((g - a.astype(np.float64)) ** 2)) / (4.0 * n * n * m * m)

    numeric = fd_gradient(value, f, eps=1e-4)
    floor = 0.01 * float(np.abs(analytic).max())
    assert max_rel_err(analytic, numeric, floor=floor) < 1e-4


def test_style_energy_column_permutation_invariant():
    f = _rand((5, 8), 9)
    a = gram(_rand((5, 8), 10))
    perm = np.random.Generator(np.random.Philox(key=11)).permutation(8)
    assert style_energy(f, a)[0] == pytest.approx(style_energy(f[:, perm], a)[0], rel=1e-6)


# --------------------------------------------------------------------------
# style_loss
# --------------------------------------------------------------------------

def _two_tag_setup():
    acts = {"a": 2.0 * _rand((3, 4), 12), "b": 2.0 * _rand((5, 4), 13)}
    target = StyleTarget(
        grams={"a": gram(_rand((3, 4), 14)), "b": gram(_rand((5, 4), 15))},
        sizes={"a": (3, 4), "b": (5, 4)},
    )
    return acts, target


def test_style_loss_single_tag_degenerates_to_energy():
    acts, target = _two_tag_setup()
    single = StyleTarget(grams={"a": target.grams["a"]}, sizes={"a": (3, 4)})
    v, grads = style_loss(acts, single, {"a": 1.0})
    ev, eg = style_energy(acts["a"], target.grams["a"])
    assert v == pytest.approx(ev, rel=1e-7)
    np.testing.assert_allclose(grads["a"], eg, rtol=1e-6)


def test_style_loss_doubling_a_layer_weight_doubles_its_grad():
    acts, target = _two_tag_setup()
    _, g1 = style_loss(acts, target, {"a": 0.25, "b": 0.75})
    _, g2 = style_loss(acts, target, {"a": 0.5, "b": 0.75})
    np.testing.assert_allclose(g2["a"], 2.0 * g1["a"], rtol=1e-6)
    np.testing.assert_allclose(g2["b"], g1["b"], rtol=1e-6)


def test_style_loss_matches_hand_sum_of_energies():
    acts, target = _two_tag_setup()
    w = {"a": 0.3, "b": 0.7}
    v, grads = style_loss(acts, target, w)
    ea = style_energy(acts["a"], target.grams["a"])
    eb = style_energy(acts["b"], target.grams["b"])
    assert v == pytest.approx(0.3 * ea[0] + 0.7 * eb[0], rel=1e-7)
    np.testing.assert_allclose(grads["a"], np.float32(0.3) * ea[1], rtol=1e-6)
    np.testing.assert_allclose(grads["b"], np.float32(0.7) * eb[1], rtol=1e-6)


def test_style_loss_requires_activations_and_weights_for_every_tag():
    acts, target = _two_tag_setup()
    with pytest.raises(UnknownTag):
        style_loss({"a": acts["a"]}, target, {"a": 0.5, "b": 0.5})
    with pytest.raises(UnknownTag):
        style_loss(acts, target, {"a": 1.0})


# --------------------------------------------------------------------------
# tv_loss
# --------------------------------------------------------------------------

def test_tv_loss_constant_image_is_zero():
    v, g = tv_loss(np.full((3, 4, 5), 0.7, np.float32))
    assert v == 0.0
    np.testing.assert_array_equal(g, np.zeros((3, 4, 5), np.float32))


def test_tv_loss_single_squared_difference():
    v, _ = tv_loss(np.array([[[0.0, 1.0]]], np.float32))
    assert v == 1.0


def test_tv_loss_gradient_vs_finite_differences():
    img = _rand((2, 5, 6), 16)
    _, analytic = tv_loss(img)

    def value(x):
        x = x.astype(np.float64)
        return float(np.sum(np.diff(x, axis=1) ** 2) + np.sum(np.diff(x, axis=2) ** 2))

    numeric = fd_gradient(value, img, eps=1e-4)
    assert max_rel_err(analytic, numeric) < 1e-4


def test_tv_loss_rejects_non_image():
    with pytest.raises(ShapeMismatch):
        tv_loss(np.zeros((4, 4), np.float32))


# --------------------------------------------------------------------------
# weights and targets
# --------------------------------------------------------------------------

def test_layer_weights_must_be_convex():
    with pytest.raises(ValueError):
        LossWeights(layer_weights={"a": 0.7, "b": 0.7})
    with pytest.raises(ValueError):
        LossWeights(layer_weights={"a": 1.5, "b": -0.5})
    with pytest.raises(ValueError):
        LossWeights(content_weight=-1e-9)
    w = LossWeights.with_uniform_layers(("a", "b", "c"))
    assert sum(w.layer_weights.values()) == pytest.approx(1.0, abs=1e-9)


def test_style_target_rejects_asymmetric_gram():
    with pytest.raises(ShapeMismatch):
        StyleTarget(grams={"a": np.array([[1.0, 2.0], [0.0, 1.0]])}, sizes={"a": (2, 4)})


def test_default_weights_are_the_reference_recipe():
    w = LossWeights.with_uniform_layers(("c1", "c3"))
    assert w.content_weight == pytest.approx(3e-4)
    assert w.style_weight == 1.0
    assert w.tv_weight == pytest.approx(1e-5)


# --------------------------------------------------------------------------
# total_loss
# --------------------------------------------------------------------------

def _targets_from(net, image, style_tags=("c1", "c3"), content_tag="c4"):
    acts = net.forward_record(image, set(style_tags) | {content_tag})
    style = StyleTarget(
        grams={t: gram(acts[t]) for t in style_tags},
        sizes={t: acts[t].shape for t in style_tags},
    )
    return ContentTarget(tag=content_tag, p=acts[content_tag]), style


def test_total_loss_reduces_to_tv_term_when_targets_match():
    net = Network(default_spec(), he_init_store(default_spec(), seed=2))
    img = np.random.Generator(np.random.Philox(key=17)).random((3, 8, 8)).astype(np.float32)
    content, style = _targets_from(net, img)
    w = LossWeights.with_uniform_layers(("c1", "c3"))
    value, grad, parts = total_loss_parts(img, net, content, style, w)
    tvv, tvg = tv_loss(img)
    assert parts.content == 0.0
    assert parts.style == 0.0
    assert value == pytest.approx(w.tv_weight * tvv, rel=1e-6)
    np.testing.assert_allclose(grad, np.float32(w.tv_weight) * tvg, atol=1e-7)


def test_total_loss_all_zero_weights():
    net = Network(default_spec(), he_init_store(default_spec(), seed=2))
    img = np.random.Generator(np.random.Philox(key=18)).random((3, 8, 8)).astype(np.float32)
    content, style = _targets_from(net, img)
    w = LossWeights(content_weight=0.0, style_weight=0.0, tv_weight=0.0,
                    layer_weights={"c1": 0.5, "c3": 0.5})
    value, grad = total_loss(img, net, content, style, w)
    assert value == 0.0
    np.testing.assert_array_equal(grad, np.zeros((3, 8, 8), np.float32))


def _ref_total(spec, store, x, content, style, w):
    """Float64 reference objective for the FD oracle."""
    tags = set(style.tags) | {content.tag}
    acts = ref_forward(spec, store, x, tags)
    total = 0.0
    if w.content_weight:
        d = acts[content.tag] - content.p.astype(np.float64)
        total += w.content_weight * 0.5 * float(np.sum(d ** 2))
    for t in style.tags:
        f = acts[t]
        n, m = f.shape
        diff = f @ f.T - style.grams[t].astype(np.float64)
        e = float(np.sum(diff ** 2)) / (4.0 * n * n * m * m)
        total += w.style_weight * w.layer_weights[t] * e
    x64 = x.astype(np.float64)
    tv = float(np.sum(np.diff(x64, axis=1) ** 2) + np.sum(np.diff(x64, axis=2) ** 2))
    return total + w.tv_weight * tv


@pytest.mark.parametrize("alpha,beta,tvw", [
    (3e-4, 1.0, 1e-5),
    (1.0, 0.0, 0.0),
    (0.0, 1.0, 1e-2),
    (0.5, 0.25, 1e-3),
])
def test_total_loss_gradient_vs_finite_differences(alpha, beta, tvw):
    spec = default_spec()
    img = np.random.Generator(np.random.Philox(key=1000)).random((3, 8, 8)).astype(np.float32)
    store = margin_biased_store(spec, he_init_store(spec, seed=0), img)
    net = Network(spec, store)
    other = np.random.Generator(np.random.Philox(key=19)).random((3, 8, 8)).astype(np.float32)
    content, style = _targets_from(net, other)
    w = LossWeights(content_weight=alpha, style_weight=beta, tv_weight=tvw,
                    layer_weights={"c1": 0.5, "c3": 0.5})
    _, analytic = total_loss(img, net, content, style, w)

    base_pattern, _ = kink_pattern(spec, store, img)
    deviations = []

    def f(x):
        pattern, _ = kink_pattern(spec, store, x)
        if not same_pattern(pattern, base_pattern):
            deviations.append(1)
        return _ref_total(spec, store, x, content, style, w)

    numeric = fd_gradient(f, img)
    assert not deviations, "a ReLU or pool decision flipped inside the FD probe"
    floor = max(1e-3, 0.01 * float(np.abs(analytic).max()))
    assert max_rel_err(analytic, numeric, floor=floor) < 1e-3


def test_total_loss_scales_exactly_with_weight_scaling():
    net = Network(default_spec(), he_init_store(default_spec(), seed=3))
    img = np.random.Generator(np.random.Philox(key=21)).random((3, 8, 8)).astype(np.float32)
    other = np.random.Generator(np.random.Philox(key=22)).random((3, 8, 8)).astype(np.float32)
    content, style = _targets_from(net, other)
    w = LossWeights.with_uniform_layers(("c1", "c3"))
    v1, g1 = total_loss(img, net, content, style, w)
    # powers of two commute with float rounding, so doubling is bit-exact
    v2, g2 = total_loss(img, net, content, style, w.scaled(2.0))
    assert v2 == 2.0 * v1
    np.testing.assert_array_equal(g2, np.float32(2.0) * g1)
    v3, g3 = total_loss(img, net, content, style, w.scaled(3.0))
    assert v3 == pytest.approx(3.0 * v1, rel=1e-6)
    np.testing.assert_allclose(g3, 3.0 * g1, rtol=1e-4, atol=1e-8)

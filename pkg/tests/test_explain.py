import numpy as np
import pytest
import torch
import torch.nn as nn

from anopipe.classifier import ClassifierConfig, build
from anopipe.explain import (
    ExplainError,
    SaliencyMap,
    cam_from_activations,
    focus_fraction,
    gradcam,
    overlay,
)
from anopipe.manifest import Label

CFG = ClassifierConfig(input_size=24, learning_rate=0.01, momentum=0.9,
                       batch_size=8, epochs=1, backbone="residual_small_scratch", seed=0)


# ------------------------------------------------------------ cam arithmetic

def test_cam_single_channel_uniform_gradient():
    acts = np.array([[[1.0, -2.0], [0.5, 3.0]]])
    grads = np.ones_like(acts)
    cam = cam_from_activations(acts, grads)
    assert np.array_equal(cam, np.maximum(acts[0], 0.0))


def test_cam_nonpositive_evidence_gives_zero_map():
    acts = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    grads = -np.ones_like(acts)
    cam = cam_from_activations(acts, grads)
    assert np.array_equal(cam, np.zeros((2, 2)))


def test_cam_two_channel_hand_computation():
    acts = np.array([
        [[1.0, 0.0], [2.0, -1.0]],
        [[0.5, 0.5], [0.5, 0.5]],
    ])
    grads = np.array([
        [[0.2, 0.2], [0.2, 0.2]],     # alpha_0 = 0.2
        [[-0.4, -0.4], [-0.4, -0.4]], # alpha_1 = -0.4
    ])
    expected = np.maximum(0.2 * acts[0] - 0.4 * acts[1], 0.0)
    assert np.allclose(cam_from_activations(acts, grads), expected, atol=1e-15)


def test_cam_scalar_loop_oracle():
    rng = np.random.default_rng(0)
    acts = rng.normal(size=(2, 4, 4))
    grads = rng.normal(size=(2, 4, 4))
    cam = cam_from_activations(acts, grads)
    for i in range(4):
        for j in range(4):
            expected = 0.0
            for k in range(2):
                alpha = grads[k].mean()
                expected += alpha * acts[k, i, j]
            assert cam[i, j] == pytest.approx(max(expected, 0.0), abs=1e-12)


def test_cam_shape_mismatch():
    with pytest.raises(ExplainError):
        cam_from_activations(np.zeros((1, 2, 2)), np.zeros((2, 2, 2)))


# ------------------------------------------------------------------ gradcam

def rand_img(rng, h=24, w=24):
    return rng.random((h, w, 3)).astype(np.float32)


def test_gradcam_map_range_and_size():
    rng = np.random.default_rng(1)
    model = build(CFG)
    img = rand_img(rng, 30, 40)
    sal = gradcam(model, img, Label.ANOMALY, image_id="x")
    assert isinstance(sal, SaliencyMap)
    assert sal.values.shape == (30, 40)
    assert sal.values.min() >= 0.0 and sal.values.max() <= 1.0
    assert sal.source_image_id == "x"
    if sal.values.max() > 0:
        assert sal.values.max() == pytest.approx(1.0, abs=1e-12)


def test_gradcam_accepts_string_target():
    rng = np.random.default_rng(2)
    model = build(CFG)
    sal = gradcam(model, rand_img(rng), "anomaly")
    assert sal.target_class is Label.ANOMALY


def test_gradcam_scale_invariance_of_normalized_map():
    # scaling all last-layer gradients by a positive constant scales the raw
    # map linearly, so the max-normalized map is unchanged; emulate by
    # scaling the class logit.
    rng = np.random.default_rng(3)
    model = build(CFG)
    img = rand_img(rng)

    class Scaled(nn.Module):
        def __init__(self, inner, k):
            super().__init__()
            self.inner, self.k = inner, k
            self.config = inner.config

        @property
        def cam_layer(self):
            return self.inner.cam_layer

        def forward(self, x):
            return self.inner(x) * self.k

    sal1 = gradcam(model, img, Label.ANOMALY)
    sal2 = gradcam(Scaled(model, 7.5), img, Label.ANOMALY)
    assert np.allclose(sal1.values, sal2.values, atol=1e-10)


def test_gradcam_equals_hooked_brute_force():
    rng = np.random.default_rng(4)
    cfg = ClassifierConfig(input_size=16, learning_rate=0.01, momentum=0.9,
                           batch_size=4, epochs=1,
                           backbone="residual_small_scratch", seed=5)
    model = build(cfg)
    model.eval()  # batch-norm must use running stats, as gradcam does
    img = rand_img(rng, 16, 16)

    captured = {}

    def grab(module, inputs, output):
        captured["acts"] = output
        output.register_hook(lambda g: captured.__setitem__("grads", g))

    handle = model.cam_layer.register_forward_hook(grab)
    model.zero_grad()
    logits = model(torch.from_numpy(img.transpose(2, 0, 1)[None].copy()))
    logits[0, 1].backward()
    handle.remove()
    acts = captured["acts"].detach().numpy()[0]
    grads = captured["grads"].detach().numpy()[0]

    # scalar-loop recomputation
    k, h, w = acts.shape
    raw = np.zeros((h, w))
    for ki in range(k):
        raw += grads[ki].mean() * acts[ki]
    raw = np.maximum(raw, 0.0)

    assert np.allclose(cam_from_activations(acts, grads), raw, atol=1e-10)
    sal = gradcam(model, img, Label.ANOMALY)
    from anopipe.imaging import resize

    up = np.maximum(resize(raw[:, :, None], 16, 16)[:, :, 0], 0.0)
    if up.max() > 0:
        up = up / up.max()
    assert np.allclose(sal.values, up, atol=1e-8)


def test_gradcam_requires_cam_layer():
    class Bare(nn.Module):
        def __init__(self):
            super().__init__()
            self.fc = nn.Linear(3, 2)
            self.config = CFG

        def forward(self, x):
            return self.fc(x.mean(dim=(2, 3)))

    with pytest.raises(ExplainError):
        gradcam(Bare(), np.zeros((24, 24, 3), dtype=np.float32), Label.ANOMALY)


# ------------------------------------------------------------------ overlay

def test_overlay_alpha_zero_returns_image():
    rng = np.random.default_rng(5)
    img = rand_img(rng)
    sal = rng.random((24, 24))
    out = overlay(img, sal, alpha=0.0)
    assert np.allclose(out, img, atol=1e-7)


def test_overlay_alpha_one_is_pure_heatmap():
    from matplotlib import colormaps

    img = np.zeros((24, 24, 3), dtype=np.float32)
    sal = np.linspace(0, 1, 24 * 24).reshape(24, 24)
    out = overlay(img, sal, alpha=1.0)
    expected = colormaps["jet"](sal)[:, :, :3]
    assert np.allclose(out, expected, atol=1e-6)


def test_overlay_half_blend_arithmetic():
    from matplotlib import colormaps

    img = np.full((24, 24, 3), 0.4, dtype=np.float32)
    sal = np.full((24, 24), 0.5)
    out = overlay(img, sal, alpha=0.5)
    heat = colormaps["jet"](sal)[:, :, :3]
    assert np.allclose(out, 0.5 * img + 0.5 * heat, atol=1e-6)


def test_overlay_grayscale_and_errors():
    img = np.full((24, 24, 1), 0.3, dtype=np.float32)
    sal = np.zeros((24, 24))
    out = overlay(img, sal, alpha=0.0)
    assert out.shape == (24, 24, 3)
    with pytest.raises(ExplainError):
        overlay(img, np.zeros((10, 10)), 0.5)
    with pytest.raises(ExplainError):
        overlay(img, sal, alpha=1.5)


# ------------------------------------------------------------ focus fraction

def test_focus_fraction_cases():
    sal = np.zeros((8, 8))
    sal[2:4, 2:4] = 1.0
    mask = np.zeros((8, 8), dtype=bool)
    mask[2:4, 2:4] = True
    assert focus_fraction(sal, mask) == 1.0
    assert focus_fraction(np.zeros((8, 8)), mask) == 0.0
    uniform = np.full((8, 8), 0.7)
    quarter = np.zeros((8, 8), dtype=bool)
    quarter[:4, :4] = True
    assert focus_fraction(uniform, quarter) == pytest.approx(0.25)
    with pytest.raises(ExplainError):
        focus_fraction(sal, np.zeros((4, 4), dtype=bool))

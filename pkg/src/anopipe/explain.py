"""Gradient-weighted class activation maps over the detector's last
convolutional stage, plus overlay rendering and a focus metric.

The saliency map weights each activation channel by the spatial mean of the
class-logit gradient, rectifies the weighted sum, upsamples it to the input
size and max-normalizes it. Everything here treats the model as frozen.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import torch
import torch.nn as nn
from matplotlib import colormaps

from .classifier import ANOMALY_IDX, NORMAL_IDX
from .imaging import resize
from .manifest import Label

__all__ = [
    "ExplainError",
    "SaliencyMap",
    "cam_from_activations",
    "gradcam",
    "overlay",
    "focus_fraction",
]


class ExplainError(Exception):
    """The model cannot be explained or inputs are inconsistent."""


@dataclass(frozen=True)
class SaliencyMap:
    """(H, W) saliency values in [0, 1], aligned with the source image."""

    values: np.ndarray
    source_image_id: str
    target_class: Label


def cam_from_activations(acts: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Raw class activation map from (K, h, w) activations and gradients.

    alpha_k is the spatial mean of grads[k]; the map is the rectified
    alpha-weighted sum of activation channels. No normalization here.
    """
    acts = np.asarray(acts, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if acts.shape != grads.shape or acts.ndim != 3:
        raise ExplainError(
            f"activations and gradients must share a (K, h, w) shape, "
            f"got {acts.shape} vs {grads.shape}"
        )
    alphas = grads.mean(axis=(1, 2))
    raw = np.tensordot(alphas, acts, axes=(0, 0))
    return np.maximum(raw, 0.0)


def _class_index(target_class: Union[Label, str]) -> int:
    if isinstance(target_class, str):
        target_class = Label(target_class)
    return ANOMALY_IDX if target_class is Label.ANOMALY else NORMAL_IDX


def gradcam(
    model: nn.Module,
    img: np.ndarray,
    target_class: Union[Label, str],
    image_id: str = "",
) -> SaliencyMap:
    """Saliency map for one image and one target class.

    The model must expose ``cam_layer``, the module whose output is the last
    convolutional feature map. The class logit is backpropagated to that
    layer; the resulting map is upsampled bilinearly to the image's own
    height and width and max-normalized unless it is identically zero.
    """
    cam_layer = getattr(model, "cam_layer", None)
    if not isinstance(cam_layer, nn.Module):
        raise ExplainError("model has no convolutional cam_layer to explain")
    if img.ndim != 3 or img.shape[2] != 3:
        raise ExplainError(f"expected (H, W, 3) image, got {getattr(img, 'shape', None)}")
    target = Label(target_class) if isinstance(target_class, str) else target_class
    idx = _class_index(target)

    size = model.config.input_size
    x = resize(img, size, size) if img.shape[:2] != (size, size) else img
    tensor = torch.from_numpy(x.transpose(2, 0, 1)[None].astype(np.float32).copy())

    captured = {}

    def grab(module, inputs, output):
        captured["acts"] = output
        output.register_hook(lambda g: captured.__setitem__("grads", g))

    handle = cam_layer.register_forward_hook(grab)
    try:
        model.eval()
        model.zero_grad(set_to_none=True)
        logits = model(tensor)
        logits[0, idx].backward()
    finally:
        handle.remove()
    if "acts" not in captured or "grads" not in captured:
        raise ExplainError("cam_layer did not participate in the forward pass")

    acts = captured["acts"].detach().numpy()[0]
    grads = captured["grads"].detach().numpy()[0]
    raw = cam_from_activations(acts, grads)

    h, w = img.shape[:2]
    up = resize(raw[:, :, None].astype(np.float64), h, w)[:, :, 0]
    up = np.maximum(up, 0.0)
    peak = up.max()
    if peak > 0:
        up = up / peak
    return SaliencyMap(values=up, source_image_id=image_id, target_class=target)


def overlay(img: np.ndarray, sal: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Blend a colormapped saliency map onto an image.

    alpha 0 returns the image as RGB, alpha 1 the pure heatmap. Grayscale
    images are broadcast to three channels first.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ExplainError(f"alpha must be in [0, 1], got {alpha}")
    if sal.shape != img.shape[:2]:
        raise ExplainError(f"map shape {sal.shape} does not match image {img.shape[:2]}")
    rgb = np.repeat(img, 3, axis=2) if img.shape[2] == 1 else img
    heat = colormaps["jet"](np.clip(sal, 0.0, 1.0))[:, :, :3]
    out = (1.0 - alpha) * rgb + alpha * heat
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def focus_fraction(sal: np.ndarray, region_mask: np.ndarray) -> float:
    """Share of total saliency mass inside the mask; an all-zero map gives 0."""
    if region_mask.shape != sal.shape:
        raise ExplainError(f"mask shape {region_mask.shape} does not match map {sal.shape}")
    total = float(sal.sum())
    if total == 0.0:
        return 0.0
    return float(sal[region_mask.astype(bool)].sum() / total)

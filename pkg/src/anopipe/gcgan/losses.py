"""Loss components of the translation model.

All losses are least-squares (quadratic) for the adversarial parts and L1
for the consistency parts. They accept NCHW tensors and work on any value
range; the trainer feeds them [-1, 1] network-space tensors.
"""

from __future__ import annotations

from typing import Callable, Dict, Optional, Tuple

import torch

from ..imaging import GeoTransform

__all__ = [
    "transform_batch",
    "adversarial_loss",
    "geometry_consistency_loss",
    "identity_mapping_loss",
    "generator_total_loss",
]


def transform_batch(x: torch.Tensor, t: GeoTransform) -> torch.Tensor:
    """Apply a GeoTransform to an NCHW batch, matching the numpy semantics
    of imaging.apply_transform on each HWC image."""
    if x.ndim != 4:
        raise ValueError(f"expected NCHW tensor, got shape {tuple(x.shape)}")
    if t is GeoTransform.IDENTITY:
        return x
    if t is GeoTransform.VFLIP:
        return torch.flip(x, dims=[2])
    if t is GeoTransform.HFLIP:
        return torch.flip(x, dims=[3])
    if t is GeoTransform.ROT90:
        return torch.rot90(x, k=1, dims=[2, 3])
    if t is GeoTransform.ROT180:
        return torch.rot90(x, k=2, dims=[2, 3])
    if t is GeoTransform.ROT270:
        return torch.rot90(x, k=3, dims=[2, 3])
    raise ValueError(f"unknown transform {t!r}")


def adversarial_loss(
    d_scores_real: Optional[torch.Tensor],
    d_scores_fake: torch.Tensor,
    role: str,
) -> torch.Tensor:
    """Least-squares adversarial loss over patch score grids.

    discriminator role: mean((real - 1)^2) + mean(fake^2), pushing real
    patches toward 1 and fakes toward 0. generator role: mean((fake - 1)^2);
    real scores are not consulted and may be None.
    """
    if role == "generator":
        return torch.mean((d_scores_fake - 1.0) ** 2)
    if role == "discriminator":
        if d_scores_real is None:
            raise ValueError("discriminator role needs real scores")
        if d_scores_real.shape != d_scores_fake.shape:
            raise ValueError(
                f"score shapes differ: {tuple(d_scores_real.shape)} vs "
                f"{tuple(d_scores_fake.shape)}"
            )
        return torch.mean((d_scores_real - 1.0) ** 2) + torch.mean(d_scores_fake**2)
    raise ValueError(f"role must be 'generator' or 'discriminator', got {role!r}")


def geometry_consistency_loss(
    gen: Callable[[torch.Tensor], torch.Tensor],
    x: torch.Tensor,
    t: GeoTransform,
) -> torch.Tensor:
    """Mean L1 gap between translate-then-transform and transform-then-translate.

    Exactly zero when the generator commutes with the transform, which every
    pointwise (per-pixel) map does.
    """
    return torch.mean(torch.abs(gen(transform_batch(x, t)) - transform_batch(gen(x), t)))


def identity_mapping_loss(
    gen: Callable[[torch.Tensor], torch.Tensor],
    y: torch.Tensor,
) -> torch.Tensor:
    """Mean L1 change the generator applies to target-domain inputs."""
    return torch.mean(torch.abs(gen(y) - y))


def generator_total_loss(
    gen: Callable[[torch.Tensor], torch.Tensor],
    disc: Callable[[torch.Tensor], torch.Tensor],
    x: torch.Tensor,
    y: torch.Tensor,
    t: GeoTransform,
    lambda_gc: float,
    lambda_idt: float,
) -> Tuple[torch.Tensor, Dict[str, float], torch.Tensor]:
    """Full generator objective: adversarial + gc + identity terms.

    Identical math to composing the standalone losses, but reuses the
    gen(x) forward pass between the adversarial and gc terms.

    Returns:
        (total, parts, fake) where parts holds detached floats for
        'adv_G', 'gc' and 'idt', and fake is gen(x) so the discriminator
        step can reuse it (detached).
    """
    fake = gen(x)
    adv = adversarial_loss(None, disc(fake), "generator")
    gc = torch.mean(torch.abs(gen(transform_batch(x, t)) - transform_batch(fake, t)))
    idt = identity_mapping_loss(gen, y)
    total = adv + lambda_gc * gc + lambda_idt * idt
    parts = {"adv_G": float(adv.detach()), "gc": float(gc.detach()), "idt": float(idt.detach())}
    return total, parts, fake

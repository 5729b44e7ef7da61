"""Generator and discriminator architectures for the translation model.

The generator is a reflection-padded convolutional encoder, a stack of
residual blocks, and a transposed-free upsampling decoder ending in tanh,
so raw network outputs live in [-1, 1]. The discriminator is a patch
classifier: a few strided convolutions emitting a grid of real/fake scores,
one per receptive field.

Unit-interval images are the package-wide contract; :func:`to_signed` /
:func:`to_unit` convert at the module boundary and
:func:`generate_unit` wraps a generator so callers never see [-1, 1].
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .config import GcganConfig

__all__ = [
    "ResnetGenerator",
    "PatchDiscriminator",
    "build_generator",
    "build_discriminator",
    "init_weights",
    "to_signed",
    "to_unit",
    "generate_unit",
]


def to_signed(x: torch.Tensor) -> torch.Tensor:
    """[0, 1] images to the network's [-1, 1] range."""
    return x * 2.0 - 1.0


def to_unit(x: torch.Tensor) -> torch.Tensor:
    """[-1, 1] network outputs back to [0, 1], clamped against overshoot."""
    return torch.clamp((x + 1.0) * 0.5, 0.0, 1.0)


def _norm(kind: str, channels: int):
    if kind == "instance":
        return [nn.InstanceNorm2d(channels)]
    return []  # "none": flat synthetic inputs make per-image stats degenerate


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, dropout: bool, norm: str):
        super().__init__()
        layers = [
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, kernel_size=3),
            *_norm(norm, channels),
            nn.ReLU(inplace=True),
        ]
        if dropout:
            layers.append(nn.Dropout(0.5))
        layers += [
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, kernel_size=3),
            *_norm(norm, channels),
        ]
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        return x + self.block(x)


class ResnetGenerator(nn.Module):
    """Encoder - residual blocks - decoder, 3 channels in and out.

    With residual_output the stack predicts a delta that is added to the
    input before the final tanh; otherwise the stack output is squashed
    directly (the classic translation-net head).
    """

    def __init__(self, base_channels: int = 64, n_blocks: int = 9, dropout: bool = False,
                 norm: str = "instance", residual_output: bool = False):
        super().__init__()
        self.residual_output = residual_output
        ch = base_channels
        layers = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(3, ch, kernel_size=7),
            *_norm(norm, ch),
            nn.ReLU(inplace=True),
        ]
        for _ in range(2):
            layers += [
                nn.Conv2d(ch, ch * 2, kernel_size=3, stride=2, padding=1),
                *_norm(norm, ch * 2),
                nn.ReLU(inplace=True),
            ]
            ch *= 2
        for _ in range(n_blocks):
            layers.append(ResidualBlock(ch, dropout, norm))
        for _ in range(2):
            layers += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(ch, ch // 2, kernel_size=3, stride=1, padding=1),
                *_norm(norm, ch // 2),
                nn.ReLU(inplace=True),
            ]
            ch //= 2
        layers += [
            nn.ReflectionPad2d(3),
            nn.Conv2d(ch, 3, kernel_size=7),
        ]
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        delta = self.model(x)
        if self.residual_output:
            return torch.tanh(delta + x)
        return torch.tanh(delta)


class PatchDiscriminator(nn.Module):
    """Strided conv stack emitting an h' x w' grid of patch scores."""

    def __init__(self, base_channels: int = 64, n_layers: int = 3):
        super().__init__()
        ch = base_channels
        layers = [
            nn.Conv2d(3, ch, kernel_size=4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        for i in range(1, n_layers):
            out = min(ch * 2, base_channels * 8)
            layers += [
                nn.Conv2d(ch, out, kernel_size=4, stride=2, padding=1),
                nn.InstanceNorm2d(out),
                nn.LeakyReLU(0.2, inplace=True),
            ]
            ch = out
        out = min(ch * 2, base_channels * 8)
        layers += [
            nn.Conv2d(ch, out, kernel_size=4, stride=1, padding=1),
            nn.InstanceNorm2d(out),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(out, 1, kernel_size=4, stride=1, padding=1),
        ]
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x)


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    """Normal(0, std) init for conv weights, zeros for biases."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def build_generator(cfg: GcganConfig) -> ResnetGenerator:
    gen = ResnetGenerator(cfg.gen_base_channels, cfg.n_residual_blocks,
                          cfg.dropout_enabled, cfg.gen_norm, cfg.gen_residual_output)
    init_weights(gen)
    return gen


def build_discriminator(cfg: GcganConfig) -> PatchDiscriminator:
    disc = PatchDiscriminator(cfg.disc_base_channels, cfg.disc_layers)
    init_weights(disc)
    return disc


def generate_unit(gen: nn.Module, imgs01: torch.Tensor) -> torch.Tensor:
    """Run the generator on [0, 1] images and return [0, 1] outputs."""
    return to_unit(gen(to_signed(imgs01)))

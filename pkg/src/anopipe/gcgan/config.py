"""Translation-model hyperparameters and the two-phase learning-rate schedule."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..imaging import GeoTransform

__all__ = ["GcganConfig", "ScheduleError", "lr_at"]


class ScheduleError(Exception):
    """Epoch outside the configured schedule."""


@dataclass(frozen=True)
class GcganConfig:
    """Hyperparameters of the geometry-consistency translation model.

    The learning rate stays at base_lr for epochs_flat epochs, then decays
    linearly to zero over epochs_decay epochs. Network depth fields size the
    generator (2 downsamplings, n_residual_blocks middle blocks) and the
    patch discriminator.
    """

    gc_transform: GeoTransform = GeoTransform.VFLIP
    lambda_gc: float = 20.0
    lambda_idt: float = 0.5
    dropout_enabled: bool = False
    input_size: int = 200
    batch_size: int = 12
    epochs_flat: int = 400
    epochs_decay: int = 200
    base_lr: float = 2e-4
    seed: int = 0
    gen_base_channels: int = 64
    n_residual_blocks: int = 9
    gen_norm: str = "instance"
    # With a residual output head the network produces a style delta that is
    # added to its input before the final squashing, so the untrained model
    # is already near the identity and scene content survives by default.
    gen_residual_output: bool = False
    disc_base_channels: int = 64
    disc_layers: int = 3
    select_count: int = 12
    # GAN stabilizers. Instance noise is zero-mean Gaussian added to every
    # discriminator input (reals and fakes alike, network-value scale);
    # disc_lr_factor scales the discriminator's learning rate relative to
    # the shared schedule.
    instance_noise: float = 0.0
    disc_lr_factor: float = 1.0

    def __post_init__(self):
        if self.gc_transform is GeoTransform.IDENTITY:
            raise ValueError("gc_transform must not be the identity")
        if self.lambda_gc < 0 or self.lambda_idt < 0:
            raise ValueError("loss weights must be >= 0")
        if self.epochs_flat < 0 or self.epochs_decay < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.epochs_flat == 0 and self.epochs_decay == 0:
            raise ValueError("schedule must contain at least one epoch")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.instance_noise < 0:
            raise ValueError("instance_noise must be >= 0")
        if self.disc_lr_factor <= 0:
            raise ValueError("disc_lr_factor must be positive")
        if self.gen_norm not in ("instance", "none"):
            raise ValueError(f"gen_norm must be 'instance' or 'none', got {self.gen_norm!r}")

    @property
    def total_epochs(self) -> int:
        return self.epochs_flat + self.epochs_decay

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gc_transform"] = self.gc_transform.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GcganConfig":
        d = dict(d)
        d["gc_transform"] = GeoTransform(d["gc_transform"])
        return cls(**d)


def lr_at(epoch: int, cfg: GcganConfig) -> float:
    """Learning rate for a zero-based epoch index.

    base_lr during the flat phase, then base_lr * (1 - (epoch - epochs_flat
    + 1) / epochs_decay), which reaches exactly 0 at the final epoch.
    """
    if epoch < 0 or epoch >= cfg.total_epochs:
        raise ScheduleError(
            f"epoch {epoch} outside schedule [0, {cfg.total_epochs})"
        )
    if epoch < cfg.epochs_flat:
        return cfg.base_lr
    return cfg.base_lr * (1.0 - (epoch - cfg.epochs_flat + 1) / cfg.epochs_decay)

"""Geometry-consistency GAN: style translation that commutes with a fixed
pixel permutation, so scene geometry survives the domain change."""

from .config import GcganConfig, ScheduleError, lr_at
from .losses import (
    adversarial_loss,
    generator_total_loss,
    geometry_consistency_loss,
    identity_mapping_loss,
    transform_batch,
)
from .networks import PatchDiscriminator, ResnetGenerator, build_discriminator, build_generator
from .train import (
    EpochStats,
    TrainingError,
    TrainResult,
    TrainState,
    load_generator_checkpoint,
    select_best_epoch,
    train,
)
from .convert import ConvertError, convert

__all__ = [
    "GcganConfig",
    "ScheduleError",
    "lr_at",
    "adversarial_loss",
    "geometry_consistency_loss",
    "identity_mapping_loss",
    "generator_total_loss",
    "transform_batch",
    "ResnetGenerator",
    "PatchDiscriminator",
    "build_generator",
    "build_discriminator",
    "train",
    "TrainingError",
    "TrainState",
    "TrainResult",
    "EpochStats",
    "select_best_epoch",
    "load_generator_checkpoint",
    "convert",
    "ConvertError",
]

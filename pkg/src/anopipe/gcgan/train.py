"""Training loop for the geometry-consistency translation model.

One logical thread of control: images are loaded up front, batches are drawn
with a seeded numpy generator, and all torch state is seeded from the config,
so a fixed seed reproduces the run. Every epoch writes a generator
checkpoint carrying its selection score (geometry-consistency plus identity
loss on a held-out slice); the best decay-phase epoch is what conversion
uses.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from ..imaging import load_image
from ..manifest import DatasetManifest
from .config import GcganConfig, lr_at
from .losses import adversarial_loss, generator_total_loss, geometry_consistency_loss, identity_mapping_loss
from .networks import ResnetGenerator, build_discriminator, build_generator, to_signed

__all__ = [
    "EpochStats",
    "TrainState",
    "TrainResult",
    "TrainingError",
    "train",
    "select_best_epoch",
    "load_generator_checkpoint",
    "load_manifest_images",
    "LOSS_LOG_HEADER",
]

LOSS_LOG_HEADER = ["epoch", "adv_G", "adv_D", "gc", "idt", "lr"]

CHECKPOINT_FORMAT_VERSION = 1


class TrainingError(Exception):
    """Bad training inputs: empty manifests, image size mismatches."""


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    adv_G: float
    adv_D: float
    gc: float
    idt: float
    lr: float
    selection_score: float


@dataclass
class TrainState:
    """Mutable training bookkeeping; optimizer moments live in the optimizers."""

    epoch: int = 0
    current_lr: float = 0.0
    history: List[EpochStats] = field(default_factory=list)


@dataclass
class TrainResult:
    generator: ResnetGenerator
    state: TrainState
    best_epoch: int
    checkpoint_dir: Path

    @property
    def best_checkpoint(self) -> Path:
        return self.checkpoint_dir / f"epoch_{self.best_epoch:04d}.pt"


def load_manifest_images(
    manifest: DatasetManifest, images_root: Union[str, Path], expected_size: int
) -> torch.Tensor:
    """Load every manifest image as one NCHW float tensor in [0, 1]."""
    if len(manifest) == 0:
        raise TrainingError("manifest is empty")
    root = Path(images_root)
    arrays = []
    for entry in manifest:
        img = load_image(root / f"{entry.image_id}.png")
        h, w, c = img.shape
        if h != expected_size or w != expected_size or c != 3:
            raise TrainingError(
                f"{entry.image_id}: expected {expected_size}x{expected_size}x3, got {h}x{w}x{c}"
            )
        arrays.append(img)
    stacked = np.stack(arrays).transpose(0, 3, 1, 2)
    return torch.from_numpy(np.ascontiguousarray(stacked))


def _epoch_checkpoint_path(out_dir: Path, epoch: int) -> Path:
    return out_dir / f"epoch_{epoch:04d}.pt"


def _save_generator_checkpoint(
    path: Path, cfg: GcganConfig, gen: ResnetGenerator, epoch: int, selection_score: float
) -> None:
    torch.save(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": "gcgan_generator",
            "config": cfg.to_dict(),
            "epoch": epoch,
            "selection_score": selection_score,
            "generator": gen.state_dict(),
        },
        path,
    )


def load_generator_checkpoint(path: Union[str, Path]) -> Tuple[ResnetGenerator, GcganConfig, dict]:
    """Rebuild a generator from a checkpoint archive.

    Returns (generator in eval mode, config, raw record).
    """
    path = Path(path)
    if not path.exists():
        raise TrainingError(f"no such checkpoint: {path}")
    record = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(record, dict) or record.get("kind") != "gcgan_generator":
        raise TrainingError(f"{path}: not a generator checkpoint")
    if record.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise TrainingError(f"{path}: unsupported checkpoint version {record.get('format_version')}")
    cfg = GcganConfig.from_dict(record["config"])
    gen = build_generator(cfg)
    gen.load_state_dict(record["generator"])
    gen.eval()
    return gen, cfg, record


def select_best_epoch(history: Sequence[EpochStats], cfg: GcganConfig) -> int:
    """Pick the checkpoint to convert with: lowest selection score among
    decay-phase epochs (all epochs when there is no decay phase)."""
    candidates = [s for s in history if s.epoch >= cfg.epochs_flat]
    if not candidates:
        candidates = list(history)
    best = min(candidates, key=lambda s: (s.selection_score, s.epoch))
    return best.epoch


def _selection_score(
    gen: ResnetGenerator,
    x_slice: torch.Tensor,
    y_slice: torch.Tensor,
    cfg: GcganConfig,
) -> float:
    gen.eval()
    with torch.no_grad():
        gc = geometry_consistency_loss(gen, x_slice, cfg.gc_transform)
        idt = identity_mapping_loss(gen, y_slice)
    gen.train()
    return float(gc + idt)


def train(
    cfg: GcganConfig,
    source_manifest: DatasetManifest,
    target_manifest: DatasetManifest,
    images_root: Union[str, Path],
    out_dir: Union[str, Path],
    log_every: Optional[int] = None,
) -> TrainResult:
    """Train source -> target translation and checkpoint every epoch.

    The first select_count images of each pool are held out as the
    checkpoint-selection slice and never used for gradient updates. The
    loss log lands in out_dir/loss_log.csv with one row per epoch.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    x_all = to_signed(load_manifest_images(source_manifest, images_root, cfg.input_size))
    y_all = to_signed(load_manifest_images(target_manifest, images_root, cfg.input_size))

    n_sel = min(cfg.select_count, len(x_all) - 1, len(y_all) - 1)
    n_sel = max(n_sel, 0)
    x_slice, x_train = x_all[:n_sel], x_all[n_sel:]
    y_slice, y_train = y_all[:n_sel], y_all[n_sel:]
    if len(x_train) == 0 or len(y_train) == 0:
        raise TrainingError("not enough images left after the selection slice")
    if n_sel == 0:
        x_slice, y_slice = x_train[:1], y_train[:1]

    torch.manual_seed(cfg.seed)
    gen = build_generator(cfg)
    disc = build_discriminator(cfg)
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.base_lr, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.base_lr, betas=(0.5, 0.999))
    rng = np.random.Generator(np.random.PCG64(np.uint64(cfg.seed) ^ np.uint64(0x5EED)))
    noise_rng = torch.Generator().manual_seed(cfg.seed + 0x11CE)

    def judge(z: torch.Tensor) -> torch.Tensor:
        # Instance noise blurs the discriminator's view of both reals and
        # fakes, damping its sensitivity to fine structure.
        if cfg.instance_noise > 0:
            z = z + torch.randn(z.shape, generator=noise_rng) * cfg.instance_noise
        return disc(z)

    state = TrainState()
    steps = (len(x_train) + cfg.batch_size - 1) // cfg.batch_size

    log_path = out_dir / "loss_log.csv"
    with log_path.open("w", newline="") as log_file:
        log = csv.writer(log_file)
        log.writerow(LOSS_LOG_HEADER)

        for epoch in range(cfg.total_epochs):
            lr = lr_at(epoch, cfg)
            for group in opt_g.param_groups:
                group["lr"] = lr
            for group in opt_d.param_groups:
                group["lr"] = lr * cfg.disc_lr_factor
            state.epoch = epoch
            state.current_lr = lr

            x_order = rng.permutation(len(x_train))
            y_order = rng.permutation(len(y_train))
            sums = {"adv_G": 0.0, "adv_D": 0.0, "gc": 0.0, "idt": 0.0}

            for step in range(steps):
                xb = x_train[x_order[step * cfg.batch_size:(step + 1) * cfg.batch_size]]
                y_idx = [y_order[(step * cfg.batch_size + j) % len(y_train)] for j in range(len(xb))]
                yb = y_train[np.asarray(y_idx)]

                opt_g.zero_grad(set_to_none=True)
                total_g, parts, fake = generator_total_loss(
                    gen, judge, xb, yb, cfg.gc_transform, cfg.lambda_gc, cfg.lambda_idt
                )
                total_g.backward()
                opt_g.step()

                opt_d.zero_grad(set_to_none=True)
                loss_d = adversarial_loss(judge(yb), judge(fake.detach()), "discriminator")
                loss_d.backward()
                opt_d.step()

                sums["adv_G"] += parts["adv_G"]
                sums["gc"] += parts["gc"]
                sums["idt"] += parts["idt"]
                sums["adv_D"] += float(loss_d.detach())

            sel = _selection_score(gen, x_slice, y_slice, cfg)
            stats = EpochStats(
                epoch=epoch,
                adv_G=sums["adv_G"] / steps,
                adv_D=sums["adv_D"] / steps,
                gc=sums["gc"] / steps,
                idt=sums["idt"] / steps,
                lr=lr,
                selection_score=sel,
            )
            state.history.append(stats)
            log.writerow([epoch, repr(stats.adv_G), repr(stats.adv_D),
                          repr(stats.gc), repr(stats.idt), repr(lr)])
            log_file.flush()
            _save_generator_checkpoint(_epoch_checkpoint_path(out_dir, epoch), cfg, gen, epoch, sel)
            if log_every and (epoch + 1) % log_every == 0:
                print(
                    f"[gcgan] epoch {epoch + 1}/{cfg.total_epochs} "
                    f"adv_G={stats.adv_G:.4f} adv_D={stats.adv_D:.4f} "
                    f"gc={stats.gc:.4f} idt={stats.idt:.4f} lr={lr:.2e}",
                    flush=True,
                )

    best_epoch = select_best_epoch(state.history, cfg)
    torch.save(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": "gcgan_full",
            "config": cfg.to_dict(),
            "epoch": state.epoch,
            "best_epoch": best_epoch,
            "generator": gen.state_dict(),
            "discriminator": disc.state_dict(),
            "opt_g": opt_g.state_dict(),
            "opt_d": opt_d.state_dict(),
        },
        out_dir / "final.pt",
    )
    gen.eval()
    return TrainResult(generator=gen, state=state, best_epoch=best_epoch, checkpoint_dir=out_dir)

"""Supervised binary anomaly detector.

Trains on normal images plus synthetic anomaly images and scores each image
with a two-class softmax; class index 0 is normal, 1 is anomaly. Two
backbones: a small residual network trained from scratch (no downloads, used
by the test suite) and an optional pretrained 50-layer residual network for
full-size runs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
from scipy.stats import rankdata

from .imaging import load_image, resize
from .manifest import DatasetManifest, Label

__all__ = [
    "ClassifierConfig",
    "AnomalyScore",
    "ClassifierError",
    "SmallResNet",
    "build",
    "train",
    "train_arrays",
    "predict",
    "predict_batch",
    "evaluate",
    "roc_auc",
    "confusion_at",
    "save_classifier",
    "load_classifier",
]

CHECKPOINT_FORMAT_VERSION = 1

NORMAL_IDX = 0
ANOMALY_IDX = 1


class ClassifierError(Exception):
    """Bad configuration or degenerate training/evaluation inputs."""


@dataclass(frozen=True)
class ClassifierConfig:
    input_size: int = 224
    learning_rate: float = 1.0e-5
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 50
    backbone: str = "residual50_pretrained"
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ClassifierError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ClassifierError("momentum must be in [0, 1)")
        if self.backbone not in ("residual50_pretrained", "residual_small_scratch"):
            raise ClassifierError(f"unknown backbone {self.backbone!r}")
        if self.input_size < 8:
            raise ClassifierError("input_size must be >= 8")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierConfig":
        return cls(**d)


@dataclass(frozen=True)
class AnomalyScore:
    """Softmax output pair; p_anomaly + p_normal is 1 up to float error."""

    p_anomaly: float
    p_normal: float


class _ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class SmallResNet(nn.Module):
    """Nine-convolution residual network for desk-size inputs.

    Global average pooling makes it size-agnostic; `cam_layer` is the module
    whose output feeds Grad-CAM (the last residual stage, post-activation).
    """

    def __init__(self, config: ClassifierConfig):
        super().__init__()
        self.config = config
        self.stem = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=1, padding=1, bias=False),
            nn.BatchNorm2d(16),
            nn.ReLU(inplace=True),
        )
        self.stage1 = _ResidualBlock(16, 32, stride=2)
        self.stage2 = _ResidualBlock(32, 64, stride=2)
        self.stage3 = _ResidualBlock(64, 64, stride=1)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(64, 2)

    @property
    def cam_layer(self) -> nn.Module:
        return self.stage3

    def forward(self, x):
        x = x - 0.5
        x = self.stem(x)
        x = self.stage1(x)
        x = self.stage2(x)
        x = self.stage3(x)
        x = self.pool(x).flatten(1)
        return self.fc(x)


class Resnet50Transfer(nn.Module):
    """Pretrained 50-layer residual backbone with a fresh two-class head.

    Needs torchvision and downloadable weights; intended for full-size runs,
    not for the self-contained test suite.
    """

    def __init__(self, config: ClassifierConfig):
        super().__init__()
        try:
            from torchvision import models
        except ImportError as exc:
            raise ClassifierError(
                "backbone residual50_pretrained needs torchvision "
                "(install the 'pretrained' extra)"
            ) from exc
        try:
            backbone = models.resnet50(weights=models.ResNet50_Weights.IMAGENET1K_V2)
        except Exception as exc:
            raise ClassifierError(f"could not load pretrained weights: {exc}") from exc
        backbone.fc = nn.Linear(backbone.fc.in_features, 2)
        self.config = config
        self.backbone = backbone
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

    @property
    def cam_layer(self) -> nn.Module:
        return self.backbone.layer4

    def forward(self, x):
        return self.backbone((x - self.mean) / self.std)


def build(cfg: ClassifierConfig) -> nn.Module:
    """Construct a detector with seeded initialization."""
    torch.manual_seed(cfg.seed)
    if cfg.backbone == "residual_small_scratch":
        return SmallResNet(cfg)
    return Resnet50Transfer(cfg)


def _to_batch(imgs: Sequence[np.ndarray], size: int) -> torch.Tensor:
    resized = [resize(img, size, size) if img.shape[:2] != (size, size) else img for img in imgs]
    arr = np.stack(resized).transpose(0, 3, 1, 2).astype(np.float32)
    return torch.from_numpy(np.ascontiguousarray(arr))


def _check_channels(img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ClassifierError(
            f"detector expects 3-channel images, got shape {getattr(img, 'shape', None)}"
        )


def load_labeled(
    manifest: DatasetManifest, images_root: Union[str, Path]
) -> Tuple[List[np.ndarray], np.ndarray]:
    """Images plus integer labels (0 normal, 1 anomaly) in manifest order."""
    root = Path(images_root)
    imgs = [load_image(root / f"{e.image_id}.png") for e in manifest]
    labels = np.array([ANOMALY_IDX if e.label is Label.ANOMALY else NORMAL_IDX for e in manifest])
    return imgs, labels


def train(
    model: nn.Module,
    train_manifest: DatasetManifest,
    cfg: ClassifierConfig,
    images_root: Union[str, Path],
    log_every: int = 0,
) -> List[float]:
    """Momentum-SGD on cross-entropy for cfg.epochs; returns per-epoch mean loss.

    The model must have been built from the same config; training a model
    under a different config than it was built with is a wiring bug.
    """
    labels_present = {e.label for e in train_manifest}
    if len(train_manifest) == 0 or len(labels_present) < 2:
        raise ClassifierError("training manifest must contain both classes")
    imgs, labels = load_labeled(train_manifest, images_root)
    return train_arrays(model, imgs, labels.tolist(), cfg, log_every=log_every)


def train_arrays(
    model: nn.Module,
    imgs: Sequence[np.ndarray],
    labels: Sequence[int],
    cfg: ClassifierConfig,
    log_every: int = 0,
) -> List[float]:
    """Core trainer over in-memory images and 0/1 labels."""
    if getattr(model, "config", None) != cfg:
        raise ClassifierError("model was built with a different config")
    if len(set(labels)) < 2:
        raise ClassifierError("training data must contain both classes")
    x_all = _to_batch(imgs, cfg.input_size)
    y_all = torch.from_numpy(np.asarray(labels, dtype=np.int64))

    opt = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate, momentum=cfg.momentum)
    loss_fn = nn.CrossEntropyLoss()
    rng = np.random.Generator(np.random.PCG64(np.uint64(cfg.seed) ^ np.uint64(0xC1A55)))

    model.train()
    curve = []
    n = len(x_all)
    steps = (n + cfg.batch_size - 1) // cfg.batch_size
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for step in range(steps):
            idx = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
            opt.zero_grad(set_to_none=True)
            loss = loss_fn(model(x_all[idx]), y_all[idx])
            loss.backward()
            opt.step()
            total += float(loss.detach())
        curve.append(total / steps)
        if log_every and (epoch + 1) % log_every == 0:
            print(f"[detector] epoch {epoch + 1}/{cfg.epochs} loss={curve[-1]:.4f}", flush=True)
    model.eval()
    return curve


def predict(model: nn.Module, img: np.ndarray) -> AnomalyScore:
    """Score one image; resizes to the model's input size first."""
    _check_channels(img)
    scores = predict_batch(model, [img])
    return scores[0]


def predict_batch(model: nn.Module, imgs: Sequence[np.ndarray],
                  chunk: int = 64) -> List[AnomalyScore]:
    for img in imgs:
        _check_channels(img)
    model.eval()
    out: List[AnomalyScore] = []
    for start in range(0, len(imgs), chunk):
        x = _to_batch(imgs[start:start + chunk], model.config.input_size)
        with torch.no_grad():
            probs = torch.softmax(model(x), dim=1).numpy()
        out.extend(
            AnomalyScore(p_anomaly=float(p[ANOMALY_IDX]), p_normal=float(p[NORMAL_IDX]))
            for p in probs
        )
    return out


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve via the rank statistic, ties averaged."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ClassifierError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def confusion_at(scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> Dict[str, int]:
    """Confusion counts with anomaly predicted when score >= threshold."""
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    pred = scores >= threshold
    truth = labels == 1
    return {
        "tp": int(np.sum(pred & truth)),
        "fp": int(np.sum(pred & ~truth)),
        "tn": int(np.sum(~pred & ~truth)),
        "fn": int(np.sum(~pred & truth)),
    }


def evaluate(
    model: nn.Module,
    test_manifest: DatasetManifest,
    images_root: Union[str, Path],
    hist_bins: int = 20,
) -> dict:
    """Score a test manifest and summarize: per-image scores, confusion at
    threshold 0.5, ROC-AUC, and per-true-class score histograms."""
    if len(test_manifest) == 0:
        raise ClassifierError("test manifest is empty")
    imgs, labels = load_labeled(test_manifest, images_root)
    scores = [s.p_anomaly for s in predict_batch(model, imgs)]

    edges = np.linspace(0.0, 1.0, hist_bins + 1)
    arr = np.asarray(scores)
    hist_normal, _ = np.histogram(arr[labels == 0], bins=edges)
    hist_anomaly, _ = np.histogram(arr[labels == 1], bins=edges)

    metrics = {
        "n": len(scores),
        "scores": [
            {"image_id": e.image_id, "label": e.label.value, "p_anomaly": s}
            for e, s in zip(test_manifest, scores)
        ],
        "confusion_at_0.5": confusion_at(scores, labels),
        "score_histograms": {
            "bin_edges": edges.tolist(),
            "normal": hist_normal.tolist(),
            "anomaly": hist_anomaly.tolist(),
        },
    }
    if len(set(labels.tolist())) == 2:
        metrics["roc_auc"] = roc_auc(scores, labels)
    return metrics


def save_classifier(model: nn.Module, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": "classifier",
            "config": model.config.to_dict(),
            "model": model.state_dict(),
        },
        path,
    )


def load_classifier(path: Union[str, Path]) -> nn.Module:
    path = Path(path)
    if not path.exists():
        raise ClassifierError(f"no such checkpoint: {path}")
    record = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(record, dict) or record.get("kind") != "classifier":
        raise ClassifierError(f"{path}: not a classifier checkpoint")
    cfg = ClassifierConfig.from_dict(record["config"])
    model = build(cfg)
    model.load_state_dict(record["model"])
    model.eval()
    return model

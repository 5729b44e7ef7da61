"""Pipeline configuration: one YAML file drives every stage.

Two presets bundle coherent defaults end to end:

* ``desk_scale``      - 64 px canvas, 200-image pools, 30+30 translator
                        epochs, 10 detector epochs, scratch backbone. Runs
                        on a workstation CPU; this is what the test suite
                        uses.
* ``paper_faithful``  - 200 px canvas, 600-image pools, 400+200 translator
                        epochs, 50 detector epochs, pretrained 50-layer
                        backbone (needs torchvision weights).

All randomness flows from the root seed through named sub-seeds, one per
stage, derived with a stable hash.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple, Union

import yaml

from ..classifier import ClassifierConfig
from ..gcgan import GcganConfig
from ..scene import AngleSampler, LabelRule, SceneSpec

__all__ = [
    "PipelineError",
    "PreconditionError",
    "SceneConfig",
    "DatasetSizes",
    "ExplainConfig",
    "PipelineConfig",
    "derive_seed",
    "PRESETS",
]


class PipelineError(Exception):
    """Internal pipeline failure (exit code 1)."""


class PreconditionError(PipelineError):
    """A stage cannot run: bad config or missing upstream artifacts (exit 2)."""


def derive_seed(root_seed: int, label: str) -> int:
    """Stable 63-bit sub-seed for a named consumer of the root seed."""
    digest = hashlib.sha256(f"{root_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


@dataclass(frozen=True)
class SceneConfig:
    canvas: int = 64
    tau_deg: float = 15.0
    ref_angle_deg: float = 0.0
    normal_max_offset_deg: float = 5.0
    anomaly_min_offset_deg: float = 25.0
    anomaly_max_offset_deg: float = 175.0

    def template(self) -> SceneSpec:
        return SceneSpec.default_for((self.canvas, self.canvas),
                                     ref_angle=self.ref_angle_deg)

    def rule(self) -> LabelRule:
        return LabelRule(tau=self.tau_deg)

    def normal_sampler(self) -> AngleSampler:
        return AngleSampler.normal_band(self.normal_max_offset_deg)

    def anomaly_sampler(self) -> AngleSampler:
        return AngleSampler.anomaly_band(self.anomaly_min_offset_deg,
                                         self.anomaly_max_offset_deg)

    @property
    def size(self) -> Tuple[int, int]:
        return (self.canvas, self.canvas)


@dataclass(frozen=True)
class DatasetSizes:
    """Pool sizes per role; training compositions are drawn from these."""

    train_normal: int = 200
    test_normal: int = 200
    cg_pool: int = 200
    test_anomaly: int = 200
    converted_pool: int = 200
    train_anomaly: int = 200

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise PreconditionError(f"dataset size {f.name} must be >= 1")
        if self.train_anomaly > self.converted_pool:
            raise PreconditionError(
                "train_anomaly cannot exceed converted_pool "
                f"({self.train_anomaly} > {self.converted_pool})"
            )
        if self.train_anomaly > self.cg_pool:
            raise PreconditionError(
                "train_anomaly cannot exceed cg_pool "
                f"({self.train_anomaly} > {self.cg_pool})"
            )


@dataclass(frozen=True)
class ExplainConfig:
    n_images: int = 16
    overlay_alpha: float = 0.45


@dataclass(frozen=True)
class PipelineConfig:
    preset: str = "desk_scale"
    seed: int = 1234
    output_root: Path = Path("runs/desk")
    scene: SceneConfig = field(default_factory=SceneConfig)
    sizes: DatasetSizes = field(default_factory=DatasetSizes)
    gcgan: GcganConfig = field(default_factory=GcganConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)

    def __post_init__(self):
        if self.gcgan.input_size != self.scene.canvas:
            raise PreconditionError(
                f"translator input_size {self.gcgan.input_size} does not match "
                f"scene canvas {self.scene.canvas}"
            )

    def stage_seed(self, label: str) -> int:
        return derive_seed(self.seed, label)

    def resolved_output_root(self) -> Path:
        env = os.environ.get("ANOPIPE_OUTPUT_ROOT")
        return Path(env) if env else Path(self.output_root)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["output_root"] = str(self.output_root)
        d["gcgan"] = self.gcgan.to_dict()
        d["classifier"] = self.classifier.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if "scene" in d:
            d["scene"] = SceneConfig(**d["scene"])
        if "sizes" in d:
            d["sizes"] = DatasetSizes(**d["sizes"])
        if "gcgan" in d:
            d["gcgan"] = GcganConfig.from_dict(d["gcgan"])
        if "classifier" in d:
            d["classifier"] = ClassifierConfig.from_dict(d["classifier"])
        if "explain" in d:
            d["explain"] = ExplainConfig(**d["explain"])
        if "output_root" in d:
            d["output_root"] = Path(d["output_root"])
        return cls(**d)

    def to_yaml(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=True)

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise PreconditionError(f"no such config file: {path}")
        with path.open() as f:
            try:
                raw = yaml.safe_load(f)
            except yaml.YAMLError as exc:
                raise PreconditionError(f"{path}: invalid YAML ({exc})") from exc
        if not isinstance(raw, dict):
            raise PreconditionError(f"{path}: config must be a mapping")
        base = raw.pop("preset", "desk_scale")
        cfg = preset(base)
        merged = cfg.to_dict()
        _deep_update(merged, raw)
        merged["preset"] = base
        try:
            return cls.from_dict(merged)
        except (TypeError, ValueError) as exc:
            raise PreconditionError(f"{path}: bad config value ({exc})") from exc

    def with_overrides(self, *, seed: Optional[int] = None,
                       output_root: Optional[Union[str, Path]] = None) -> "PipelineConfig":
        cfg = self
        if seed is not None:
            cfg = replace(
                cfg,
                seed=seed,
                gcgan=replace(cfg.gcgan, seed=derive_seed(seed, "gcgan")),
                classifier=replace(cfg.classifier, seed=derive_seed(seed, "classifier")),
            )
        if output_root is not None:
            cfg = replace(cfg, output_root=Path(output_root))
        return cfg


def _deep_update(base: dict, patch: dict) -> None:
    for key, val in patch.items():
        if isinstance(val, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], val)
        else:
            base[key] = val


def desk_scale(seed: int = 1234, output_root: Union[str, Path] = "runs/desk") -> PipelineConfig:
    scene = SceneConfig(canvas=64)
    gcgan = GcganConfig(
        input_size=64,
        batch_size=12,
        epochs_flat=30,
        epochs_decay=30,
        base_lr=2e-4,
        lambda_gc=20.0,
        lambda_idt=0.5,
        gen_base_channels=8,
        n_residual_blocks=3,
        gen_norm="instance",
        gen_residual_output=True,
        disc_base_channels=12,
        disc_layers=2,
        instance_noise=0.1,
        disc_lr_factor=0.5,
        seed=derive_seed(seed, "gcgan"),
    )
    classifier = ClassifierConfig(
        input_size=64,
        learning_rate=0.01,
        momentum=0.9,
        batch_size=32,
        epochs=10,
        backbone="residual_small_scratch",
        seed=derive_seed(seed, "classifier"),
    )
    return PipelineConfig(
        preset="desk_scale",
        seed=seed,
        output_root=Path(output_root),
        scene=scene,
        sizes=DatasetSizes(train_normal=200, test_normal=200, cg_pool=200,
                           test_anomaly=200, converted_pool=200, train_anomaly=200),
        gcgan=gcgan,
        classifier=classifier,
    )


def paper_faithful(seed: int = 1234, output_root: Union[str, Path] = "runs/paper") -> PipelineConfig:
    scene = SceneConfig(canvas=200)
    gcgan = GcganConfig(
        input_size=200,
        batch_size=12,
        epochs_flat=400,
        epochs_decay=200,
        base_lr=2e-4,
        lambda_gc=20.0,
        lambda_idt=0.5,
        gen_base_channels=64,
        n_residual_blocks=9,
        gen_norm="instance",
        gen_residual_output=True,
        disc_base_channels=64,
        disc_layers=3,
        instance_noise=0.1,
        disc_lr_factor=0.5,
        seed=derive_seed(seed, "gcgan"),
    )
    classifier = ClassifierConfig(
        input_size=224,
        learning_rate=1.0e-5,
        momentum=0.9,
        batch_size=32,
        epochs=50,
        backbone="residual50_pretrained",
        seed=derive_seed(seed, "classifier"),
    )
    return PipelineConfig(
        preset="paper_faithful",
        seed=seed,
        output_root=Path(output_root),
        scene=scene,
        sizes=DatasetSizes(train_normal=600, test_normal=600, cg_pool=600,
                           test_anomaly=200, converted_pool=1000, train_anomaly=600),
        gcgan=gcgan,
        classifier=classifier,
    )


PRESETS = {"desk_scale": desk_scale, "paper_faithful": paper_faithful}


def preset(name: str, seed: int = 1234,
           output_root: Optional[Union[str, Path]] = None) -> PipelineConfig:
    if name not in PRESETS:
        raise PreconditionError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = PRESETS[name](seed=seed)
    if output_root is not None:
        cfg = replace(cfg, output_root=Path(output_root))
    return cfg

"""Procedural renderer for the lever-valve scene in two visual domains.

The scene is a lever-operated valve: a mounting plate, a vertical pipe, and
an elongated lever that pivots at the plate center. The lever's angle is the
ground truth; an angle far from the reference orientation is an anomaly.

Two styles share identical geometry:

* ``cg_flat``      - every part is one constant color, no shading at all.
* ``pseudo_real``  - per-pixel texture noise, a directional illumination
                     gradient, background clutter and per-image color jitter,
                     all driven only by the scene seed.

Rendering is a pure function of (spec, size): same inputs, bit-identical
output. Dataset generation derives one seed per image from (pool seed,
index), so results do not depend on worker scheduling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import ndimage

from .imaging import resize, save_image
from .manifest import (
    DatasetManifest,
    Domain,
    Label,
    ManifestEntry,
    Split,
    label_for_domain,
)

__all__ = [
    "Style",
    "SceneSpec",
    "LabelRule",
    "AngleSampler",
    "SceneError",
    "SceneGeometryError",
    "SamplerDomainError",
    "NoLeverError",
    "AngleRecord",
    "render",
    "sample_dataset",
    "estimate_lever_angle",
    "angular_distance",
    "angle_diff_mod180",
    "normalize_angle",
    "derive_item_seed",
    "write_angles_csv",
    "read_angles_csv",
]


class SceneError(Exception):
    """Base class for scene construction and rendering failures."""


class SceneGeometryError(SceneError):
    """The lever cannot fit inside the canvas at every angle."""


class SamplerDomainError(SceneError):
    """An angle sampler produced angles inconsistent with the requested domain."""


class NoLeverError(SceneError):
    """No lever-like segment was found in the image."""


class Style(Enum):
    CG_FLAT = "cg_flat"
    PSEUDO_REAL = "pseudo_real"


# Part colors per style. The lever is the dominant red region in either
# domain, which is what the segmentation heuristic in estimate_lever_angle
# relies on; pseudo-real clutter cables are reddish too but much smaller.
# The lever color is shared between the styles on purpose: the style gap
# lives in the other parts (bright flat surfaces vs dark textured ones), so
# a translation model anchored on the target domain has a stable mapping
# for lever pixels.
_PALETTE = {
    Style.CG_FLAT: {
        "background": (0.84, 0.84, 0.87),
        "plate": (0.58, 0.60, 0.64),
        "pipe": (0.38, 0.40, 0.44),
        "lever": (0.55, 0.16, 0.13),
    },
    Style.PSEUDO_REAL: {
        "background": (0.44, 0.41, 0.37),
        "plate": (0.30, 0.33, 0.38),
        "pipe": (0.20, 0.21, 0.24),
        "lever": (0.55, 0.16, 0.13),
    },
}

_CABLE_COLOR = (0.50, 0.20, 0.16)

# Fraction of the lever length ahead of / behind the pivot. The long head
# makes 180-degree rotations visually distinct.
_LEVER_HEAD_FRACTION = 0.72


def normalize_angle(deg: float) -> float:
    """Wrap an angle into [-180, 180)."""
    return float((deg + 180.0) % 360.0 - 180.0)


def angular_distance(a: float, b: float) -> float:
    """Shortest distance between two angles on the full circle, in [0, 180]."""
    d = abs(a - b) % 360.0
    return float(min(d, 360.0 - d))


def angle_diff_mod180(a: float, b: float) -> float:
    """Shortest distance between two orientations (angles mod 180), in [0, 90]."""
    d = abs(a - b) % 180.0
    return float(min(d, 180.0 - d))


@dataclass(frozen=True)
class SceneSpec:
    """Parametric description of one rendered scene.

    Lengths are pixels; angles are degrees, counterclockwise from the
    positive x axis in the usual on-screen orientation, in [-180, 180).
    """

    lever_angle: float
    ref_angle: float = 0.0
    pipe_width: float = 6.0
    plate_rect: Tuple[float, float, float, float] = (12.0, 12.0, 40.0, 40.0)
    lever_length: float = 27.0
    lever_width: float = 5.0
    style: Style = Style.CG_FLAT
    seed: int = 0

    def __post_init__(self):
        if not -180.0 <= self.lever_angle < 180.0:
            raise SceneError(f"lever_angle must be in [-180, 180), got {self.lever_angle}")
        if min(self.pipe_width, self.lever_length, self.lever_width) <= 0:
            raise SceneError("pipe_width, lever_length and lever_width must be positive")

    @property
    def pivot(self) -> Tuple[float, float]:
        """Lever pivot (x, y) in pixel coordinates: the plate center."""
        x, y, w, h = self.plate_rect
        return (x + w / 2.0, y + h / 2.0)

    @property
    def sweep_radius(self) -> float:
        """Farthest lever point from the pivot over all angles."""
        head = _LEVER_HEAD_FRACTION * self.lever_length
        tail = self.lever_length - head
        return max(head, tail) + self.lever_width / 2.0

    def check_fits(self, size: Tuple[int, int]) -> None:
        """Raise SceneGeometryError unless the lever stays on canvas at every angle."""
        h, w = size
        px, py = self.pivot
        r = self.sweep_radius + 1.0  # one pixel of antialiasing margin
        if px - r < 0 or py - r < 0 or px + r > w - 1 or py + r > h - 1:
            raise SceneGeometryError(
                f"lever sweep radius {r:.1f}px around pivot ({px:.1f}, {py:.1f}) "
                f"leaves the {h}x{w} canvas"
            )

    @classmethod
    def default_for(cls, size: Tuple[int, int], *, lever_angle: float = 0.0,
                    ref_angle: float = 0.0, style: Style = Style.CG_FLAT,
                    seed: int = 0) -> "SceneSpec":
        """Proportional default geometry for a given canvas size.

        The plate is deliberately smaller than the lever sweep, so a rotated
        lever always crosses the plate boundary and overhangs the background.
        """
        h, w = size
        s = min(h, w)
        plate_side = round(0.44 * s)
        return cls(
            lever_angle=normalize_angle(lever_angle),
            ref_angle=normalize_angle(ref_angle),
            pipe_width=max(3.0, round(0.10 * s)),
            plate_rect=((w - plate_side) / 2.0, (h - plate_side) / 2.0,
                        float(plate_side), float(plate_side)),
            lever_length=round(0.36 * s),
            lever_width=max(3.0, round(0.11 * s)),
            style=style,
            seed=seed,
        )


@dataclass(frozen=True)
class LabelRule:
    """An image is anomalous when the lever strays more than tau degrees."""

    tau: float = 15.0

    def label(self, lever_angle: float, ref_angle: float = 0.0) -> Label:
        if angular_distance(lever_angle, ref_angle) > self.tau:
            return Label.ANOMALY
        return Label.NORMAL


@dataclass(frozen=True)
class AngleSampler:
    """Declarative angle distribution for dataset pools.

    kinds:
        fixed          - always params["angle"] (absolute degrees).
        normal_band    - ref + uniform(-max_offset, max_offset).
        anomaly_band   - ref +/- uniform(min_offset, max_offset), sign even.
    """

    kind: str
    params: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def fixed(cls, angle: float) -> "AngleSampler":
        return cls("fixed", {"angle": float(angle)})

    @classmethod
    def normal_band(cls, max_offset: float = 5.0) -> "AngleSampler":
        return cls("normal_band", {"max_offset": float(max_offset)})

    @classmethod
    def anomaly_band(cls, min_offset: float = 25.0, max_offset: float = 175.0) -> "AngleSampler":
        return cls("anomaly_band", {"min_offset": float(min_offset),
                                    "max_offset": float(max_offset)})

    def draw(self, rng: np.random.Generator, ref_angle: float) -> float:
        if self.kind == "fixed":
            return normalize_angle(self.params["angle"])
        if self.kind == "normal_band":
            m = self.params["max_offset"]
            return normalize_angle(ref_angle + rng.uniform(-m, m))
        if self.kind == "anomaly_band":
            lo, hi = self.params["min_offset"], self.params["max_offset"]
            offset = rng.uniform(lo, hi)
            sign = 1.0 if rng.uniform() < 0.5 else -1.0
            return normalize_angle(ref_angle + sign * offset)
        raise SceneError(f"unknown angle sampler kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "AngleSampler":
        d = dict(d)
        return cls(d.pop("kind"), {k: float(v) for k, v in d.items()})


def _box_alpha(qx: np.ndarray, qy: np.ndarray) -> np.ndarray:
    """Pixel coverage of a box from its local signed distances.

    qx, qy are |coord - center| - half_extent per axis. Coverage ramps
    linearly over one pixel across the boundary.
    """
    outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
    inside = np.minimum(np.maximum(qx, qy), 0.0)
    d = outside + inside
    return np.clip(0.5 - d, 0.0, 1.0)


def _rotated_box_alpha(x: np.ndarray, y: np.ndarray, cx: float, cy: float,
                       theta_deg: float, half_len: float, half_w: float) -> np.ndarray:
    """Coverage of a box centered at (cx, cy), rotated by theta (on-screen CCW)."""
    theta = math.radians(theta_deg)
    dx, dy = math.cos(theta), -math.sin(theta)
    rx, ry = x - cx, y - cy
    u = rx * dx + ry * dy
    v = -rx * dy + ry * dx
    return _box_alpha(np.abs(u) - half_len, np.abs(v) - half_w)


def _part_alphas(spec: SceneSpec, size: Tuple[int, int]):
    """Coverage maps for plate, pipe and lever. Geometry only, style-free."""
    h, w = size
    rows, cols = np.mgrid[0:h, 0:w]
    x = cols.astype(np.float64)
    y = rows.astype(np.float64)
    px, py = spec.pivot

    bx, by, bw, bh = spec.plate_rect
    plate = _box_alpha(np.abs(x - (bx + bw / 2)) - bw / 2,
                       np.abs(y - (by + bh / 2)) - bh / 2)

    pipe = _box_alpha(np.abs(x - px) - spec.pipe_width / 2,
                      np.abs(y - (h - 1) / 2) - (h - 1) / 2)

    # Lever frame: u along the axis, v across. Screen y grows downward, so
    # a counterclockwise on-screen angle uses -sin for the row component.
    head = _LEVER_HEAD_FRACTION * spec.lever_length
    tail = spec.lever_length - head
    offset = (head - tail) / 2.0
    theta = math.radians(spec.lever_angle)
    cx = px + offset * math.cos(theta)
    cy = py - offset * math.sin(theta)
    lever = _rotated_box_alpha(x, y, cx, cy, spec.lever_angle,
                               (head + tail) / 2.0, spec.lever_width / 2.0)
    return plate, pipe, lever


def _value_noise(rng: np.random.Generator, size: Tuple[int, int],
                 cell: int, amp: float) -> np.ndarray:
    """Smooth zero-mean noise: a coarse random grid upsampled bilinearly."""
    h, w = size
    gh = max(2, h // cell + 1)
    gw = max(2, w // cell + 1)
    grid = rng.uniform(-amp, amp, size=(gh, gw, 1))
    return resize(grid, h, w)[:, :, 0]


def _blend(img: np.ndarray, alpha: np.ndarray, color: np.ndarray) -> np.ndarray:
    return img * (1.0 - alpha[:, :, None]) + color[None, None, :] * alpha[:, :, None]


def render(spec: SceneSpec, size: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """Render a scene to an RGB image plus the exact lever mask.

    Returns:
        (image, lever_mask): (H, W, 3) float32 in [0, 1] and an (H, W) bool
        array marking lever pixels (coverage > 0.5). The mask depends only
        on geometry, never on style or seed.
    """
    h, w = size
    if h < 8 or w < 8:
        raise SceneError(f"canvas must be at least 8x8, got {h}x{w}")
    spec.check_fits(size)

    plate_a, pipe_a, lever_a = _part_alphas(spec, size)
    palette = {k: np.array(v, dtype=np.float64) for k, v in _PALETTE[spec.style].items()}
    rng = np.random.Generator(np.random.PCG64(spec.seed))

    if spec.style is Style.PSEUDO_REAL:
        for name in palette:
            palette[name] = np.clip(palette[name] + rng.uniform(-0.04, 0.04, size=3), 0.0, 1.0)

    img = np.tile(palette["background"], (h, w, 1))

    if spec.style is Style.PSEUDO_REAL:
        s = min(h, w)
        rows, cols = np.mgrid[0:h, 0:w]
        xs, ys = cols.astype(np.float64), rows.astype(np.float64)
        # Background clutter: low-contrast matte boxes behind the plate.
        for _ in range(int(rng.integers(2, 5))):
            cw = rng.uniform(0.08, 0.22) * s
            ch = rng.uniform(0.08, 0.22) * s
            cx = rng.uniform(0, w - 1)
            cy = rng.uniform(0, h - 1)
            gray = rng.uniform(0.36, 0.50)
            tint = np.clip(gray + rng.uniform(-0.02, 0.02, size=3), 0.0, 1.0)
            a = _box_alpha(np.abs(xs - cx) - cw / 2, np.abs(ys - cy) - ch / 2)
            img = _blend(img, a, tint)
        # Thin reddish cables at arbitrary orientations, kept clear of the
        # lever sweep so they never touch the lever's red segment.
        px, py = spec.pivot
        clear = spec.sweep_radius + 3.0
        for _ in range(int(rng.integers(1, 3))):
            half_len = rng.uniform(0.09, 0.14) * s
            angle = rng.uniform(0.0, 180.0)
            placed = False
            for _attempt in range(40):
                cx = rng.uniform(0, w - 1)
                cy = rng.uniform(0, h - 1)
                if math.hypot(cx - px, cy - py) >= clear + half_len:
                    placed = True
                    break
            if not placed:
                continue
            half_w = max(1.0, 0.022 * s)
            a = _rotated_box_alpha(xs, ys, cx, cy, angle, half_len, half_w)
            tint = np.clip(np.array(_CABLE_COLOR) + rng.uniform(-0.03, 0.03, size=3), 0.0, 1.0)
            img = _blend(img, a, tint)

    img = _blend(img, plate_a, palette["plate"])
    img = _blend(img, pipe_a, palette["pipe"])
    img = _blend(img, lever_a, palette["lever"])

    if spec.style is Style.PSEUDO_REAL:
        # Directional illumination over the whole scene, then fine texture.
        phi = rng.uniform(0.0, 2.0 * math.pi)
        strength = rng.uniform(0.02, 0.06)
        rows, cols = np.mgrid[0:h, 0:w]
        ramp = cols * math.cos(phi) + rows * math.sin(phi)
        ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-9) - 0.5
        illum = 1.0 + 2.0 * strength * ramp
        img = img * illum[:, :, None]
        s = min(h, w)
        noise = _value_noise(rng, size, cell=max(4, s // 8), amp=0.022)
        noise = noise + _value_noise(rng, size, cell=max(2, s // 16), amp=0.012)
        img = img + noise[:, :, None]

    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    lever_mask = lever_a > 0.5
    return img, lever_mask


def derive_item_seed(pool_seed: int, index: int) -> int:
    """Stable per-image seed from (pool seed, index)."""
    ss = np.random.SeedSequence([np.uint64(pool_seed) & np.uint64(2**63 - 1), index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class AngleRecord:
    """Ground-truth row persisted next to a manifest."""

    image_id: str
    lever_angle: float
    item_seed: int


def write_angles_csv(records: List[AngleRecord], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "lever_angle_deg", "item_seed"])
        for r in records:
            writer.writerow([r.image_id, repr(r.lever_angle), r.item_seed])


def read_angles_csv(path: Union[str, Path]) -> List[AngleRecord]:
    path = Path(path)
    out = []
    with path.open(newline="") as f:
        reader = csv.reader(f)
        next(reader)
        for row in reader:
            out.append(AngleRecord(row[0], float(row[1]), int(row[2])))
    return out


_DOMAIN_STYLE = {
    Domain.PSEUDOREAL_NORMAL: Style.PSEUDO_REAL,
    Domain.PSEUDOREAL_ANOMALY: Style.PSEUDO_REAL,
    Domain.CG_ANOMALY: Style.CG_FLAT,
}


def sample_dataset(
    n: int,
    domain: Domain,
    angle_sampler: AngleSampler,
    seed: int,
    *,
    template: SceneSpec,
    size: Tuple[int, int],
    out_dir: Union[str, Path],
    split: Split,
    rule: Optional[LabelRule] = None,
    id_prefix: Optional[str] = None,
) -> Tuple[DatasetManifest, List[AngleRecord]]:
    """Render a pool of n images for one domain and write them to out_dir.

    Every drawn angle must produce the label the domain demands; a sampler
    that violates this (for example a normal pool with an anomalous range)
    raises SamplerDomainError before anything is written.

    Returns the manifest plus per-image ground-truth angle records. Image
    files are named ``<image_id>.png`` inside out_dir.
    """
    if n < 1:
        raise SceneError(f"pool size must be >= 1, got {n}")
    if domain not in _DOMAIN_STYLE:
        raise SceneError(f"domain {domain.value} is not renderable (no source imagery)")
    rule = rule or LabelRule()
    style = _DOMAIN_STYLE[domain]
    expected = label_for_domain(domain)
    prefix = id_prefix or f"{domain.value}_{split.value}"
    out_dir = Path(out_dir)

    plans = []
    for i in range(n):
        item_seed = derive_item_seed(seed, i)
        rng = np.random.Generator(np.random.PCG64(item_seed))
        angle = angle_sampler.draw(rng, template.ref_angle)
        if rule.label(angle, template.ref_angle) is not expected:
            raise SamplerDomainError(
                f"sampler {angle_sampler.kind} drew angle {angle:.2f} deg which is "
                f"{rule.label(angle, template.ref_angle).value}, but domain "
                f"{domain.value} requires {expected.value}"
            )
        plans.append((f"{prefix}_{i:06d}", angle, item_seed))

    entries, records = [], []
    out_dir.mkdir(parents=True, exist_ok=True)
    for image_id, angle, item_seed in plans:
        spec = replace(template, lever_angle=angle, style=style, seed=item_seed)
        img, _ = render(spec, size)
        save_image(img, out_dir / f"{image_id}.png")
        entries.append(ManifestEntry.for_domain(image_id, domain, split))
        records.append(AngleRecord(image_id, angle, item_seed))
    return DatasetManifest(entries), records


# Segmentation threshold for the lever: how much the red channel must exceed
# the mean of green and blue.
_REDNESS_THRESHOLD = 0.15


def estimate_lever_angle(img: np.ndarray) -> float:
    """Estimate the lever orientation in degrees, modulo 180.

    Heuristic (documented contract): threshold the redness channel
    r - (g + b) / 2 at 0.15, keep the largest 8-connected component, and
    return the orientation of its principal axis in [0, 180).

    Raises:
        NoLeverError: grayscale input or no pixel passes the threshold.
    """
    if img.ndim != 3 or img.shape[2] != 3:
        raise NoLeverError("no lever detected: redness segmentation needs an RGB image")
    redness = img[:, :, 0] - 0.5 * (img[:, :, 1] + img[:, :, 2])
    mask = redness > _REDNESS_THRESHOLD
    if not mask.any():
        raise NoLeverError("no lever detected: no pixel passes the redness threshold")

    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, count + 1))
    component = labels == (int(np.argmax(sizes)) + 1)

    rows, cols = np.nonzero(component)
    # Math convention: x right, y up, so rows are negated.
    xs = cols.astype(np.float64)
    ys = -rows.astype(np.float64)
    xs -= xs.mean()
    ys -= ys.mean()
    mu20 = np.mean(xs * xs)
    mu02 = np.mean(ys * ys)
    mu11 = np.mean(xs * ys)
    theta = 0.5 * math.atan2(2.0 * mu11, mu20 - mu02)
    return float(math.degrees(theta) % 180.0)

"""Inference side of the translation model: turn rendered anomaly images
into target-styled anomaly images, with ground-truth angles carried along."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import torch

from ..imaging import GeoTransform, apply_transform, load_image, save_image
from ..manifest import DatasetManifest, Domain, ManifestEntry, Split
from ..scene import AngleRecord, normalize_angle
from .networks import ResnetGenerator, generate_unit

__all__ = ["ConvertError", "convert"]


class ConvertError(Exception):
    """Conversion cannot run: missing weights or an over-large request."""


# Second pass over the source pool flips vertically before converting. A
# vertical flip negates the lever angle, which preserves anomaly status for
# any symmetric anomaly band around the reference.
_AUGMENT_PASSES = [None, GeoTransform.VFLIP]


def _augmented_angle(angle: float, t) -> float:
    if t is None:
        return angle
    if t is GeoTransform.VFLIP:
        return normalize_angle(-angle)
    raise ConvertError(f"unsupported augmentation transform {t}")


def convert(
    gen: ResnetGenerator,
    source_manifest: DatasetManifest,
    source_angles: List[AngleRecord],
    images_root: Union[str, Path],
    n_out: int,
    out_dir: Union[str, Path],
    batch_size: int = 16,
    id_prefix: str = "converted_anomaly",
) -> Tuple[DatasetManifest, List[AngleRecord]]:
    """Translate source anomaly images and write n_out PNGs to out_dir.

    Sources are consumed in manifest order; when n_out exceeds the pool, a
    second pass converts vertically flipped sources. Outputs keep the input
    resolution and land in [0, 1]. Deterministic: the generator runs in eval
    mode with no sampling.

    Returns the converted manifest (domain converted_anomaly, split train)
    and angle records mapping each output to its true source angle.
    """
    if gen is None:
        raise ConvertError("no generator weights: train or load a checkpoint first")
    if len(source_manifest) == 0:
        raise ConvertError("source manifest is empty")
    if n_out < 1:
        raise ConvertError(f"n_out must be >= 1, got {n_out}")
    max_out = len(source_manifest) * len(_AUGMENT_PASSES)
    if n_out > max_out:
        raise ConvertError(
            f"n_out={n_out} exceeds {max_out} "
            f"({len(source_manifest)} sources x {len(_AUGMENT_PASSES)} passes)"
        )
    angle_by_id: Dict[str, float] = {r.image_id: r.lever_angle for r in source_angles}
    missing = [e.image_id for e in source_manifest if e.image_id not in angle_by_id]
    if missing:
        raise ConvertError(f"missing angle records for {len(missing)} sources, e.g. {missing[0]}")

    root = Path(images_root)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = []  # (out_index, source entry, augment transform)
    for k in range(n_out):
        pass_idx, src_idx = divmod(k, len(source_manifest))
        jobs.append((k, source_manifest.entries[src_idx], _AUGMENT_PASSES[pass_idx]))

    gen.eval()
    entries, records = [], []
    for start in range(0, len(jobs), batch_size):
        chunk = jobs[start:start + batch_size]
        batch = []
        for _, entry, t in chunk:
            img = load_image(root / f"{entry.image_id}.png")
            if t is not None:
                img = apply_transform(img, t)
            batch.append(img)
        tensor = torch.from_numpy(np.stack(batch).transpose(0, 3, 1, 2).copy())
        with torch.no_grad():
            out = generate_unit(gen, tensor)
        out_np = out.numpy().transpose(0, 2, 3, 1)
        for (k, entry, t), converted in zip(chunk, out_np):
            image_id = f"{id_prefix}_{k:06d}"
            save_image(np.ascontiguousarray(converted), out_dir / f"{image_id}.png")
            entries.append(ManifestEntry.for_domain(image_id, Domain.CONVERTED_ANOMALY, Split.TRAIN))
            records.append(
                AngleRecord(image_id, _augmented_angle(angle_by_id[entry.image_id], t), 0)
            )
    return DatasetManifest(entries), records

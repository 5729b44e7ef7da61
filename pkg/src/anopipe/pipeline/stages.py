"""Stage implementations and the stage runner.

Stages run sequentially; each checks its upstream artifacts through the run
record, refuses to overwrite its own completed outputs without force, and
appends an entry with artifact paths and content hashes when done. Naming,
on-disk layout and sub-seed labels are all fixed here so reruns with the
same config and seed reproduce identical artifacts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import torch

from .. import classifier as clf
from ..explain import focus_fraction, gradcam, overlay
from ..gcgan import convert as gcgan_convert
from ..gcgan import load_generator_checkpoint, train as gcgan_train
from ..imaging import histogram_distance, load_image, mean_channel_histogram, save_image
from ..manifest import DatasetManifest, Domain, Label, Split
from ..scene import (
    NoLeverError,
    angle_diff_mod180,
    estimate_lever_angle,
    read_angles_csv,
    render,
    sample_dataset,
    write_angles_csv,
)
from .config import PipelineConfig, PipelineError, PreconditionError
from .record import RunRecord, file_sha256
from .report import render_report

STAGE_GEN_DATA = "gen-data"
STAGE_TRAIN_GCGAN = "train-gcgan"
STAGE_CONVERT = "convert"
STAGE_ASSEMBLE = "assemble"
STAGE_TRAIN_DETECTOR = "train-detector"
STAGE_EVALUATE = "evaluate"
STAGE_EXPLAIN = "explain"
STAGE_REPORT = "report"

POOLS = {
    "pseudoreal_normal_train": (Domain.PSEUDOREAL_NORMAL, Split.TRAIN, "train_normal", "normal"),
    "pseudoreal_normal_test": (Domain.PSEUDOREAL_NORMAL, Split.TEST, "test_normal", "normal"),
    "cg_anomaly": (Domain.CG_ANOMALY, Split.TRAIN, "cg_pool", "anomaly"),
    "pseudoreal_anomaly_test": (Domain.PSEUDOREAL_ANOMALY, Split.TEST, "test_anomaly", "anomaly"),
}

HIST_BINS = 32
VARIANTS = ("cg", "gcgan")


def _config_digest(cfg: PipelineConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise PreconditionError(f"missing upstream artifact: {what} ({path})")
    return path


def _refuse_existing(path: Path, force: bool, stage: str) -> None:
    if path.exists() and not force:
        raise PreconditionError(
            f"{stage}: output {path} already exists; rerun with --force to overwrite"
        )


def _images_dir(root: Path) -> Path:
    return root / "data" / "images"


def _manifest_path(root: Path, pool: str) -> Path:
    return root / "data" / "manifests" / f"{pool}.csv"


def _angles_path(root: Path, pool: str) -> Path:
    return root / "data" / "manifests" / f"{pool}.angles.csv"


# ----------------------------------------------------------------- gen-data

def stage_gen_data(cfg: PipelineConfig, root: Path, record: RunRecord, force: bool):
    images = _images_dir(root)
    if images.exists() and any(images.iterdir()) and not force:
        raise PreconditionError(
            f"{STAGE_GEN_DATA}: output {images} is not empty; "
            "rerun with --force to overwrite"
        )
    artifacts, hashes = {}, {}
    digest = hashlib.sha256()
    for pool, (domain, split, size_field, kind) in POOLS.items():
        n = getattr(cfg.sizes, size_field)
        sampler = cfg.scene.normal_sampler() if kind == "normal" else cfg.scene.anomaly_sampler()
        manifest, records = sample_dataset(
            n, domain, sampler, cfg.stage_seed(f"gen-data/{pool}"),
            template=cfg.scene.template(), size=cfg.scene.size,
            out_dir=images, split=split, rule=cfg.scene.rule(), id_prefix=pool,
        )
        mpath, apath = _manifest_path(root, pool), _angles_path(root, pool)
        manifest.to_csv(mpath)
        write_angles_csv(records, apath)
        artifacts[f"manifest_{pool}"] = str(mpath.relative_to(root))
        artifacts[f"angles_{pool}"] = str(apath.relative_to(root))
        hashes[str(mpath.relative_to(root))] = file_sha256(mpath)
        hashes[str(apath.relative_to(root))] = file_sha256(apath)
        for entry in manifest:
            digest.update((images / f"{entry.image_id}.png").read_bytes())
    artifacts["images_dir"] = str(images.relative_to(root))
    return artifacts, hashes, {"images_digest": digest.hexdigest()}


# -------------------------------------------------------------- train-gcgan

def stage_train_gcgan(cfg: PipelineConfig, root: Path, record: RunRecord, force: bool):
    out_dir = root / "gcgan"
    _refuse_existing(out_dir / "final.pt", force, STAGE_TRAIN_GCGAN)
    source = DatasetManifest.from_csv(
        _require(_manifest_path(root, "cg_anomaly"), "cg_anomaly manifest (run gen-data)"))
    target = DatasetManifest.from_csv(
        _require(_manifest_path(root, "pseudoreal_normal_train"),
                 "pseudoreal_normal_train manifest (run gen-data)"))
    result = gcgan_train(cfg.gcgan, source, target, _images_dir(root), out_dir, log_every=10)
    artifacts = {
        "final_checkpoint": str((out_dir / "final.pt").relative_to(root)),
        "best_checkpoint": str(result.best_checkpoint.relative_to(root)),
        "loss_log": str((out_dir / "loss_log.csv").relative_to(root)),
    }
    hashes = {artifacts["loss_log"]: file_sha256(out_dir / "loss_log.csv")}
    last = result.state.history[-1]
    details = {
        "best_epoch": result.best_epoch,
        "final_losses": {"adv_G": last.adv_G, "adv_D": last.adv_D,
                         "gc": last.gc, "idt": last.idt},
    }
    return artifacts, hashes, details


# ------------------------------------------------------------------ convert

def stage_convert(cfg: PipelineConfig, root: Path, record: RunRecord, force: bool):
    out_dir = root / "converted"
    _refuse_existing(out_dir / "manifest.csv", force, STAGE_CONVERT)
    gan_entry = record.latest(STAGE_TRAIN_GCGAN)
    if gan_entry is None:
        raise PreconditionError("missing upstream stage: train-gcgan has not run")
    best = _require(root / gan_entry["artifacts"]["best_checkpoint"],
                    "translator checkpoint (run train-gcgan)")
    source = DatasetManifest.from_csv(
        _require(_manifest_path(root, "cg_anomaly"), "cg_anomaly manifest (run gen-data)"))
    angles = read_angles_csv(
        _require(_angles_path(root, "cg_anomaly"), "cg_anomaly angles (run gen-data)"))

    gen, _, _ = load_generator_checkpoint(best)
    manifest, records = gcgan_convert(
        gen, source, angles, _images_dir(root), cfg.sizes.converted_pool,
        out_dir / "images",
    )
    manifest.to_csv(out_dir / "manifest.csv")
    write_angles_csv(records, out_dir / "angles.csv")

    geometry = _geometry_stats(out_dir / "images", records)
    with (out_dir / "geometry_stats.json").open("w") as f:
        json.dump(geometry, f, indent=2, sort_keys=True)

    gap = _domain_gap(root, manifest, source, out_dir / "images")
    with (out_dir / "domain_gap.json").open("w") as f:
        json.dump(gap, f, indent=2, sort_keys=True)

    artifacts = {
        "manifest": str((out_dir / "manifest.csv").relative_to(root)),
        "angles": str((out_dir / "angles.csv").relative_to(root)),
        "images_dir": str((out_dir / "images").relative_to(root)),
        "geometry_stats": str((out_dir / "geometry_stats.json").relative_to(root)),
        "domain_gap": str((out_dir / "domain_gap.json").relative_to(root)),
    }
    hashes = {rel: file_sha256(root / rel) for rel in artifacts.values()
              if not rel.endswith("images")}
    return artifacts, hashes, {"n_converted": len(manifest)}


def _geometry_stats(images_dir: Path, records) -> dict:
    errors, misses = [], 0
    for rec in records:
        img = load_image(images_dir / f"{rec.image_id}.png")
        try:
            est = estimate_lever_angle(img)
            errors.append(angle_diff_mod180(est, rec.lever_angle))
        except NoLeverError:
            misses += 1
    errors_arr = np.asarray(errors)
    n = len(records)
    within = float(np.sum(errors_arr <= 10.0)) / n if n else 0.0
    return {
        "n": n,
        "n_no_lever": misses,
        "fraction_within_10deg": within,
        "median_error_deg": float(np.median(errors_arr)) if len(errors_arr) else None,
        "max_error_deg": float(np.max(errors_arr)) if len(errors_arr) else None,
    }


def _domain_gap(root: Path, converted: DatasetManifest, cg: DatasetManifest,
                conv_images: Path) -> dict:
    normal_manifest = DatasetManifest.from_csv(_manifest_path(root, "pseudoreal_normal_train"))
    images = _images_dir(root)
    ref = mean_channel_histogram(
        [load_image(images / f"{e.image_id}.png") for e in normal_manifest], HIST_BINS)
    d_conv = float(np.mean([
        histogram_distance(load_image(conv_images / f"{e.image_id}.png"), ref)
        for e in converted
    ]))
    d_cg = float(np.mean([
        histogram_distance(load_image(images / f"{e.image_id}.png"), ref)
        for e in cg
    ]))
    return {
        "bins": HIST_BINS,
        "reference": "pseudoreal_normal_train",
        "mean_distance_converted": d_conv,
        "mean_distance_raw_cg": d_cg,
    }


# ----------------------------------------------------------------- assemble

def assemble_training_sets(pools: Dict[str, DatasetManifest], train_anomaly: int,
                           train_normal: int) -> Dict[str, DatasetManifest]:
    """Compose the two training manifests and the shared test manifest.

    Pure manifest algebra: the cg variant trains on pseudo-real normals plus
    raw rendered anomalies, the gcgan variant on the same normals plus
    translated anomalies; both test on held-out pseudo-real pools.
    """
    for name in ("pseudoreal_normal_train", "pseudoreal_normal_test",
                 "cg_anomaly", "converted_anomaly", "pseudoreal_anomaly_test"):
        if name not in pools:
            raise PreconditionError(f"assemble: missing pool manifest {name}")
    normals = pools["pseudoreal_normal_train"].entries
    if len(normals) < train_normal:
        raise PreconditionError(
            f"assemble: pool pseudoreal_normal_train has {len(normals)} entries, "
            f"need {train_normal}")
    for pool_name in ("cg_anomaly", "converted_anomaly"):
        if len(pools[pool_name]) < train_anomaly:
            raise PreconditionError(
                f"assemble: pool {pool_name} has {len(pools[pool_name])} entries, "
                f"need {train_anomaly}")
    normals = normals[:train_normal]
    return {
        "train_cg": DatasetManifest(normals + pools["cg_anomaly"].entries[:train_anomaly]),
        "train_gcgan": DatasetManifest(
            normals + pools["converted_anomaly"].entries[:train_anomaly]),
        "test": DatasetManifest(
            pools["pseudoreal_normal_test"].entries + pools["pseudoreal_anomaly_test"].entries),
    }


def stage_assemble(cfg: PipelineConfig, root: Path, record: RunRecord, force: bool):
    out_dir = root / "manifests"
    _refuse_existing(out_dir / "test.csv", force, STAGE_ASSEMBLE)
    pools = {}
    for pool in POOLS:
        pools[pool] = DatasetManifest.from_csv(
            _require(_manifest_path(root, pool), f"{pool} manifest (run gen-data)"))
    pools["converted_anomaly"] = DatasetManifest.from_csv(
        _require(root / "converted" / "manifest.csv", "converted manifest (run convert)"))

    sets = assemble_training_sets(pools, cfg.sizes.train_anomaly, cfg.sizes.train_normal)
    _check_provenance(root, sets)

    artifacts, hashes = {}, {}
    for name, manifest in sets.items():
        path = out_dir / f"{name}.csv"
        manifest.to_csv(path)
        rel = str(path.relative_to(root))
        artifacts[name] = rel
        hashes[rel] = file_sha256(path)
    details = {name: len(m) for name, m in sets.items()}
    return artifacts, hashes, details


def _image_root_for(root: Path, domain: Domain) -> Path:
    if domain is Domain.CONVERTED_ANOMALY:
        return root / "converted" / "images"
    return _images_dir(root)


def _check_provenance(root: Path, sets: Dict[str, DatasetManifest]) -> None:
    """Every referenced image must exist under the directory of its domain."""
    for name, manifest in sets.items():
        for entry in manifest:
            path = _image_root_for(root, entry.domain) / f"{entry.image_id}.png"
            if not path.exists():
                raise PreconditionError(
                    f"assemble: {name} references missing image {path}")


class _SplitRootLoader:
    """Resolves image ids to their generation directory when a manifest
    mixes rendered and converted domains."""

    def __init__(self, root: Path, manifest: DatasetManifest):
        self.paths = {
            e.image_id: _image_root_for(root, e.domain) / f"{e.image_id}.png"
            for e in manifest
        }


def _load_manifest_images(root: Path, manifest: DatasetManifest):
    loader = _SplitRootLoader(root, manifest)
    return [load_image(loader.paths[e.image_id]) for e in manifest]


# ----------------------------------------------------------- train-detector

def detector_dir(root: Path, variant: str) -> Path:
    return root / f"detector_{variant}"


def stage_train_detector(cfg: PipelineConfig, root: Path, record: RunRecord,
                         force: bool, variant: str):
    if variant not in VARIANTS:
        raise PreconditionError(f"unknown detector variant {variant!r}; choose cg or gcgan")
    out_dir = detector_dir(root, variant)
    _refuse_existing(out_dir / "checkpoint.pt", force, f"{STAGE_TRAIN_DETECTOR}-{variant}")
    manifest = DatasetManifest.from_csv(
        _require(root / "manifests" / f"train_{variant}.csv",
                 f"train_{variant} manifest (run assemble)"))

    model = clf.build(cfg.classifier)
    imgs = _load_manifest_images(root, manifest)
    curve = _train_on_arrays(model, manifest, imgs, cfg.classifier)
    out_dir.mkdir(parents=True, exist_ok=True)
    clf.save_classifier(model, out_dir / "checkpoint.pt")
    curve_path = out_dir / "loss_curve.csv"
    with curve_path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(curve):
            writer.writerow([epoch, repr(loss)])
    artifacts = {
        "checkpoint": str((out_dir / "checkpoint.pt").relative_to(root)),
        "loss_curve": str(curve_path.relative_to(root)),
    }
    hashes = {artifacts["loss_curve"]: file_sha256(curve_path)}
    details = {"classifier_config": cfg.classifier.to_dict(), "final_loss": curve[-1]}
    return artifacts, hashes, details


def _train_on_arrays(model, manifest: DatasetManifest, imgs: List[np.ndarray],
                     ccfg: clf.ClassifierConfig) -> List[float]:
    """classifier trainer with images already resolved across image roots."""
    labels = {e.label for e in manifest}
    if len(manifest) == 0 or len(labels) < 2:
        raise PreconditionError("training manifest must contain both classes")
    return clf.train_arrays(model, imgs,
                            [1 if e.label is Label.ANOMALY else 0 for e in manifest], ccfg)


# ----------------------------------------------------------------- evaluate

def stage_evaluate(cfg: PipelineConfig, root: Path, record: RunRecord, force: bool):
    out_dir = root / "eval"
    _refuse_existing(out_dir / "comparison.json", force, STAGE_EVALUATE)
    test_manifest = DatasetManifest.from_csv(
        _require(root / "manifests" / "test.csv", "test manifest (run assemble)"))

    configs = {}
    for variant in VARIANTS:
        entry = record.latest(f"{STAGE_TRAIN_DETECTOR}-{variant}")
        if entry is None:
            raise PreconditionError(
                f"missing upstream stage: train-detector {variant} has not run")
        configs[variant] = entry["details"]["classifier_config"]
    if configs["cg"] != configs["gcgan"]:
        raise PipelineError(
            "config parity violated: detector variants were trained with different configs")

    imgs = _load_manifest_images(root, test_manifest)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts, hashes, comparison = {}, {}, {"n_test": len(test_manifest)}
    for variant in VARIANTS:
        model = clf.load_classifier(
            _require(detector_dir(root, variant) / "checkpoint.pt",
                     f"detector checkpoint (run train-detector {variant})"))
        metrics = _evaluate_on_arrays(model, test_manifest, imgs)
        mpath = out_dir / f"metrics_{variant}.json"
        with mpath.open("w") as f:
            json.dump(metrics, f, indent=2, sort_keys=True)
        spath = out_dir / f"scores_{variant}.csv"
        with spath.open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["image_id", "label", "p_anomaly"])
            for row in metrics["scores"]:
                writer.writerow([row["image_id"], row["label"], repr(row["p_anomaly"])])
        ppath = out_dir / f"hist_{variant}.png"
        _plot_score_histograms(metrics, variant, ppath)
        artifacts[f"metrics_{variant}"] = str(mpath.relative_to(root))
        artifacts[f"scores_{variant}"] = str(spath.relative_to(root))
        artifacts[f"hist_{variant}"] = str(ppath.relative_to(root))
        hashes[str(mpath.relative_to(root))] = file_sha256(mpath)
        hashes[str(spath.relative_to(root))] = file_sha256(spath)
        comparison[f"auc_{variant}"] = metrics["roc_auc"]
        comparison[f"confusion_{variant}"] = metrics["confusion_at_0.5"]
    comparison["auc_gap"] = comparison["auc_gcgan"] - comparison["auc_cg"]
    cpath = out_dir / "comparison.json"
    with cpath.open("w") as f:
        json.dump(comparison, f, indent=2, sort_keys=True)
    artifacts["comparison"] = str(cpath.relative_to(root))
    hashes[artifacts["comparison"]] = file_sha256(cpath)
    return artifacts, hashes, {"auc_cg": comparison["auc_cg"],
                               "auc_gcgan": comparison["auc_gcgan"]}


def _evaluate_on_arrays(model, manifest: DatasetManifest, imgs) -> dict:
    labels = np.array([1 if e.label is Label.ANOMALY else 0 for e in manifest])
    scores = [s.p_anomaly for s in clf.predict_batch(model, imgs)]
    edges = np.linspace(0.0, 1.0, 21)
    arr = np.asarray(scores)
    metrics = {
        "n": len(scores),
        "scores": [
            {"image_id": e.image_id, "label": e.label.value, "p_anomaly": s}
            for e, s in zip(manifest, scores)
        ],
        "confusion_at_0.5": clf.confusion_at(scores, labels),
        "roc_auc": clf.roc_auc(scores, labels),
        "score_histograms": {
            "bin_edges": edges.tolist(),
            "normal": np.histogram(arr[labels == 0], bins=edges)[0].tolist(),
            "anomaly": np.histogram(arr[labels == 1], bins=edges)[0].tolist(),
        },
    }
    return metrics


def _plot_score_histograms(metrics: dict, variant: str, path: Path) -> None:
    hist = metrics["score_histograms"]
    edges = np.asarray(hist["bin_edges"])
    centers = (edges[:-1] + edges[1:]) / 2
    width = edges[1] - edges[0]
    fig, ax = plt.subplots(figsize=(5, 3.2), dpi=100)
    ax.bar(centers - width / 4, hist["normal"], width / 2, label="normal", color="#3b7dd8")
    ax.bar(centers + width / 4, hist["anomaly"], width / 2, label="anomaly", color="#d84b3b")
    ax.set_xlabel("anomaly score (0: normal, 1: anomaly)")
    ax.set_ylabel("count")
    ax.set_title(f"{variant}-trained detector, AUC={metrics['roc_auc']:.3f}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": "anopipe"})
    plt.close(fig)


# ------------------------------------------------------------------ explain

def stage_explain(cfg: PipelineConfig, root: Path, record: RunRecord, force: bool):
    out_dir = root / "explain"
    _refuse_existing(out_dir / "focus.json", force, STAGE_EXPLAIN)
    test_manifest = DatasetManifest.from_csv(
        _require(root / "manifests" / "test.csv", "test manifest (run assemble)"))
    angles = {r.image_id: r for r in read_angles_csv(
        _require(_angles_path(root, "pseudoreal_anomaly_test"),
                 "pseudoreal_anomaly_test angles (run gen-data)"))}
    for variant in VARIANTS:
        _require(root / "eval" / f"metrics_{variant}.json",
                 f"evaluation metrics for {variant} (run evaluate)")

    anomalies = [e for e in test_manifest if e.label is Label.ANOMALY][:cfg.explain.n_images]
    if not anomalies:
        raise PreconditionError("explain: test manifest contains no anomalies")
    template = cfg.scene.template()
    out_dir.mkdir(parents=True, exist_ok=True)

    focus = {"lever_area_fraction": None, "variants": {}}
    area_fracs = []
    models = {
        v: clf.load_classifier(
            _require(detector_dir(root, v) / "checkpoint.pt",
                     f"detector checkpoint (run train-detector {v})"))
        for v in VARIANTS
    }
    artifacts, hashes = {}, {}
    per_variant = {v: [] for v in VARIANTS}
    for entry in anomalies:
        rec = angles.get(entry.image_id)
        if rec is None:
            raise PreconditionError(f"explain: no angle record for {entry.image_id}")
        img = load_image(_images_dir(root) / f"{entry.image_id}.png")
        spec = replace(template, lever_angle=rec.lever_angle, seed=rec.item_seed)
        _, lever_mask = render(spec, cfg.scene.size)
        area_fracs.append(float(lever_mask.mean()))
        for variant in VARIANTS:
            sal = gradcam(models[variant], img, Label.ANOMALY, image_id=entry.image_id)
            blended = overlay(img, sal.values, cfg.explain.overlay_alpha)
            opath = out_dir / f"{entry.image_id}.{variant}.gradcam.png"
            save_image(blended, opath)
            ff = focus_fraction(sal.values, lever_mask)
            per_variant[variant].append({"image_id": entry.image_id, "focus_fraction": ff})
    for variant in VARIANTS:
        vals = [row["focus_fraction"] for row in per_variant[variant]]
        focus["variants"][variant] = {
            "per_image": per_variant[variant],
            "median_focus_fraction": float(np.median(vals)),
            "mean_focus_fraction": float(np.mean(vals)),
        }
    focus["lever_area_fraction"] = float(np.mean(area_fracs))
    focus["n_images"] = len(anomalies)

    fpath = out_dir / "focus.json"
    with fpath.open("w") as f:
        json.dump(focus, f, indent=2, sort_keys=True)
    artifacts["focus"] = str(fpath.relative_to(root))
    hashes[artifacts["focus"]] = file_sha256(fpath)

    # Append the focus numbers to each variant's evaluation JSON.
    for variant in VARIANTS:
        mpath = root / "eval" / f"metrics_{variant}.json"
        with mpath.open() as f:
            metrics = json.load(f)
        metrics["focus_fraction"] = focus["variants"][variant]
        metrics["lever_area_fraction"] = focus["lever_area_fraction"]
        with mpath.open("w") as f:
            json.dump(metrics, f, indent=2, sort_keys=True)
        artifacts[f"metrics_{variant}"] = str(mpath.relative_to(root))
        hashes[str(mpath.relative_to(root))] = file_sha256(mpath)
    artifacts["overlays_dir"] = str(out_dir.relative_to(root))
    return artifacts, hashes, {
        "median_focus_cg": focus["variants"]["cg"]["median_focus_fraction"],
        "median_focus_gcgan": focus["variants"]["gcgan"]["median_focus_fraction"],
    }


# ------------------------------------------------------------------- report

def stage_report(cfg: PipelineConfig, root: Path, record: RunRecord, force: bool):
    out_dir = root / "report"
    _refuse_existing(out_dir / "report.html", force, STAGE_REPORT)
    missing = []
    needed = {
        "converted/domain_gap.json": "convert",
        "converted/geometry_stats.json": "convert",
        "eval/comparison.json": "evaluate",
        "eval/metrics_cg.json": "evaluate",
        "eval/metrics_gcgan.json": "evaluate",
        "explain/focus.json": "explain",
    }
    for rel, stage in needed.items():
        if not (root / rel).exists():
            missing.append(f"{rel} (run {stage})")
    if missing:
        raise PreconditionError("report: missing stages/artifacts: " + "; ".join(missing))
    html = render_report(cfg, root)
    out_dir.mkdir(parents=True, exist_ok=True)
    rpath = out_dir / "report.html"
    rpath.write_text(html)
    rel = str(rpath.relative_to(root))
    return {"report": rel}, {rel: file_sha256(rpath)}, {}


# ------------------------------------------------------------------- runner

_STAGE_FUNCS = {
    STAGE_GEN_DATA: stage_gen_data,
    STAGE_TRAIN_GCGAN: stage_train_gcgan,
    STAGE_CONVERT: stage_convert,
    STAGE_ASSEMBLE: stage_assemble,
    STAGE_EVALUATE: stage_evaluate,
    STAGE_EXPLAIN: stage_explain,
    STAGE_REPORT: stage_report,
}


def run_stage(stage: str, cfg: PipelineConfig, force: bool = False,
              variant: str = None) -> dict:
    """Execute one stage against the config's output root and log it."""
    root = cfg.resolved_output_root()
    root.mkdir(parents=True, exist_ok=True)
    record = RunRecord.load(root)
    started = time.time()
    if stage == STAGE_TRAIN_DETECTOR:
        if variant is None:
            raise PreconditionError("train-detector needs a variant: cg or gcgan")
        artifacts, hashes, details = stage_train_detector(cfg, root, record, force, variant)
        stage_name = f"{STAGE_TRAIN_DETECTOR}-{variant}"
    elif stage in _STAGE_FUNCS:
        artifacts, hashes, details = _STAGE_FUNCS[stage](cfg, root, record, force)
        stage_name = stage
    else:
        raise PreconditionError(f"unknown stage {stage!r}")
    return record.append(
        stage_name,
        _config_digest(cfg),
        wall_clock_s=time.time() - started,
        artifacts=artifacts,
        hashes=hashes,
        details=details,
    )

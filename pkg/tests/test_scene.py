import math
from dataclasses import replace

import numpy as np
import pytest

from anopipe.manifest import Domain, Label, Split
from anopipe.scene import (
    AngleRecord,
    AngleSampler,
    LabelRule,
    NoLeverError,
    SamplerDomainError,
    SceneError,
    SceneGeometryError,
    SceneSpec,
    Style,
    angle_diff_mod180,
    angular_distance,
    derive_item_seed,
    estimate_lever_angle,
    normalize_angle,
    read_angles_csv,
    render,
    sample_dataset,
    write_angles_csv,
)

SIZE = (64, 64)


def spec_at(angle, style=Style.CG_FLAT, seed=0):
    return SceneSpec.default_for(SIZE, lever_angle=angle, style=style, seed=seed)


# ------------------------------------------------------------------- angles

def test_angle_helpers():
    assert normalize_angle(190.0) == -170.0
    assert normalize_angle(-180.0) == -180.0
    assert angular_distance(170.0, -170.0) == pytest.approx(20.0)
    assert angle_diff_mod180(5.0, 175.0) == pytest.approx(10.0)


def test_label_rule_threshold():
    rule = LabelRule(tau=15.0)
    assert rule.label(10.0) is Label.NORMAL
    assert rule.label(-14.9) is Label.NORMAL
    assert rule.label(15.1) is Label.ANOMALY
    assert rule.label(-170.0) is Label.ANOMALY
    assert rule.label(20.0, ref_angle=10.0) is Label.NORMAL


# ------------------------------------------------------------------- render

def test_render_deterministic():
    spec = spec_at(37.0, Style.PSEUDO_REAL, seed=42)
    a, ma = render(spec, SIZE)
    b, mb = render(spec, SIZE)
    assert np.array_equal(a, b)
    assert np.array_equal(ma, mb)


def test_mask_identical_across_styles():
    flat = spec_at(-58.0, Style.CG_FLAT, seed=5)
    textured = replace(flat, style=Style.PSEUDO_REAL)
    _, mask_flat = render(flat, SIZE)
    _, mask_tex = render(textured, SIZE)
    assert np.array_equal(mask_flat, mask_tex)


def test_cg_flat_parts_are_constant_colors():
    img, _ = render(spec_at(0.0), SIZE)
    # flat style: few distinct colors (background, plate, pipe, lever + edges)
    interior_colors = {tuple(px) for px in img.reshape(-1, 3)}
    # edge antialiasing adds blends, but the bulk must be exactly 4 colors
    counts = {}
    for px in img.reshape(-1, 3):
        counts[tuple(px)] = counts.get(tuple(px), 0) + 1
    top4 = sorted(counts.values(), reverse=True)[:4]
    assert sum(top4) / img.shape[0] / img.shape[1] > 0.9
    assert len(interior_colors) < 200


def oracle_lever_mask(spec, size):
    """Analytic point-in-rotated-rectangle test, independent of the SDF path."""
    h, w = size
    px, py = spec.pivot
    theta = math.radians(spec.lever_angle)
    head = 0.72 * spec.lever_length
    tail = spec.lever_length - head
    mask = np.zeros((h, w), dtype=bool)
    for r in range(h):
        for c in range(w):
            x, y = c - px, r - py
            u = x * math.cos(theta) + y * (-math.sin(theta))
            v = -x * (-math.sin(theta)) + y * math.cos(theta)
            mask[r, c] = (-tail <= u <= head) and (abs(v) <= spec.lever_width / 2)
    return mask


@pytest.mark.parametrize("angle", [0.0, 90.0, 33.0, -120.0])
def test_lever_mask_matches_analytic_oracle(angle):
    spec = spec_at(angle)
    _, mask = render(spec, SIZE)
    oracle = oracle_lever_mask(spec, SIZE)
    # only boundary pixels (coverage near 0.5) may disagree
    disagree = mask ^ oracle
    assert disagree.sum() <= 0.15 * oracle.sum()
    interior = oracle & ~disagree
    assert interior.sum() > 0.8 * oracle.sum()


def test_mask_rotation_relates_angles():
    spec0 = spec_at(0.0)
    spec90 = spec_at(90.0)
    _, m0 = render(spec0, SIZE)
    _, m90 = render(spec90, SIZE)
    px, py = spec0.pivot
    # rotate the angle-90 mask coordinates back by 90 degrees about the pivot
    rows, cols = np.nonzero(m90)
    x, y = cols - px, rows - py
    # on-screen CCW rotation by -90: (x, y) -> (-y, x) with y down
    xr, yr = -y, x
    remapped = np.zeros_like(m0)
    rr = np.round(yr + py).astype(int)
    cc = np.round(xr + px).astype(int)
    keep = (rr >= 0) & (rr < SIZE[0]) & (cc >= 0) & (cc < SIZE[1])
    remapped[rr[keep], cc[keep]] = True
    overlap = (remapped & m0).sum()
    assert overlap >= 0.9 * min(m0.sum(), m90.sum())


def test_lever_out_of_canvas_raises():
    spec = replace(spec_at(0.0), lever_length=120.0)
    with pytest.raises(SceneGeometryError):
        render(spec, SIZE)


def test_bad_spec_values():
    with pytest.raises(SceneError):
        SceneSpec(lever_angle=180.0)
    with pytest.raises(SceneError):
        SceneSpec(lever_angle=0.0, lever_width=0.0)


# ---------------------------------------------------------------- estimator

def test_estimator_on_known_angles():
    assert angle_diff_mod180(estimate_lever_angle(render(spec_at(30.0), SIZE)[0]), 30.0) <= 2.0
    assert angle_diff_mod180(estimate_lever_angle(render(spec_at(0.0), SIZE)[0]), 0.0) <= 2.0


def test_estimator_mirror_symmetry():
    from anopipe.imaging import GeoTransform, apply_transform

    img, _ = render(spec_at(25.0), SIZE)
    theta = estimate_lever_angle(img)
    mirrored = estimate_lever_angle(apply_transform(img, GeoTransform.HFLIP))
    assert angle_diff_mod180(mirrored, (180.0 - theta) % 180.0) <= 1.0


def test_estimator_no_lever():
    blank = np.full((32, 32, 3), 0.5, dtype=np.float32)
    with pytest.raises(NoLeverError):
        estimate_lever_angle(blank)
    with pytest.raises(NoLeverError):
        estimate_lever_angle(np.full((32, 32, 1), 0.9, dtype=np.float32))


@pytest.mark.slow
def test_estimator_accuracy_sweep():
    errs = []
    for i, angle in enumerate(np.linspace(-90.0, 90.0, 61)):
        angle = normalize_angle(float(angle))
        img, _ = render(spec_at(angle, seed=i), SIZE)
        errs.append(angle_diff_mod180(estimate_lever_angle(img), angle))
    errs = np.array(errs)
    assert np.mean(errs <= 2.0) >= 0.95


# ------------------------------------------------------------------ sampler

def test_sampler_bands():
    rng = np.random.default_rng(0)
    rule = LabelRule()
    normal = AngleSampler.normal_band(5.0)
    anomaly = AngleSampler.anomaly_band(25.0, 175.0)
    for _ in range(200):
        assert rule.label(normal.draw(rng, 0.0)) is Label.NORMAL
        assert rule.label(anomaly.draw(rng, 0.0)) is Label.ANOMALY


def test_sampler_round_trip_dict():
    s = AngleSampler.anomaly_band(30.0, 170.0)
    assert AngleSampler.from_dict(s.to_dict()) == s


def test_fixed_sampler():
    rng = np.random.default_rng(1)
    assert AngleSampler.fixed(270.0).draw(rng, 0.0) == -90.0


# ------------------------------------------------------------ sample_dataset

def test_sample_dataset_writes_pool(tmp_path):
    template = spec_at(0.0)
    manifest, records = sample_dataset(
        5, Domain.PSEUDOREAL_NORMAL, AngleSampler.normal_band(5.0), seed=9,
        template=template, size=SIZE, out_dir=tmp_path, split=Split.TRAIN,
    )
    assert len(manifest) == 5
    assert all(e.label is Label.NORMAL for e in manifest)
    assert all((tmp_path / f"{e.image_id}.png").exists() for e in manifest)
    rule = LabelRule()
    for rec, e in zip(records, manifest):
        assert rule.label(rec.lever_angle, template.ref_angle) is e.label


def test_sample_dataset_single_fixed_normal(tmp_path):
    template = spec_at(0.0)
    manifest, _ = sample_dataset(
        1, Domain.PSEUDOREAL_NORMAL, AngleSampler.fixed(template.ref_angle), seed=1,
        template=template, size=SIZE, out_dir=tmp_path, split=Split.TRAIN,
    )
    assert len(manifest) == 1
    assert manifest.entries[0].label is Label.NORMAL


def test_sample_dataset_deterministic(tmp_path):
    template = spec_at(0.0)
    kw = dict(template=template, size=SIZE, split=Split.TEST)
    m1, r1 = sample_dataset(4, Domain.CG_ANOMALY, AngleSampler.anomaly_band(), seed=3,
                            out_dir=tmp_path / "a", **kw)
    m2, r2 = sample_dataset(4, Domain.CG_ANOMALY, AngleSampler.anomaly_band(), seed=3,
                            out_dir=tmp_path / "b", **kw)
    assert m1.entries == m2.entries
    assert r1 == r2
    for e in m1:
        assert (tmp_path / "a" / f"{e.image_id}.png").read_bytes() == (
            tmp_path / "b" / f"{e.image_id}.png").read_bytes()


def test_sample_dataset_sampler_domain_mismatch(tmp_path):
    template = spec_at(0.0)
    with pytest.raises(SamplerDomainError):
        sample_dataset(
            3, Domain.PSEUDOREAL_NORMAL, AngleSampler.anomaly_band(), seed=0,
            template=template, size=SIZE, out_dir=tmp_path, split=Split.TRAIN,
        )
    assert not list(tmp_path.iterdir())  # nothing written before the check


def test_sample_dataset_rejects_unrenderable_domain(tmp_path):
    with pytest.raises(SceneError):
        sample_dataset(
            2, Domain.REAL_NORMAL, AngleSampler.normal_band(), seed=0,
            template=spec_at(0.0), size=SIZE, out_dir=tmp_path, split=Split.TRAIN,
        )


def test_item_seed_is_schedule_independent():
    assert derive_item_seed(7, 3) == derive_item_seed(7, 3)
    assert derive_item_seed(7, 3) != derive_item_seed(7, 4)
    assert derive_item_seed(8, 3) != derive_item_seed(7, 3)


def test_angles_csv_round_trip(tmp_path):
    records = [AngleRecord("a", 12.25, 7), AngleRecord("b", -170.0, 9)]
    write_angles_csv(records, tmp_path / "angles.csv")
    assert read_angles_csv(tmp_path / "angles.csv") == records

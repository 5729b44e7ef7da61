"""Comparison report: a single self-contained HTML file rendered purely from
stage artifacts, so regenerating it from unchanged inputs is byte-identical."""

from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import List

__all__ = ["render_report"]


def _embed_png(path: Path) -> str:
    data = base64.b64encode(path.read_bytes()).decode()
    return f"data:image/png;base64,{data}"


def _load_json(path: Path) -> dict:
    with path.open() as f:
        return json.load(f)


def _fmt(x, digits=4):
    if isinstance(x, float):
        return f"{x:.{digits}f}"
    return str(x)


def render_report(cfg, root: Path) -> str:
    comparison = _load_json(root / "eval" / "comparison.json")
    gap = _load_json(root / "converted" / "domain_gap.json")
    geometry = _load_json(root / "converted" / "geometry_stats.json")
    focus = _load_json(root / "explain" / "focus.json")

    rows: List[str] = []
    for variant, anomaly_source in (("cg", "rendered anomalies (flat style)"),
                                    ("gcgan", "translated anomalies")):
        conf = comparison[f"confusion_{variant}"]
        med = focus["variants"][variant]["median_focus_fraction"]
        rows.append(
            "<tr>"
            f"<td>{variant}</td><td>{anomaly_source}</td>"
            f"<td>{_fmt(comparison[f'auc_{variant}'])}</td>"
            f"<td>tp={conf['tp']} fp={conf['fp']} tn={conf['tn']} fn={conf['fn']}</td>"
            f"<td>{_fmt(med)}</td>"
            "</tr>"
        )

    hist_imgs = "".join(
        f'<figure><img src="{_embed_png(root / "eval" / f"hist_{v}.png")}" '
        f'alt="score histogram {v}"/><figcaption>{v}-trained detector score '
        f"distribution</figcaption></figure>"
        for v in ("cg", "gcgan")
    )

    overlays = sorted((root / "explain").glob("*.gradcam.png"))[:6]
    overlay_imgs = "".join(
        f'<figure><img src="{_embed_png(p)}" alt="{p.name}"/>'
        f"<figcaption>{p.name}</figcaption></figure>"
        for p in overlays
    )

    html = f"""<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8"/>
<title>Detector comparison report</title>
<style>
body {{ font-family: sans-serif; margin: 2em; max-width: 64em; }}
table {{ border-collapse: collapse; }}
td, th {{ border: 1px solid #999; padding: 0.4em 0.8em; text-align: left; }}
figure {{ display: inline-block; margin: 0.5em; }}
img {{ image-rendering: pixelated; min-width: 128px; }}
figcaption {{ font-size: 0.8em; color: #555; max-width: 20em; }}
.note {{ background: #fdf6e3; padding: 0.8em; border-left: 4px solid #b58900; }}
</style>
</head>
<body>
<h1>Anomaly detector comparison</h1>
<p>Preset <b>{cfg.preset}</b>, root seed <b>{cfg.seed}</b>, canvas
{cfg.scene.canvas}&times;{cfg.scene.canvas}. Pools: {cfg.sizes.train_normal} training
normals, {cfg.sizes.cg_pool} rendered anomalies, {cfg.sizes.converted_pool} translated
anomalies ({cfg.sizes.train_anomaly} used for training), {cfg.sizes.test_normal}+{cfg.sizes.test_anomaly}
held-out test images.</p>

<div class="note">
The test set substitutes a pool of {cfg.sizes.test_anomaly} synthetic pseudo-real
anomaly images for a single real anomaly photograph, so that AUC and score
distributions are statistically meaningful.
</div>

<h2>Detection</h2>
<table>
<tr><th>variant</th><th>anomaly training data</th><th>ROC-AUC</th>
<th>confusion @ 0.5</th><th>median Grad-CAM focus on lever</th></tr>
{''.join(rows)}
</table>
<p>AUC gap (gcgan &minus; cg): <b>{_fmt(comparison['auc_gap'])}</b>
on {comparison['n_test']} test images.</p>
{hist_imgs}

<h2>Domain shift</h2>
<p>Mean chi-square histogram distance to the pseudo-real reference
({gap['reference']}, {gap['bins']} bins/channel):
translated anomalies <b>{_fmt(gap['mean_distance_converted'])}</b> vs raw rendered
anomalies <b>{_fmt(gap['mean_distance_raw_cg'])}</b>.</p>

<h2>Geometry preservation</h2>
<p>On {geometry['n']} translated anomalies, {_fmt(100 * geometry['fraction_within_10deg'], 1)}%
keep their lever angle within 10&deg; of the source
(median error {_fmt(geometry['median_error_deg'], 2)}&deg;,
{geometry['n_no_lever']} images with no detectable lever).</p>

<h2>Explanation focus</h2>
<p>Median fraction of saliency mass on the lever (lever covers
{_fmt(100 * focus['lever_area_fraction'], 2)}% of the image):
cg {_fmt(focus['variants']['cg']['median_focus_fraction'])},
gcgan {_fmt(focus['variants']['gcgan']['median_focus_fraction'])}
over {focus['n_images']} true anomalies.</p>
{overlay_imgs}
</body>
</html>
"""
    return html

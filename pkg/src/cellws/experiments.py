"""Comparison harnesses producing small ablation tables.

Three studies: augmentation regimes (none / elastic / elastic+geometric /
geometric), watershed versus nearest-marker assignment on touching cells,
and marker size (erosion ratio sweep versus weak point markers).  Numbers
are fixture-dependent; only table shape and directional claims carry over.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy import ndimage as _ndi

from . import raster
from .config import DatasetConfig
from .ctc import SequenceLayout
from .dataprep import (
    AugmentationSpec,
    ElasticParams,
    augment,
    draw_augmentation,
    make_reference,
    markers_from_weak,
)
from .errors import DataError
from .markerseg import (
    PipelineParams,
    calibrate_foreground_threshold,
    distance_baseline,
    segment_image,
    watershed,
)
from .metrics import evaluate_frames, seg_measure
from .morphology import _edt_squared, max_inscribed_diameter
from .oracle import OracleSpec, oracle_predictions

__all__ = [
    "augmentation_experiment",
    "segfunction_experiment",
    "markertype_experiment",
    "touching_pair_fixture",
]

AUGMENT_REGIMES = ("none", "ed", "ed_rts", "rts")


def _regime_spec(name: str) -> AugmentationSpec | None:
    if name == "none":
        return None
    if name == "ed":
        return AugmentationSpec(
            scale_range=(1.0, 1.0), rotate=False, flip=False, elastic=ElasticParams()
        )
    if name == "ed_rts":
        return AugmentationSpec(elastic=ElasticParams())
    if name == "rts":
        return AugmentationSpec()
    raise ValueError(f"unknown regime {name}")


def _load_annotated_frames(cfg: DatasetConfig, max_frames: int | None):
    root = cfg.require_root()
    frames = []
    for seq in cfg.sequences:
        layout = SequenceLayout(root, seq)
        for fid, path in sorted(layout.seg_annotations().items()):
            weak_path = layout.tra_annotations().get(fid)
            frames.append(
                (
                    fid,
                    raster.read_labels(path),
                    raster.read_labels(weak_path) if weak_path else None,
                )
            )
    if not frames:
        raise DataError("no fully annotated frames found")
    if max_frames is not None:
        frames = frames[:max_frames]
    return frames


def _measured_min_diameter(frames) -> float:
    diam = []
    for _, labels, _ in frames:
        for lab in np.unique(labels):
            if lab == 0:
                continue
            diam.append(max_inscribed_diameter(labels == lab))
    if not diam:
        raise DataError("no cells in annotated frames")
    return float(min(diam))


def _calibrated_params(cfg: DatasetConfig, frames, spec: OracleSpec) -> PipelineParams:
    """Resolve deferred config values against oracle predictions."""
    min_diam = (
        cfg.min_cell_diameter
        if cfg.min_cell_diameter is not None
        else _measured_min_diameter(frames)
    )
    threshold = cfg.foreground_threshold
    if threshold is None:
        pairs = []
        for _, labels, _ in frames:
            _, fg = oracle_predictions(labels, spec)
            pairs.append((fg, labels > 0))
        threshold, _ = calibrate_foreground_threshold(pairs)
    return PipelineParams(
        contrast=cfg.contrast,
        foreground_threshold=threshold,
        marker_threshold=cfg.marker_threshold,
        size_ratio=cfg.size_ratio,
        min_cell_diameter=min_diam,
        marker_diameter=cfg.marker_diameter,
        connectivity=cfg.connectivity,
        remove_border=cfg.remove_border,
    )


def augmentation_experiment(
    cfg: DatasetConfig, seed: int | None = None, max_frames: int | None = 12
) -> list[dict]:
    """Scores of the oracle pipeline under each augmentation regime.

    Each frame's labels are augmented, predictions derived from the
    augmented ground truth, segmented, and evaluated against that same
    augmented ground truth, pooled per regime.
    """
    seed = cfg.seed if seed is None else seed
    frames = _load_annotated_frames(cfg, max_frames)
    spec = OracleSpec(sigma=cfg.oracle_sigma, size_ratio=cfg.oracle_size_ratio)
    params = _calibrated_params(cfg, frames, spec)
    rows = []
    for ridx, regime in enumerate(AUGMENT_REGIMES):
        aug_spec = _regime_spec(regime)
        pairs = []
        for fid, labels, _ in frames:
            if aug_spec is None:
                aug_labels = labels
            else:
                rng = np.random.default_rng([seed, ridx, fid])
                draw = draw_augmentation(aug_spec, rng)
                _, aug_labels = augment(
                    labels.astype(np.float32), labels, aug_spec, draw
                )
            marker, fg = oracle_predictions(aug_labels, spec)
            result = segment_image(marker, fg, params)
            pairs.append((aug_labels, result))
        report = evaluate_frames(pairs)
        rows.append(
            {
                "regime": regime,
                "seg": round(report.seg, 6),
                "det": round(report.det, 6),
                "op_csb": round(report.op_csb, 6),
            }
        )
    return rows


def touching_pair_fixture(rng: np.random.Generator, size: int = 96):
    """Two touching elliptical cells with markers pushed off-centre.

    The foreground map blurs each cell separately and combines by maximum,
    which leaves a valley along the shared boundary the way a
    boundary-aware predictor would.  Markers are single pixels displaced
    at least 30% of the cell's inradius away from its deepest point,
    toward the sibling cell: adversarial for nearest-marker assignment,
    harmless for relief-following floods.

    Returns (labels, markers, relief, region).
    """
    h = w = size
    while True:
        a1, b1 = rng.uniform(9, 14, 2)
        a2, b2 = rng.uniform(9, 14, 2)
        phi1, phi2 = rng.uniform(0, np.pi, 2)
        cy = h / 2 + rng.uniform(-6, 6)
        cx = w / 2 - rng.uniform(10, 14)
        theta = rng.uniform(-0.5, 0.5)
        dist = 0.9 * (min(a1, b1) + min(a2, b2))
        cy2 = cy + dist * np.sin(theta)
        cx2 = cx + dist * np.cos(theta)

        ys, xs = np.mgrid[0:h, 0:w]
        m1 = _ellipse(ys, xs, cy, cx, a1, b1, phi1)
        m2 = _ellipse(ys, xs, cy2, cx2, a2, b2, phi2) & ~m1
        m2 = _largest_cc(m2)
        if m1.sum() < 150 or m2.sum() < 150:
            continue
        if not _touching(m1, m2):
            continue
        if _on_border(m1 | m2):
            continue

        labels = np.zeros((h, w), np.int32)
        labels[m1] = 1
        labels[m2] = 2
        markers = np.zeros((h, w), np.int32)
        ok = True
        for lab, mine, other in ((1, m1, m2), (2, m2, m1)):
            pt = _displaced_point(mine, other, min_fraction=0.3)
            if pt is None:
                ok = False
                break
            markers[pt] = lab
        if not ok:
            continue

        fg = np.maximum(
            _ndi.gaussian_filter(m1.astype(np.float32), 2.0),
            _ndi.gaussian_filter(m2.astype(np.float32), 2.0),
        )
        fg = np.clip(fg, 0.0, 1.0).astype(np.float32)
        relief = (np.float32(1.0) - fg).astype(np.float32)
        region = raster.quantize(fg) >= 128
        return labels, markers, relief, region


def _ellipse(ys, xs, cy, cx, a, b, phi):
    dy = ys - cy
    dx = xs - cx
    u = (dx * np.cos(phi) + dy * np.sin(phi)) / a
    v = (-dx * np.sin(phi) + dy * np.cos(phi)) / b
    return u * u + v * v <= 1.0


def _largest_cc(mask):
    lab, n = _ndi.label(mask)
    if n <= 1:
        return mask
    sizes = np.bincount(lab.ravel())[1:]
    return lab == (int(np.argmax(sizes)) + 1)


def _touching(a, b):
    return bool((_ndi.binary_dilation(a, np.ones((3, 3), bool)) & b).any())


def _on_border(mask):
    return bool(mask[0].any() or mask[-1].any() or mask[:, 0].any() or mask[:, -1].any())


def _displaced_point(cell, other, min_fraction):
    """Pixel inside ``cell`` displaced >= min_fraction of the inradius from
    the deepest point, toward the other cell."""
    sq = _edt_squared(cell)
    inradius = float(np.sqrt(sq.max()))
    y0, x0 = np.unravel_index(int(np.argmax(sq)), cell.shape)
    sq_o = _edt_squared(other)
    y1, x1 = np.unravel_index(int(np.argmax(sq_o)), other.shape)
    vy, vx = y1 - y0, x1 - x0
    norm = float(np.hypot(vy, vx))
    if norm == 0:
        return None
    for frac in (0.45, 0.4, 0.35, 0.3):
        d = frac * inradius
        py = int(round(y0 + d * vy / norm))
        px = int(round(x0 + d * vx / norm))
        if 0 <= py < cell.shape[0] and 0 <= px < cell.shape[1] and cell[py, px]:
            actual = np.hypot(py - y0, px - x0) / inradius
            if actual >= min_fraction:
                return py, px
    return None


def segfunction_experiment(n_fixtures: int = 40, seed: int = 0) -> list[dict]:
    """Watershed versus nearest-marker assignment on touching pairs.

    Both get identical markers and region; only the grouping rule differs.
    The final row aggregates means and the watershed win rate.
    """
    rows = []
    seg_w_all = []
    seg_b_all = []
    wins = 0
    for i in range(n_fixtures):
        rng = np.random.default_rng([seed, i])
        labels, markers, relief, region = touching_pair_fixture(rng)
        ws = watershed(markers, relief, region)
        base = distance_baseline(markers, region)
        seg_w, _ = seg_measure(labels, ws)
        seg_b, _ = seg_measure(labels, base)
        seg_w_all.append(seg_w)
        seg_b_all.append(seg_b)
        wins += seg_w > seg_b
        rows.append(
            {
                "fixture": i,
                "watershed_seg": round(seg_w, 6),
                "baseline_seg": round(seg_b, 6),
            }
        )
    rows.append(
        {
            "fixture": "mean",
            "watershed_seg": round(float(np.mean(seg_w_all)), 6),
            "baseline_seg": round(float(np.mean(seg_b_all)), 6),
            "win_rate": round(wins / n_fixtures, 6),
        }
    )
    return rows


MARKER_VARIANTS = ("0.2", "0.4", "0.6", "0.8", "weak")


def markertype_experiment(cfg: DatasetConfig, max_frames: int | None = 12) -> list[dict]:
    """Detection score as the marker construction varies.

    Eroded markers at several size ratios against weak point annotations.
    The weak variant uses a small fixed opening diameter, matching how
    weak-marker datasets are configured, and a lighter blur: a full-width
    blur of a few-pixel annotation would flatten it below the marker
    threshold, whereas a predictor trained on such markers emits compact
    confident blobs.
    """
    frames = _load_annotated_frames(cfg, max_frames)
    spec_base = OracleSpec(sigma=cfg.oracle_sigma, size_ratio=cfg.oracle_size_ratio)
    params = _calibrated_params(cfg, frames, spec_base)
    weak_sigma = min(1.0, cfg.oracle_sigma)
    rows = []
    for variant in MARKER_VARIANTS:
        pairs = []
        for fid, labels, weak in frames:
            _, fg = oracle_predictions(labels, spec_base)
            if variant == "weak":
                if weak is None:
                    raise DataError(f"frame {fid} lacks weak annotations")
                mask = markers_from_weak(weak, cfg.connectivity)
                run_params = _with_marker_diameter(params, 3.0)
                sigma = weak_sigma
            else:
                k = float(variant)
                mask = make_reference(labels, k, cfg.connectivity).markers
                run_params = _with_size_ratio(params, k)
                sigma = spec_base.sigma
            marker = np.clip(
                _ndi.gaussian_filter(mask.astype(np.float32), sigma), 0, 1
            ).astype(np.float32)
            pairs.append((labels, segment_image(marker, fg, run_params)))
        report = evaluate_frames(pairs)
        rows.append({"markers": variant, "det": round(report.det, 6)})
    return rows


def _with_size_ratio(params: PipelineParams, k: float) -> PipelineParams:
    return dataclasses.replace(params, size_ratio=k, marker_diameter=None)


def _with_marker_diameter(params: PipelineParams, d: float) -> PipelineParams:
    return dataclasses.replace(
        params, size_ratio=None, min_cell_diameter=None, marker_diameter=d
    )

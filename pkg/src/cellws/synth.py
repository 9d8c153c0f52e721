"""Synthetic ellipse-cell dataset generator.

Frames contain non-overlapping elliptical cells, a share of them placed as
touching pairs (adjacent masks sharing a boundary), written in the standard
challenge layout together with weak point-like markers and a matching
config file.  Everything derives from the seed, so regeneration is
bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage as _ndi

from . import raster
from .config import DatasetConfig, save_config
from .morphology import _edt_squared

__all__ = ["SynthParams", "synth_frame", "synth_dataset"]


@dataclass(frozen=True)
class SynthParams:
    """Geometry of the generated frames."""

    size: tuple[int, int] = (320, 320)
    cells: tuple[int, int] = (3, 15)
    semi_axis: tuple[float, float] = (11.0, 20.0)
    margin: int = 6  # keep cells away from the frame border
    gap: int = 2  # clearance between non-touching cells


def _ellipse_mask(
    shape: tuple[int, int], cy: float, cx: float, a: float, b: float, phi: float
) -> np.ndarray:
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    dy = ys - cy
    dx = xs - cx
    u = (dx * np.cos(phi) + dy * np.sin(phi)) / a
    v = (-dx * np.sin(phi) + dy * np.cos(phi)) / b
    return u * u + v * v <= 1.0


def _fits(mask: np.ndarray, occupied: np.ndarray, gap: int) -> bool:
    if not mask.any():
        return False
    grown = _ndi.binary_dilation(occupied, iterations=gap) if gap else occupied
    return not (mask & grown).any()


def synth_frame(rng: np.random.Generator, params: SynthParams = SynthParams()):
    """One frame: returns (image float [0,1], labels, weak marker labels)."""
    h, w = params.size
    lo_n, hi_n = params.cells
    target = int(rng.integers(lo_n, hi_n + 1))
    labels = np.zeros((h, w), np.int32)
    occupied = np.zeros((h, w), bool)
    placed = 0
    attempts = 0
    # every fourth cell arrives as one half of a touching pair
    want_pairs = target // 4

    def sample_geometry():
        a = float(rng.uniform(*params.semi_axis))
        b = float(rng.uniform(*params.semi_axis))
        phi = float(rng.uniform(0, np.pi))
        m = params.margin + max(a, b)
        cy = float(rng.uniform(m, h - 1 - m))
        cx = float(rng.uniform(m, w - 1 - m))
        return cy, cx, a, b, phi

    while placed < target and attempts < 200:
        attempts += 1
        cy, cx, a, b, phi = sample_geometry()
        mask = _ellipse_mask((h, w), cy, cx, a, b, phi)
        if not _fits(mask, occupied, params.gap):
            continue
        pair = want_pairs > 0 and placed + 1 < target
        second = None
        if pair:
            # push a sibling into slight overlap, then carve the overlap
            # away so the two masks share a boundary without intersecting
            a2 = float(rng.uniform(*params.semi_axis))
            b2 = float(rng.uniform(*params.semi_axis))
            phi2 = float(rng.uniform(0, np.pi))
            theta = float(rng.uniform(0, 2 * np.pi))
            dist = 0.92 * (min(a, b) + min(a2, b2))
            cy2 = cy + dist * np.sin(theta)
            cx2 = cx + dist * np.cos(theta)
            m2 = params.margin + max(a2, b2)
            if m2 <= cy2 <= h - 1 - m2 and m2 <= cx2 <= w - 1 - m2:
                cand = _ellipse_mask((h, w), cy2, cx2, a2, b2, phi2) & ~mask
                cand = _largest(cand)
                if cand.sum() >= 200 and _fits(
                    cand | mask, occupied, params.gap
                ):
                    second = cand
        placed += 1
        labels[mask] = placed
        occupied |= mask
        if second is not None:
            placed += 1
            labels[second] = placed
            occupied |= second
            want_pairs -= 1

    labels = raster.relabel_canonical(labels)
    weak = _weak_markers(labels, rng)
    image = _render(labels, rng)
    return image, labels, weak


def _largest(mask: np.ndarray) -> np.ndarray:
    lab, n = _ndi.label(mask)
    if n <= 1:
        return mask
    sizes = np.bincount(lab.ravel())[1:]
    return lab == (int(np.argmax(sizes)) + 1)


def _weak_markers(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Small disks near each cell's deepest point, slightly jittered."""
    weak = np.zeros(labels.shape, np.int32)
    for lab in range(1, int(labels.max()) + 1):
        cell = labels == lab
        sq = _edt_squared(cell)
        cy, cx = np.unravel_index(int(np.argmax(sq)), cell.shape)
        jy, jx = int(rng.integers(-2, 3)), int(rng.integers(-2, 3))
        y, x = cy + jy, cx + jx
        if not (0 <= y < cell.shape[0] and 0 <= x < cell.shape[1]) or sq[y, x] < 16:
            y, x = cy, cx  # jitter would leave too little clearance
        ys, xs = np.mgrid[-2:3, -2:3]
        disk = ys * ys + xs * xs <= 4
        weak[y - 2 : y + 3, x - 2 : x + 3][disk] = lab
    return weak


def _render(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Plausible acquisition image: shaded cells over a noisy background."""
    img = np.full(labels.shape, 0.12, np.float64)
    n = int(labels.max())
    tones = rng.uniform(0.45, 0.75, max(n, 1))
    for lab in range(1, n + 1):
        img[labels == lab] = tones[lab - 1]
    img = _ndi.gaussian_filter(img, 1.0)
    img = img + rng.normal(0.0, 0.02, labels.shape)
    return np.clip(img, 0.0, 1.0)


def synth_dataset(
    out_root: str | Path,
    frames: int = 24,
    seed: int = 0,
    seq: str = "01",
    params: SynthParams = SynthParams(),
) -> Path:
    """Write a synthetic dataset in challenge layout plus a config file.

    Every frame derives from (seed, frame index), so any frame subset can
    be regenerated independently and identically.
    """
    out_root = Path(out_root)
    img_dir = out_root / seq
    seg_dir = out_root / f"{seq}_GT" / "SEG"
    tra_dir = out_root / f"{seq}_GT" / "TRA"
    for i in range(frames):
        rng = np.random.default_rng([seed, i])
        image, labels, weak = synth_frame(rng, params)
        u16 = np.rint(image * 65535.0).astype(np.uint16)
        raster.write_image(img_dir / f"t{i:03d}.tif", u16)
        raster.write_labels(seg_dir / f"man_seg{i:03d}.tif", labels)
        raster.write_labels(tra_dir / f"man_track{i:03d}.tif", weak)
    cfg = DatasetConfig(
        root=out_root,
        sequences=(seq,),
        normalization="he",
        marker_source="eroded_full",
        size_ratio=0.4,
        marker_threshold=0.6,
        contrast=30,
        foreground_threshold=None,  # calibrate
        min_cell_diameter=None,  # measure
        connectivity=8,
        remove_border=False,
        seed=seed,
        oracle_sigma=2.0,
        oracle_size_ratio=0.6,
        oracle_noise=0.0,
    )
    cfg_path = out_root / "synth.cfg"
    save_config(cfg, cfg_path)
    return cfg_path

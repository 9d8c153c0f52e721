"""Instance segmentation from per-pixel predictions.

Two probability maps drive the pipeline: one trained on cell markers and
one on the full cell foreground.  Markers are extracted from the first by
opening, thresholding and picking h-dome tops; the second supplies both the
flooding relief (its inversion) and the region the flood may fill.  A
marker-controlled watershed then grows one labelled instance per marker.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage as _ndi

from . import morphology, raster
from ._kernels import _flood

__all__ = [
    "PipelineParams",
    "marker_filter_diameter",
    "extract_markers",
    "segmentation_function",
    "cell_region_mask",
    "calibrate_foreground_threshold",
    "watershed",
    "distance_baseline",
    "remove_border_cells",
    "segment_image",
]

log = logging.getLogger("cellws")


@dataclass(frozen=True)
class PipelineParams:
    """Per-dataset knobs of the segmentation pipeline.

    ``contrast`` and both thresholds live on the quantized 0..255 scale
    (``marker_threshold`` as a fraction of it).  The marker filter diameter
    is either given explicitly or derived as size_ratio times the smallest
    cell diameter seen in training.
    """

    contrast: int
    foreground_threshold: int
    marker_threshold: float = 0.6
    size_ratio: float | None = None
    min_cell_diameter: float | None = None
    marker_diameter: float | None = None
    connectivity: int = 8
    remove_border: bool = False

    def __post_init__(self):
        if not 0.0 < self.marker_threshold < 1.0:
            raise ValueError("marker_threshold must lie in (0, 1)")
        if int(self.contrast) != self.contrast or not 1 <= self.contrast <= 255:
            raise ValueError("contrast must be an integer in 1..255")
        if int(self.foreground_threshold) != self.foreground_threshold or not (
            0 <= self.foreground_threshold <= 255
        ):
            raise ValueError("foreground_threshold must be an integer in 0..255")
        if self.size_ratio is not None and not 0.0 <= self.size_ratio <= 1.0:
            raise ValueError("size_ratio must lie in [0, 1]")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if self.marker_diameter is None and (
            self.size_ratio is None or self.min_cell_diameter is None
        ):
            raise ValueError(
                "need marker_diameter, or size_ratio plus min_cell_diameter"
            )

    def filter_diameter(self) -> float:
        d = (
            self.marker_diameter
            if self.marker_diameter is not None
            else self.size_ratio * self.min_cell_diameter
        )
        if d < 1:
            raise ValueError(f"marker filter diameter must be >= 1, got {d}")
        return float(d)


def marker_filter_diameter(training_cells, size_ratio: float) -> float:
    """Opening diameter for marker extraction: size_ratio times the smallest
    maximal inscribed cell diameter observed in training.

    ``training_cells`` may hold cell masks (measured here) or the already
    measured diameters themselves.
    """
    diameters = []
    for cell in training_cells:
        arr = np.asarray(cell)
        if arr.ndim == 2:
            diameters.append(morphology.max_inscribed_diameter(arr))
        else:
            diameters.append(float(arr))
    if not diameters:
        raise ValueError("need at least one training cell")
    if not 0.0 < size_ratio <= 1.0:
        raise ValueError("size_ratio must lie in (0, 1]")
    return float(size_ratio * min(diameters))


def extract_markers(
    marker_pred: np.ndarray,
    filter_diameter: float,
    contrast: int,
    marker_threshold: float = 0.6,
    connectivity: int = 8,
) -> np.ndarray:
    """Label watershed seeds found in a marker probability map.

    The map is quantized to 0..255, opened with a disk to suppress
    structures thinner than ``filter_diameter``, zeroed below the marker
    threshold, and reduced to the pixels whose h-dome reaches ``contrast``.
    Connected components of those pixels are the markers.
    """
    if filter_diameter < 1:
        raise ValueError("filter_diameter must be >= 1")
    q = raster.quantize(marker_pred)
    opened = morphology.open_image(q, filter_diameter)
    cut = np.float32(int(np.rint(marker_threshold * 255.0)))
    opened = np.where(opened >= cut, opened, np.float32(0.0))
    tops = morphology.dome_pixels(opened, int(contrast), connectivity)
    return raster.connected_components(tops, connectivity)


def segmentation_function(foreground_pred: np.ndarray) -> np.ndarray:
    """Flooding relief for the watershed: the inverted foreground map.

    High foreground confidence becomes low relief, so floods start deep
    inside cells and meet at uncertain boundaries.
    """
    p = raster.as_probability(foreground_pred)
    return np.float32(1.0) - p


def cell_region_mask(foreground_pred: np.ndarray, threshold: int) -> np.ndarray:
    """Region the watershed may fill: quantized foreground >= threshold."""
    if int(threshold) != threshold or not 0 <= threshold <= 255:
        raise ValueError("threshold must be an integer in 0..255")
    return raster.quantize(foreground_pred) >= np.uint8(threshold)


def calibrate_foreground_threshold(pairs) -> tuple[int, np.ndarray]:
    """Pick the foreground threshold by exhaustive Jaccard sweep.

    ``pairs`` yields (foreground probability map, reference foreground
    mask) tuples.  For every threshold t in 0..255 the Jaccard index of
    {quantized >= t} against the references is pooled over all pairs; the
    smallest t attaining the maximum wins.  Returns (threshold, curve).
    """
    hist_in = np.zeros(256, np.int64)
    hist_out = np.zeros(256, np.int64)
    count = 0
    for prob, mask in pairs:
        q = raster.quantize(prob)
        mask = raster.as_mask(mask)
        if q.shape != mask.shape:
            raise ValueError("probability map and mask must share one shape")
        hist_in += np.bincount(q[mask], minlength=256)
        hist_out += np.bincount(q[~mask], minlength=256)
        count += 1
    if count == 0:
        raise ValueError("need at least one (prediction, reference) pair")
    total_in = hist_in.sum()
    tp = np.cumsum(hist_in[::-1])[::-1].astype(np.float64)
    fp = np.cumsum(hist_out[::-1])[::-1].astype(np.float64)
    union = fp + float(total_in)
    curve = np.divide(tp, union, out=np.ones(256), where=union > 0)
    return int(np.argmax(curve)), curve


def _sort_keys(relief: np.ndarray) -> np.ndarray:
    """Order-preserving uint32 encoding of a float32 relief."""
    flat = np.ascontiguousarray(relief, np.float32).ravel()
    flat = flat + np.float32(0.0)  # collapse -0.0 onto +0.0
    bits = flat.view(np.uint32)
    neg = (bits & np.uint32(0x80000000)) != 0
    return np.where(neg, ~bits, bits | np.uint32(0x80000000)).astype(np.uint32)


def watershed(
    markers: np.ndarray,
    relief: np.ndarray,
    region: np.ndarray | None = None,
    connectivity: int = 8,
) -> np.ndarray:
    """Marker-controlled watershed flood of ``relief`` inside ``region``.

    Marker pixels seed a priority queue at their own relief; the lowest
    entry pops first, equal priorities in insertion order, and each popped
    pixel joins the marker it was reached from, pushing its unlabelled
    in-region neighbours at max(their relief, current priority).  Region
    pixels unreachable from any marker stay background.  Markers are
    clipped to the region; markers entirely outside it are dropped with a
    warning.
    """
    markers = raster.as_labels(markers)
    relief = raster.as_gray(relief)
    if region is None:
        region = np.ones(markers.shape, bool)
    region = raster.as_mask(region)
    if not (markers.shape == relief.shape == region.shape):
        raise ValueError("markers, relief and region must share one shape")
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")

    clipped = np.where(region, markers, 0).astype(np.int32)
    lost = np.setdiff1d(np.unique(markers), np.unique(clipped))
    if lost.size:
        log.warning("%d markers lie entirely outside the region; dropped", lost.size)

    h, w = markers.shape
    labels = np.ascontiguousarray(clipped).ravel().copy()
    _flood(
        _sort_keys(relief),
        labels,
        np.ascontiguousarray(region, np.uint8).ravel(),
        h,
        w,
        connectivity == 8,
    )
    return labels.reshape(h, w)


def distance_baseline(markers: np.ndarray, region: np.ndarray) -> np.ndarray:
    """Nearest-marker assignment inside the region, ignoring any relief.

    Every region pixel joins its Euclidean-nearest marker; exact ties (on
    squared integer distances) go to the smaller label.
    """
    markers = raster.as_labels(markers)
    region = raster.as_mask(region)
    if markers.shape != region.shape:
        raise ValueError("markers and region must share one shape")
    clipped = np.where(region, markers, 0)
    out = np.zeros(markers.shape, np.int32)
    best = np.full(markers.shape, np.iinfo(np.int64).max, np.int64)
    for lab in np.unique(clipped):
        if lab == 0:
            continue
        d = _ndi.distance_transform_edt(clipped != lab)
        sq = np.rint(d**2).astype(np.int64)
        upd = region & (sq < best)
        out[upd] = lab
        best[upd] = sq[upd]
    return out


def remove_border_cells(labels: np.ndarray) -> np.ndarray:
    """Drop instances touching the outermost rows/columns, then relabel."""
    labels = raster.as_labels(labels)
    rim = np.concatenate(
        [labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]]
    )
    doomed = np.unique(rim)
    doomed = doomed[doomed > 0]
    if doomed.size == 0:
        return labels.copy()
    out = np.where(np.isin(labels, doomed), 0, labels)
    return raster.relabel_canonical(out)


def segment_image(
    marker_pred: np.ndarray,
    foreground_pred: np.ndarray,
    params: PipelineParams,
) -> np.ndarray:
    """Full pipeline: probability maps in, instance label map out."""
    marker_pred = raster.as_probability(marker_pred)
    foreground_pred = raster.as_probability(foreground_pred)
    if marker_pred.shape != foreground_pred.shape:
        raise ValueError("marker and foreground maps must share one shape")
    markers = extract_markers(
        marker_pred,
        params.filter_diameter(),
        params.contrast,
        params.marker_threshold,
        params.connectivity,
    )
    relief = segmentation_function(foreground_pred)
    region = cell_region_mask(foreground_pred, params.foreground_threshold)
    labels = watershed(markers, relief, region, params.connectivity)
    if params.remove_border:
        labels = remove_border_cells(labels)
    return labels

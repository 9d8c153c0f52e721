"""Training-data preparation: normalization, reference outputs, weights.

Full annotations are instance label maps.  From them we derive the two
binary reference rasters a pixel classifier is trained against: the cell
foreground (union of all instances) and one eroded marker per cell.  Weight
maps emphasise pixels close to cells, and the augmentation here is the
batch-generation flavour: geometric transforms with mirrored borders plus
an optional elastic field.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage as _ndi

from . import raster
from .morphology import _edt_squared, max_inscribed_diameter

__all__ = [
    "normalize",
    "ReferenceOutputs",
    "make_reference",
    "markers_from_weak",
    "WeightParams",
    "weight_map",
    "weighted_cross_entropy",
    "ElasticParams",
    "AugmentationSpec",
    "AugmentDraw",
    "draw_augmentation",
    "augment",
]

NORMALIZE_METHODS = ("he", "clahe", "median")


def normalize(
    img: np.ndarray,
    method: str = "he",
    clahe_clip: float = 2.0,
    clahe_tiles: tuple[int, int] = (8, 8),
) -> np.ndarray:
    """Normalize an acquisition image to float32 values in [-0.5, 0.5].

    ``he`` equalizes a 256-bin histogram (value -> inclusive cdf - 0.5),
    ``clahe`` applies contrast-limited adaptive equalization on an 8-bit
    rescale, and ``median`` maps the median to 0 and the maximum to 0.5,
    clamping below.  A constant image maps to all zeros under every method.
    """
    img = raster.as_gray(np.asarray(img, np.float64))
    lo = float(img.min())
    hi = float(img.max())
    if hi == lo:
        return np.zeros(img.shape, np.float32)

    if method == "he":
        idx = np.clip((img - lo) * (256.0 / (hi - lo)), 0, 255).astype(np.int64)
        cdf = np.cumsum(np.bincount(idx.ravel(), minlength=256)) / img.size
        out = cdf[idx] - 0.5
    elif method == "clahe":
        u8 = np.rint((img - lo) * (255.0 / (hi - lo))).astype(np.uint8)
        clahe = cv2.createCLAHE(clipLimit=clahe_clip, tileGridSize=clahe_tiles)
        out = clahe.apply(u8) / 255.0 - 0.5
    elif method == "median":
        med = float(np.median(img))
        if hi == med:
            return np.zeros(img.shape, np.float32)
        out = np.clip(0.5 * (img - med) / (hi - med), -0.5, 0.5)
    else:
        raise ValueError(f"unknown normalization method: {method!r}")
    return out.astype(np.float32)


@dataclass(frozen=True)
class ReferenceOutputs:
    """Binary rasters a pixel classifier is trained against."""

    markers: np.ndarray  # one connected marker per cell, pairwise non-adjacent
    foreground: np.ndarray  # union of all cell masks


def _largest_component(mask: np.ndarray, connectivity: int) -> np.ndarray:
    cc = raster.connected_components(mask, connectivity)
    n = cc.max()
    if n <= 1:
        return mask.copy()
    sizes = np.bincount(cc.ravel())[1:]
    # canonical labels run in raster order, so argmax ties pick the
    # component whose first pixel comes first
    return cc == (int(np.argmax(sizes)) + 1)


def _ultimate_point(mask: np.ndarray) -> np.ndarray:
    sq = _edt_squared(mask)
    out = np.zeros(mask.shape, bool)
    out[np.unravel_index(int(np.argmax(sq)), mask.shape)] = True
    return out


def _shrink(mask: np.ndarray, diameter: float, connectivity: int) -> np.ndarray:
    """Erode by a rasterized disk, falling back to the largest remaining
    component and finally the deepest pixel so the marker never vanishes."""
    eroded = 4 * _edt_squared(mask) > diameter * diameter
    if not eroded.any():
        return _ultimate_point(mask)
    return _largest_component(eroded, connectivity)


def _separate_markers(marker_map: np.ndarray, connectivity: int) -> np.ndarray:
    """Shrink markers until no two are adjacent under the connectivity.

    Offending markers are eroded by the smallest useful disk (diameter 3);
    single-pixel markers cannot shrink further, so two adjacent single
    pixels are left as-is after a warning.
    """
    marker_map = marker_map.copy()
    while True:
        offenders = _touching_labels(marker_map, connectivity)
        if not offenders:
            return marker_map
        progress = False
        for lab in sorted(offenders):
            mask = marker_map == lab
            if mask.sum() <= 1:
                continue
            sl = _ndi.find_objects(mask.astype(np.int8), max_label=1)[0]
            sub = mask[sl]
            new = _shrink(sub, 3.0, connectivity)
            if new.sum() < sub.sum():
                progress = True
            marker_map[mask] = 0
            region = marker_map[sl]
            region[new] = lab
            marker_map[sl] = region
        if not progress:
            warnings.warn(
                "adjacent single-pixel markers cannot be separated further",
                stacklevel=3,
            )
            return marker_map


def _touching_labels(labels: np.ndarray, connectivity: int) -> set[int]:
    shifts = [(0, 1), (1, 0)]
    if connectivity == 8:
        shifts += [(1, 1), (1, -1)]
    out: set[int] = set()
    h, w = labels.shape
    for dy, dx in shifts:
        a = labels[
            max(0, -dy) : h - max(0, dy),
            max(0, -dx) : w - max(0, dx),
        ]
        b = labels[
            max(0, dy) : h - max(0, -dy),
            max(0, dx) : w - max(0, -dx),
        ]
        hit = (a > 0) & (b > 0) & (a != b)
        if hit.any():
            out.update(np.unique(a[hit]).tolist())
            out.update(np.unique(b[hit]).tolist())
    return out


def make_reference(
    labels: np.ndarray, size_ratio: float, connectivity: int = 8
) -> ReferenceOutputs:
    """Derive marker and foreground reference rasters from instance labels.

    Each cell's marker is the cell eroded by a disk whose diameter is
    (1 - size_ratio) times the cell's maximal inscribed diameter, so
    size_ratio 1 keeps the whole cell and size_ratio 0 collapses it to the
    single deepest pixel.  If erosion disconnects a cell the largest
    component survives (ties: earliest first pixel in raster order); if it
    empties, the deepest pixel survives.  Markers of different cells are
    never adjacent: offenders are shrunk further.
    """
    labels = raster.as_labels(labels)
    if not 0.0 <= size_ratio <= 1.0:
        raise ValueError(f"size_ratio must lie in [0, 1], got {size_ratio}")
    foreground = labels > 0
    marker_map = np.zeros(labels.shape, np.int32)
    for lab, sl in _iter_cells(labels):
        cell = labels[sl] == lab
        if size_ratio == 0.0:
            marker = _ultimate_point(cell)
        else:
            se_diameter = (1.0 - size_ratio) * max_inscribed_diameter(cell)
            marker = _shrink(cell, se_diameter, connectivity)
        region = marker_map[sl]
        region[marker] = lab
        marker_map[sl] = region
    marker_map = _separate_markers(marker_map, connectivity)
    return ReferenceOutputs(markers=marker_map > 0, foreground=foreground)


def _iter_cells(labels: np.ndarray):
    """Yield (label, bbox slice) per cell, ascending by label, with a 1-px
    margin so erosion sees the cell boundary."""
    objects = _ndi.find_objects(labels)
    for idx, sl in enumerate(objects):
        if sl is None:
            continue
        lab = idx + 1
        grown = tuple(
            slice(max(0, s.start - 1), min(dim, s.stop + 1))
            for s, dim in zip(sl, labels.shape)
        )
        yield lab, grown


def markers_from_weak(weak: np.ndarray, connectivity: int = 8) -> np.ndarray:
    """Turn weak per-cell annotations into a valid marker raster.

    Weak annotations already are one small region per cell; this validates
    connectivity and shrinks any markers that touch each other.
    """
    weak = raster.as_labels(weak)
    for lab, sl in _iter_cells(weak):
        cell = weak[sl] == lab
        n = int(raster.connected_components(cell, connectivity).max())
        if n > 1:
            raise ValueError(f"weak marker {lab} is not a single connected region")
    return _separate_markers(weak, connectivity) > 0


@dataclass(frozen=True)
class WeightParams:
    """Shape of the pixel-weight map used by the training loss.

    ``magnitude`` scales the near-cell emphasis, ``border_width`` is the
    distance (in pixels) at which the emphasis fades to zero, and
    ``balance`` optionally multiplies in inverse class frequencies.
    """

    magnitude: float = 0.075
    border_width: float = 20.0
    balance: str = "none"  # or "class_frequency"

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError("magnitude must be >= 0")
        if self.border_width < 0:
            raise ValueError("border_width must be >= 0")
        if self.balance not in ("none", "class_frequency"):
            raise ValueError(f"unknown balance mode: {self.balance!r}")


def weight_map(labels: np.ndarray, params: WeightParams = WeightParams()) -> np.ndarray:
    """Per-pixel loss weights: larger near cells, optionally class-balanced.

    w(q) = (1 + magnitude * sum_cells max(border_width - dist(q, cell), 0))
    times the balance factor.  Pixels farther than ``border_width`` from
    every cell keep weight 1 (before balancing).
    """
    labels = raster.as_labels(labels)
    margin = int(math.ceil(params.border_width)) + 1
    acc = np.zeros(labels.shape, np.float64)
    for idx, sl in enumerate(_ndi.find_objects(labels)):
        if sl is None:
            continue
        sl = tuple(
            slice(max(0, s.start - margin), min(dim, s.stop + margin))
            for s, dim in zip(sl, labels.shape)
        )
        cell = labels[sl] == idx + 1
        d = _ndi.distance_transform_edt(~cell)
        dist = np.sqrt(np.rint(d**2))
        acc[sl] += np.maximum(params.border_width - dist, 0.0)
    w = 1.0 + params.magnitude * acc
    if params.balance == "class_frequency":
        fg = labels > 0
        n = labels.size
        counts = np.array([n - fg.sum(), fg.sum()], np.float64)
        factors = np.divide(n, 2.0 * counts, out=np.zeros(2), where=counts > 0)
        w *= factors[fg.astype(np.int64)]
    return w.astype(np.float32)


def weighted_cross_entropy(
    pred: np.ndarray, target: np.ndarray, weights: np.ndarray
) -> float:
    """Weighted binary cross-entropy, normalized by the total weight.

    Predictions are clipped to [1e-7, 1 - 1e-7] before the log.  Raises if
    the weights sum to zero.
    """
    pred = raster.as_probability(pred)
    target = raster.as_mask(target)
    weights = raster.as_gray(weights)
    if not (pred.shape == target.shape == weights.shape):
        raise ValueError("pred, target and weights must share one shape")
    if (weights < 0).any():
        raise ValueError("weights must be non-negative")
    total = float(weights.sum(dtype=np.float64))
    if total == 0.0:
        raise ValueError("weights sum to zero")
    p = np.clip(pred.astype(np.float64), 1e-7, 1.0 - 1e-7)
    p_true = np.where(target, p, 1.0 - p)
    loss = (weights.astype(np.float64) * -np.log(p_true)).sum()
    return float(loss / total)


@dataclass(frozen=True)
class ElasticParams:
    """Smoothed random displacement field: amplitude and smoothing radius."""

    alpha: float = 300.0
    sigma: float = 12.0


@dataclass(frozen=True)
class AugmentationSpec:
    """What the augmentation may do; draws happen per sample."""

    scale_range: tuple[float, float] = (0.6, 1.4)
    rotate: bool = True
    flip: bool = True
    elastic: ElasticParams | None = None


@dataclass(frozen=True)
class AugmentDraw:
    """One concrete augmentation: the sampled transform parameters."""

    scale: float = 1.0
    angle: float = 0.0
    flip: bool = False
    elastic_seed: int | None = None


def draw_augmentation(spec: AugmentationSpec, rng: np.random.Generator) -> AugmentDraw:
    """Sample a concrete draw; consumption order is scale, angle, flip,
    elastic seed, so a given generator state always yields the same draw."""
    lo, hi = spec.scale_range
    if not 0 < lo <= hi:
        raise ValueError(f"bad scale range: {spec.scale_range}")
    scale = float(rng.uniform(lo, hi))
    angle = float(rng.uniform(0.0, 2.0 * math.pi)) if spec.rotate else 0.0
    flip = bool(rng.random() < 0.5) if spec.flip else False
    eseed = int(rng.integers(0, 2**31)) if spec.elastic is not None else None
    return AugmentDraw(scale=scale, angle=angle, flip=flip, elastic_seed=eseed)


def augment(
    image: np.ndarray,
    labels: np.ndarray | None,
    spec: AugmentationSpec,
    draw: AugmentDraw,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Apply one augmentation draw to an image and its label map.

    The forward transform is scale, then rotation about the image centre,
    then an optional horizontal flip, then the optional elastic warp.  The
    output keeps the input dimensions; samples falling outside the domain
    mirror at the borders.  Images interpolate bilinearly, labels by
    nearest neighbour, so no new label value can appear.
    """
    image = raster.as_gray(image)
    if labels is not None:
        labels = raster.as_labels(labels)
        if labels.shape != image.shape:
            raise ValueError("image and labels must share one shape")
    h, w = image.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    if spec.elastic is not None and draw.elastic_seed is not None:
        erng = np.random.default_rng(draw.elastic_seed)
        disp = erng.uniform(-1.0, 1.0, (2, h, w))  # row field first, then column
        ys = ys + spec.elastic.alpha * _ndi.gaussian_filter(disp[0], spec.elastic.sigma)
        xs = xs + spec.elastic.alpha * _ndi.gaussian_filter(disp[1], spec.elastic.sigma)

    if draw.flip:
        xs = (w - 1) - xs
    fy = ys - cy
    fx = xs - cx
    cos_t = math.cos(draw.angle)
    sin_t = math.sin(draw.angle)
    ry = (fy * cos_t + fx * sin_t) / draw.scale + cy
    rx = (-fy * sin_t + fx * cos_t) / draw.scale + cx

    # snap all-but-exact integer coordinates so right-angle draws stay
    # pixel-identical despite trig roundoff
    ry = np.where(np.abs(ry - np.rint(ry)) < 1e-9, np.rint(ry), ry)
    rx = np.where(np.abs(rx - np.rint(rx)) < 1e-9, np.rint(rx), rx)

    out_img = _ndi.map_coordinates(image, [ry, rx], order=1, mode="reflect").astype(
        np.float32
    )
    out_lab = None
    if labels is not None:
        out_lab = _ndi.map_coordinates(labels, [ry, rx], order=0, mode="reflect")
    return out_img, out_lab

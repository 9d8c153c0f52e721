"""Raster conventions shared by every stage of the pipeline.

All images are 2-D single-channel numpy arrays.  Grayscale payloads are
float32, probability maps are float32 in [0, 1], masks are bool and label
maps are int32 with 0 meaning background.  Label maps are kept in canonical
order: labels run 1..N by the raster-scan position of each component's
first pixel.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage as _ndi

__all__ = [
    "as_gray",
    "as_probability",
    "as_mask",
    "as_labels",
    "quantize",
    "dequantize",
    "connectivity_structure",
    "connected_components",
    "relabel_canonical",
    "PadInfo",
    "pad_to_multiple",
    "read_image",
    "write_image",
    "read_probability",
    "write_probability",
    "read_labels",
    "write_labels",
]

PROB_TOL = 1e-6  # slack allowed outside [0, 1] before rejecting a probability map


def _require_2d(arr: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    return arr


def as_gray(img: np.ndarray) -> np.ndarray:
    """Validate and convert an image to a float32 grayscale array."""
    img = _require_2d(img, "image")
    out = np.ascontiguousarray(img, dtype=np.float32)
    if not np.isfinite(out).all():
        raise ValueError("image contains non-finite values")
    return out


def as_probability(img: np.ndarray) -> np.ndarray:
    """Validate a per-pixel probability map; values must lie in [0, 1]."""
    out = as_gray(img)
    lo = float(out.min())
    hi = float(out.max())
    if lo < -PROB_TOL or hi > 1.0 + PROB_TOL:
        raise ValueError(f"probability map outside [0, 1]: min={lo}, max={hi}")
    if lo < 0.0 or hi > 1.0:
        out = np.clip(out, 0.0, 1.0)
    return out


def as_mask(mask: np.ndarray) -> np.ndarray:
    """Validate and convert a binary mask to bool."""
    mask = _require_2d(mask, "mask")
    if mask.dtype == bool:
        return np.ascontiguousarray(mask)
    vals = np.unique(mask)
    if not np.isin(vals, (0, 1)).all():
        raise ValueError("mask must contain only 0/1 values")
    return np.ascontiguousarray(mask != 0)


def as_labels(labels: np.ndarray) -> np.ndarray:
    """Validate and convert a label map to int32; 0 is background."""
    labels = _require_2d(labels, "label map")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"label map must be integer, got {labels.dtype}")
    if labels.min() < 0:
        raise ValueError("label map contains negative labels")
    return np.ascontiguousarray(labels, dtype=np.int32)


def quantize(img: np.ndarray) -> np.ndarray:
    """Map a [0, 1] probability map onto the 0..255 integer scale.

    Every stated threshold operates on this scale, so quantization is a
    single shared rounding rule: round(v * 255).
    """
    img = as_probability(img)
    return np.rint(img * 255.0).astype(np.uint8)


def dequantize(img: np.ndarray) -> np.ndarray:
    """Inverse of :func:`quantize` up to rounding: v / 255 as float32."""
    img = _require_2d(img, "image")
    if img.dtype != np.uint8:
        raise ValueError(f"dequantize expects uint8, got {img.dtype}")
    return (img.astype(np.float32)) / np.float32(255.0)


def connectivity_structure(connectivity: int) -> np.ndarray:
    """3x3 structuring element for 4- or 8-connectivity."""
    if connectivity == 4:
        return np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], bool)
    if connectivity == 8:
        return np.ones((3, 3), bool)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def relabel_canonical(labels: np.ndarray) -> np.ndarray:
    """Relabel so labels are 1..N ordered by each component's first raster pixel.

    Components keep their pixel sets; only the numbering changes.  Assumes
    each positive value already denotes one region (not necessarily
    connected; connectivity is the caller's concern).
    """
    labels = as_labels(labels)
    flat = labels.ravel()
    uniq, first = np.unique(flat, return_index=True)
    keep = uniq > 0
    uniq = uniq[keep]
    first = first[keep]
    if uniq.size == 0:
        return np.zeros_like(labels)
    order = np.argsort(first, kind="stable")
    mapping = np.zeros(int(uniq.max()) + 1, np.int32)
    mapping[uniq[order]] = np.arange(1, uniq.size + 1, dtype=np.int32)
    return mapping[labels]


def connected_components(mask: np.ndarray, connectivity: int = 8) -> np.ndarray:
    """Label connected components of a mask in canonical raster order."""
    mask = as_mask(mask)
    raw, n = _ndi.label(mask, structure=connectivity_structure(connectivity))
    if n == 0:
        return np.zeros(mask.shape, np.int32)
    return relabel_canonical(raw.astype(np.int32))


@dataclass(frozen=True)
class PadInfo:
    """Placement of the original raster inside a padded one."""

    top: int
    left: int
    height: int
    width: int

    def crop(self, img: np.ndarray) -> np.ndarray:
        """Cut the original region back out of a padded array."""
        return img[self.top : self.top + self.height, self.left : self.left + self.width]


def pad_to_multiple(
    img: np.ndarray, multiple: int = 16, mode: str = "symmetric"
) -> tuple[np.ndarray, PadInfo]:
    """Pad an image so both dimensions are divisible by ``multiple``.

    The original content is centered; when the total padding is odd the
    extra row/column goes to the bottom/right.  ``mode`` is any numpy pad
    mode; mirrored borders are the default, constant zero is the other
    supported convention.

    Returns the padded image and a :class:`PadInfo` whose ``crop`` undoes
    the padding.
    """
    img = _require_2d(img, "image")
    if multiple < 1:
        raise ValueError("multiple must be >= 1")
    h, w = img.shape
    ph = (-h) % multiple
    pw = (-w) % multiple
    top, left = ph // 2, pw // 2
    pads = ((top, ph - top), (left, pw - left))
    kwargs = {"constant_values": 0} if mode == "constant" else {}
    padded = np.pad(img, pads, mode=mode, **kwargs)
    return padded, PadInfo(top=top, left=left, height=h, width=w)


# ---------------------------------------------------------------------------
# File I/O.  8/16-bit PNG and TIFF cover every raster the pipeline exchanges;
# probabilities travel as 16-bit rasters scaled by 65535.

_PROB_SCALE = 65535.0


def read_image(path: str | Path) -> np.ndarray:
    """Read a single-channel raster, preserving its bit depth."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FileNotFoundError(f"cannot read image: {path}")
    if img.ndim == 3:
        # tolerate gray content stored with redundant channels
        if not (img[..., :1] == img[..., 1:3]).all():
            raise ValueError(f"expected single-channel image: {path}")
        img = img[..., 0]
    return img


def write_image(path: str | Path, img: np.ndarray) -> None:
    """Write a uint8/uint16 raster (or float32, TIFF only)."""
    img = np.asarray(img)
    if img.dtype not in (np.uint8, np.uint16, np.float32):
        raise ValueError(f"unsupported raster dtype {img.dtype}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), img):
        raise IOError(f"cannot write image: {path}")


def read_probability(path: str | Path) -> np.ndarray:
    """Read a probability map stored as an 8- or 16-bit raster."""
    img = read_image(path)
    if img.dtype == np.uint16:
        return (img.astype(np.float32) / np.float32(_PROB_SCALE)).astype(np.float32)
    if img.dtype == np.uint8:
        return dequantize(img)
    if np.issubdtype(img.dtype, np.floating):
        return as_probability(img)
    raise ValueError(f"unsupported probability raster dtype {img.dtype}: {path}")


def write_probability(path: str | Path, prob: np.ndarray) -> None:
    """Write a probability map as a 16-bit raster scaled by 65535."""
    prob = as_probability(prob)
    write_image(path, np.rint(prob.astype(np.float64) * _PROB_SCALE).astype(np.uint16))


def read_labels(path: str | Path) -> np.ndarray:
    """Read an integer label map."""
    img = read_image(path)
    if not np.issubdtype(img.dtype, np.integer):
        raise ValueError(f"label raster must be integer, got {img.dtype}: {path}")
    return as_labels(img.astype(np.int32))


def write_labels(path: str | Path, labels: np.ndarray) -> None:
    """Write a label map as a 16-bit raster."""
    labels = as_labels(labels)
    if labels.max() > 65535:
        raise ValueError("label map exceeds 16-bit range")
    write_image(path, labels.astype(np.uint16))

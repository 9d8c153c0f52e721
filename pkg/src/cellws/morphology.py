"""Flat mathematical morphology on masks and grayscale images.

Structuring elements are rasterized disks: a pixel offset belongs to the
disk of diameter d exactly when its centre lies within d/2 of the origin
(inclusive), so diameter 1 is the single origin pixel.  Outside the image
domain, mask erosion sees background (border objects shrink), grayscale
erosion sees +inf and grayscale dilation -inf.
"""

from __future__ import annotations

import math

import cv2
import numpy as np
from scipy import ndimage as _ndi

from . import raster
from ._kernels import _reconstruct

__all__ = [
    "disk_footprint",
    "erode",
    "dilate",
    "open_image",
    "top_hat",
    "geodesic_reconstruct",
    "hdome",
    "dome_pixels",
    "distance_transform",
    "max_inscribed_diameter",
]


def disk_footprint(diameter: float) -> np.ndarray:
    """Rasterize a disk of the given diameter as a bool footprint.

    Inclusion is tested on squared integers (4*(dy^2+dx^2) <= d^2) so the
    boundary is handled exactly for integer diameters.
    """
    if diameter < 1:
        raise ValueError(f"diameter must be >= 1, got {diameter}")
    r = int(diameter / 2.0)
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    return 4.0 * (dy * dy + dx * dx) <= float(diameter) * float(diameter)


def _as_kernel(footprint: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(footprint, dtype=np.uint8)


def _morph(img: np.ndarray, diameter: float, op: str) -> np.ndarray:
    kernel = _as_kernel(disk_footprint(diameter))
    if img.dtype == bool:
        border = 0.0  # outside the domain is background either way
        src = img.astype(np.uint8)
    else:
        border = math.inf if op == "erode" else -math.inf
        src = np.ascontiguousarray(img, dtype=np.float32)
    fn = cv2.erode if op == "erode" else cv2.dilate
    out = fn(src, kernel, borderType=cv2.BORDER_CONSTANT, borderValue=border)
    return out.astype(bool) if img.dtype == bool else out


def erode(img: np.ndarray, diameter: float) -> np.ndarray:
    """Flat erosion by a rasterized disk; accepts bool masks or grayscale."""
    img = np.asarray(img)
    if img.dtype != bool:
        img = raster.as_gray(img)
    return _morph(img, diameter, "erode")


def dilate(img: np.ndarray, diameter: float) -> np.ndarray:
    """Flat dilation by a rasterized disk; accepts bool masks or grayscale."""
    img = np.asarray(img)
    if img.dtype != bool:
        img = raster.as_gray(img)
    return _morph(img, diameter, "dilate")


def open_image(img: np.ndarray, diameter: float) -> np.ndarray:
    """Morphological opening: erosion then dilation with the same disk."""
    return dilate(erode(img, diameter), diameter)


def top_hat(img: np.ndarray, diameter: float) -> np.ndarray:
    """White top-hat: image minus its opening.  Non-negative by construction."""
    img = raster.as_gray(img)
    return img - open_image(img, diameter)


def geodesic_reconstruct(
    marker: np.ndarray, ceiling: np.ndarray, connectivity: int = 8
) -> np.ndarray:
    """Grayscale reconstruction by dilation of ``marker`` under ``ceiling``.

    Returns the largest image that is <= ceiling everywhere and reachable
    from the marker by repeated unit dilations clipped to the ceiling.  The
    result is the exact fixed point, not a truncated iteration.
    """
    marker = raster.as_gray(marker)
    ceiling = raster.as_gray(ceiling)
    if marker.shape != ceiling.shape:
        raise ValueError(f"shape mismatch: {marker.shape} vs {ceiling.shape}")
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    if (marker > ceiling).any():
        raise ValueError("marker exceeds ceiling")
    rec = marker.copy()
    _reconstruct(rec, ceiling, connectivity == 8)
    return rec


def hdome(img: np.ndarray, h: float, connectivity: int = 8) -> np.ndarray:
    """Extract the h-dome of an image: img minus reconstruct(img - h, img).

    The marker is floored at the image minimum, so a constant image has an
    all-zero dome and the dome of the global maximum saturates at
    min(h, value range).  Dome values always lie in [0, h].
    """
    if h <= 0:
        raise ValueError(f"h must be > 0, got {h}")
    img = raster.as_gray(img)
    marker = np.maximum(img - np.float32(h), img.min())
    return img - geodesic_reconstruct(marker, img, connectivity)


def dome_pixels(img: np.ndarray, h: int, connectivity: int = 8) -> np.ndarray:
    """Pixels whose dome value reaches ``h`` exactly.

    Intended for integer-valued images (the 0..255 scale); the input is
    rounded so the equality test is exact.  Selected pixels sit at local
    structures whose dynamics reach h.
    """
    if h < 1 or int(h) != h:
        raise ValueError(f"h must be a positive integer, got {h}")
    img = np.rint(raster.as_gray(img)).astype(np.float32)
    dome = hdome(img, int(h), connectivity)
    return dome == np.float32(h)


def _edt_squared(mask: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest background pixel.

    Pixels outside the image count as background.  Returns int64; zero on
    background pixels.
    """
    mask = raster.as_mask(mask)
    if not mask.any():
        return np.zeros(mask.shape, np.int64)
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    d = _ndi.distance_transform_edt(padded)
    return np.rint(d[1:-1, 1:-1] ** 2).astype(np.int64)


def distance_transform(mask: np.ndarray) -> np.ndarray:
    """Euclidean distance from every pixel to the nearest mask pixel.

    Distance is zero on the mask itself.  An empty mask yields a constant
    sentinel larger than the image diagonal.
    """
    mask = raster.as_mask(mask)
    if not mask.any():
        h, w = mask.shape
        sentinel = math.hypot(h, w) + 1.0
        return np.full(mask.shape, sentinel, np.float32)
    d = _ndi.distance_transform_edt(~mask)
    sq = np.rint(d**2)
    return np.sqrt(sq).astype(np.float32)


def max_inscribed_diameter(cell: np.ndarray) -> float:
    """Diameter of the largest rasterized disk that fits inside the mask.

    A disk of diameter d placed at pixel p fits iff the nearest background
    pixel is strictly farther than d/2, i.e. 4*edt^2(p) > d^2; maximizing
    over p gives isqrt(4*max_edt^2 - 1).  A single pixel yields 1.
    """
    cell = raster.as_mask(cell)
    if not cell.any():
        raise ValueError("empty mask has no inscribed disk")
    n = int(_edt_squared(cell).max())
    return float(math.isqrt(4 * n - 1))

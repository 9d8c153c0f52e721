"""Ground-truth-derived probability maps.

Stands in for the CNN outputs the pipeline normally consumes: reference
rasters are Gaussian-blurred into soft maps, optionally perturbed with
uniform noise.  This makes the whole chain testable end to end without any
trained model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as _ndi

from . import raster
from .dataprep import make_reference

__all__ = ["OracleSpec", "oracle_predictions", "predictions_from_masks"]


@dataclass(frozen=True)
class OracleSpec:
    """Blur radius, marker erosion ratio, and optional noise amplitude."""

    sigma: float = 2.0
    size_ratio: float = 0.6
    noise: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0.0 <= self.noise < 0.5:
            raise ValueError("noise must lie in [0, 0.5)")


def predictions_from_masks(
    marker_mask: np.ndarray,
    fg_mask: np.ndarray,
    spec: OracleSpec = OracleSpec(),
    rng: np.random.Generator | None = None,
    marker_sigma: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Blur binary reference masks into soft (marker, foreground) maps.

    Sigma 0 returns the binary masks unchanged.  When noise is enabled a
    generator must be supplied; the marker map draws first.  The marker
    blur can be overridden: near-point markers need a lighter blur than
    the foreground to stay above the extraction threshold.
    """
    marker_mask = raster.as_mask(marker_mask)
    fg_mask = raster.as_mask(fg_mask)
    if marker_mask.shape != fg_mask.shape:
        raise ValueError("marker and foreground masks must share one shape")
    if marker_sigma is None:
        marker_sigma = spec.sigma
    marker = _ndi.gaussian_filter(marker_mask.astype(np.float32), marker_sigma)
    fg = _ndi.gaussian_filter(fg_mask.astype(np.float32), spec.sigma)
    if spec.noise > 0.0:
        if rng is None:
            raise ValueError("noise requires a random generator")
        marker = marker + rng.uniform(-spec.noise, spec.noise, marker.shape)
        fg = fg + rng.uniform(-spec.noise, spec.noise, fg.shape)
    marker = np.clip(marker, 0.0, 1.0).astype(np.float32)
    fg = np.clip(fg, 0.0, 1.0).astype(np.float32)
    return marker, fg


def oracle_predictions(
    labels: np.ndarray,
    spec: OracleSpec = OracleSpec(),
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Derive (marker, foreground) probability maps from instance labels
    via the reference-output generator at ``spec.size_ratio``."""
    labels = raster.as_labels(labels)
    refs = make_reference(labels, spec.size_ratio)
    return predictions_from_masks(refs.markers, refs.foreground, spec, rng)

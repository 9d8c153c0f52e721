"""Cell instance segmentation from per-pixel probability maps.

The pipeline turns two externally produced probability maps per frame
(cell markers and cell foreground) into an instance label map: markers
are extracted by morphological filtering and h-dome selection, then a
marker-controlled watershed floods the inverted foreground map inside
the thresholded cell region.  Supporting modules cover training-data
preparation (normalization, reference outputs, weight maps,
augmentation), threshold calibration, and SEG/DET/OP_CSB evaluation.
"""

from .config import DatasetConfig, load_config, save_config
from .dataprep import (
    AugmentationSpec,
    AugmentDraw,
    ElasticParams,
    ReferenceOutputs,
    WeightParams,
    augment,
    draw_augmentation,
    make_reference,
    markers_from_weak,
    normalize,
    weight_map,
    weighted_cross_entropy,
)
from .errors import DataError, UsageError
from .markerseg import (
    PipelineParams,
    calibrate_foreground_threshold,
    cell_region_mask,
    distance_baseline,
    extract_markers,
    marker_filter_diameter,
    remove_border_cells,
    segment_image,
    segmentation_function,
    watershed,
)
from .metrics import (
    EvalReport,
    det_measure,
    evaluate_frames,
    jaccard,
    match_frame,
    op_csb,
    seg_measure,
)
from .morphology import (
    disk_footprint,
    distance_transform,
    dome_pixels,
    erode,
    dilate,
    geodesic_reconstruct,
    hdome,
    max_inscribed_diameter,
    open_image,
    top_hat,
)
from .oracle import OracleSpec, oracle_predictions, predictions_from_masks
from .synth import SynthParams, synth_dataset, synth_frame

__version__ = "0.1.0"

__all__ = [
    "AugmentDraw",
    "AugmentationSpec",
    "DataError",
    "DatasetConfig",
    "ElasticParams",
    "EvalReport",
    "OracleSpec",
    "PipelineParams",
    "ReferenceOutputs",
    "SynthParams",
    "UsageError",
    "WeightParams",
    "augment",
    "calibrate_foreground_threshold",
    "cell_region_mask",
    "det_measure",
    "dilate",
    "disk_footprint",
    "distance_baseline",
    "distance_transform",
    "dome_pixels",
    "draw_augmentation",
    "erode",
    "evaluate_frames",
    "extract_markers",
    "geodesic_reconstruct",
    "hdome",
    "jaccard",
    "load_config",
    "make_reference",
    "marker_filter_diameter",
    "markers_from_weak",
    "match_frame",
    "max_inscribed_diameter",
    "normalize",
    "op_csb",
    "open_image",
    "oracle_predictions",
    "predictions_from_masks",
    "remove_border_cells",
    "save_config",
    "seg_measure",
    "segment_image",
    "segmentation_function",
    "synth_dataset",
    "synth_frame",
    "top_hat",
    "watershed",
    "weight_map",
    "weighted_cross_entropy",
]

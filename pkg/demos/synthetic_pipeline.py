"""The whole pipeline in memory on generated frames, no files involved.

Generate elliptical-cell frames, derive probability maps from the ground
truth (the CNN stand-in), calibrate the foreground threshold, segment,
and score the result against the ground truth it came from.
"""

import numpy as np

from cellws.markerseg import (
    PipelineParams,
    calibrate_foreground_threshold,
    segment_image,
)
from cellws.metrics import evaluate_frames
from cellws.morphology import max_inscribed_diameter
from cellws.oracle import OracleSpec, oracle_predictions
from cellws.synth import SynthParams, synth_frame

N_FRAMES = 8
spec = OracleSpec(sigma=2.0, size_ratio=0.6)

frames = []
for i in range(N_FRAMES):
    # frame i depends only on (seed, i), so any subset regenerates identically
    _, labels, _ = synth_frame(np.random.default_rng([0, i]), SynthParams())
    marker_prob, fg_prob = oracle_predictions(labels, spec)
    frames.append((labels, marker_prob, fg_prob))
print("frames:", N_FRAMES, " cells:", sum(int(f[0].max()) for f in frames))

# sweep all 256 foreground thresholds once, pooled over the frames
t_c, curve = calibrate_foreground_threshold(
    [(fg, labels > 0) for labels, _, fg in frames]
)
print("calibrated foreground threshold:", t_c, " pooled Jaccard:", round(curve[t_c], 4))

diameters = [
    max_inscribed_diameter(labels == lab)
    for labels, _, _ in frames
    for lab in np.unique(labels)
    if lab
]
params = PipelineParams(
    contrast=30,
    foreground_threshold=t_c,
    marker_threshold=0.6,
    size_ratio=0.4,
    min_cell_diameter=min(diameters),
)
print("marker filter diameter:", params.filter_diameter())

results = [
    (labels, segment_image(marker, fg, params)) for labels, marker, fg in frames
]
report = evaluate_frames(results)
print(f"SEG {report.seg:.4f}  DET {report.det:.4f}  OP_CSB {report.op_csb:.4f}")

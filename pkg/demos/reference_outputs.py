"""Training references from instance labels: markers, foreground, weights.

Markers are eroded copies of the cells (size ratio k); the weight map
raises the loss near cell boundaries so a pixel classifier learns the
gaps between touching cells.
"""

import numpy as np

from cellws.dataprep import (
    WeightParams,
    make_reference,
    weight_map,
    weighted_cross_entropy,
)

labels = np.zeros((64, 96), np.int32)
labels[8:32, 6:30] = 1
labels[8:32, 30:54] = 2  # touches cell 1 along one column

for k in (1.0, 0.6, 0.2):
    ref = make_reference(labels, size_ratio=k)
    print(
        f"k={k}: marker pixels per cell =",
        [int((ref.markers & (labels == lab)).sum()) for lab in (1, 2)],
    )
# k=1 would reproduce the touching masks, so the offenders are shrunk
# until a background gap separates them

weights = weight_map(labels, WeightParams(magnitude=0.075, border_width=20.0))
print("weight between the touching cells:", round(float(weights.max()), 4))
print("weight far from any cell:", float(weights[-1, -1]))  # beyond the border band

# the weights feed a weighted cross-entropy; a sharper penalty between
# cells makes boundary mistakes expensive
pred = np.full(labels.shape, 0.5, np.float32)
print("loss of an uninformed predictor:", round(weighted_cross_entropy(pred, labels > 0, weights), 6))

"""Scoring instance masks: SEG, DET and their mean.

SEG averages Jaccard overlap over reference cells, counting only segments
that cover more than half a cell.  DET penalizes detection events (missed
cell 10, spurious segment 1, needed split 5) against ten points per cell.
"""

import numpy as np

from cellws.metrics import det_measure, evaluate_frames, op_csb, seg_measure

refs = np.zeros((20, 30), np.int32)
refs[2:10, 2:12] = 1
refs[2:10, 16:26] = 2
refs[12:18, 4:24] = 3

good = refs.copy()
merged = refs.copy()
merged[merged == 2] = 1  # one segment covering two cells

seg, per_region = seg_measure(refs, good)
print("perfect SEG:", seg)

seg, per_region = seg_measure(refs, merged)
print("merged SEG: ", round(seg, 4))
for entry in per_region:
    print("  ", entry)

det, events = det_measure(refs, merged)
print("merged DET: ", round(det, 4), "events:", events)

print("OP_CSB:", op_csb(seg, det))

# multi-frame evaluation pools regions and events before dividing,
# so frames with many cells weigh more than sparse ones
report = evaluate_frames([(refs, good), (refs, merged)])
print(report.to_json())

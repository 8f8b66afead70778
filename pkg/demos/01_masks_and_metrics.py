"""
Label maps, run-length storage and detection metrics
====================================================

A walk through the lowest layer of the toolkit: build a pair of tiny
instance label maps, store one as run-length JSON, then score the
"prediction" against the "ground truth" at IoU > 0.5.
"""

import numpy as np

from nucurate import (
    InstanceMask,
    compute_metrics,
    decode_rle,
    encode_rle,
    instance_stats,
    match_instances,
    metrics_report,
    pairwise_iou,
    rle_to_json,
    validate,
)

# ----------------------------------------------------------------------
# 1. A label map is a 2-D uint16 raster: 0 is background, each positive
#    value is one nucleus.  This ground truth has three nuclei.
# ----------------------------------------------------------------------
gt_grid = np.zeros((12, 12), dtype=np.uint16)
gt_grid[1:5, 1:5] = 1      # a 4x4 nucleus
gt_grid[1:5, 7:11] = 2     # another, to the right
gt_grid[7:11, 2:6] = 3     # a third, below
gt = InstanceMask.from_array(gt_grid)
print("ground truth instances:", gt.instance_ids())

for stats in instance_stats(gt):
    print(f"  id={stats.id} area={stats.area} centroid={stats.centroid}")

# ----------------------------------------------------------------------
# 2. Round trip through the run-length encoding.  The JSON form is what
#    the review service serves to browsers; it must be bit-exact.
# ----------------------------------------------------------------------
doc = encode_rle(gt)
print("\nRLE document:", rle_to_json(doc)[:80], "...")
assert decode_rle(doc) == gt
print("round trip: bit-exact")

# ----------------------------------------------------------------------
# 3. A prediction that finds two nuclei (one shifted by a pixel), misses
#    the third, and hallucinates a fourth in an empty corner.
# ----------------------------------------------------------------------
pred_grid = np.zeros((12, 12), dtype=np.uint16)
pred_grid[1:5, 1:5] = 1        # perfect hit on gt id 1
pred_grid[2:6, 7:11] = 2       # one-pixel-shifted hit on gt id 2
pred_grid[8:11, 8:11] = 7      # spurious
pred = InstanceMask.from_array(pred_grid)
print("\nvalidation findings:", validate(pred))

# ----------------------------------------------------------------------
# 4. IoU on raw pixel counts, then strict > 0.5 matching.  The shifted
#    nucleus overlaps 12 of its 4 + 16 pixels: IoU = 12/20 = 0.6 > 0.5.
# ----------------------------------------------------------------------
table = pairwise_iou(gt, pred)
for gid, pid, iou in table.entries:
    print(f"gt {gid} vs pred {pid}: IoU = {iou:.3f}")

match = match_instances(table, threshold=0.5)
print(f"tp={match.tp} fp={match.fp} fn={match.fn}")
metrics = compute_metrics(match)
print(f"precision={metrics.precision:.3f} recall={metrics.recall:.3f} f1={metrics.f1:.3f}")

# ----------------------------------------------------------------------
# 5. The same numbers in report form, as `nucurate evaluate` emits them.
# ----------------------------------------------------------------------
report = metrics_report([("demo_patch", match)], mode="micro")
print("\nreport:", report)

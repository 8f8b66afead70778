"""
Driving the review service end to end
=====================================

Stage a tiny patch store, run the two-round review workflow in process,
disagree on purpose to trigger escalation, correct a consensus-bad patch,
and show that killing the service loses nothing: the event log replays to
byte-identical statistics.
"""

import json
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from nucurate import InstanceMask, ReviewService, encode_rle, rle_to_json, write_raters

root = Path(tempfile.mkdtemp(prefix="review_demo_"))
patches = root / "patches"
patches.mkdir(parents=True)

# ----------------------------------------------------------------------
# 1. The store layout: <patch>.png images with one mask per model, either
#    <patch>.<model>.mask.png (16-bit) or <patch>.<model>.rle.json.
# ----------------------------------------------------------------------
rng = np.random.default_rng(0)
for pid in ("p1", "p2"):
    Image.new("RGB", (32, 32), (188, 130, 160)).save(patches / f"{pid}.png")
    for mid in ("a", "b"):
        grid = np.zeros((32, 32), dtype=np.uint16)
        y, x = rng.integers(2, 20, size=2)
        grid[y : y + 8, x : x + 8] = 1
        if mid == "a":
            Image.fromarray(grid).save(patches / f"{pid}.{mid}.mask.png")
        else:
            (patches / f"{pid}.{mid}.rle.json").write_text(
                rle_to_json(encode_rle(InstanceMask.from_array(grid)))
            )

write_raters(root, {"ann": [1], "ben": [1], "referee": [2]})
service = ReviewService(root)
print("staged items:", len(service.items), "models:", service.models)

# ----------------------------------------------------------------------
# 2. Round 1: two raters pull from the queue.  They agree on everything
#    except patch p1 / model a, where they clash on purpose.
# ----------------------------------------------------------------------
def rate(rater, pid, mid, label, round=1, uncertain=False):
    service.submit_rating(
        {
            "patch_id": pid,
            "model_id": mid,
            "rater_id": rater,
            "round": round,
            "rating": label,
            "uncertain": uncertain,
        }
    )

item = service.next_item("ann", 1)
print("queue served ann:", item.patch_id, item.model_id)

rate("ann", "p1", "a", "good")
rate("ben", "p1", "a", "bad")          # conflict -> escalation
rate("ann", "p1", "b", "bad")
rate("ben", "p1", "b", "bad")
rate("ann", "p2", "a", "bad")
rate("ben", "p2", "a", "bad")
rate("ann", "p2", "b", "bad")
rate("ben", "p2", "b", "bad")

print("p1/a after round 1:", service.items[("p1", "a", 1)].status)
print("round-2 queue depth:", service.stats()["queue_depths"]["round2"])

# ----------------------------------------------------------------------
# 3. Round 2: the referee settles the conflict.  The latest round-2
#    verdict is final.
# ----------------------------------------------------------------------
rate("referee", "p1", "a", "bad", round=2)
final = service.final_table()
print("final p1/a:", final.get("p1", "a").label)

# ----------------------------------------------------------------------
# 4. Every model now rates p2 bad, so p2 qualifies for a hand-drawn
#    correction (as run-length JSON).  Good patches are rejected with a
#    precondition error instead.
# ----------------------------------------------------------------------
service.submit_correction(
    "p2", {"width": 32, "height": 32, "instances": [{"id": 1, "runs": [[70, 10]]}]}
)
print("corrections stored:", list(service.corrections))

# ----------------------------------------------------------------------
# 5. Crash recovery: build a second service over the same directory.  It
#    re-reads the append-only event log and lands on identical bytes.
# ----------------------------------------------------------------------
before = service.stats_json()
revived = ReviewService(root)
assert revived.stats_json() == before
print("\nreplayed stats are byte-identical")
print(json.dumps(json.loads(before), indent=2)[:400], "...")

"""
From per-model ratings to a weighted training schedule
======================================================

The curation path after review: fuse three models' quality ratings,
measure how often the models agree, assemble a fine-tuning manifest,
carve nested subsets, and draw a class-balanced sampling schedule.
"""

from nucurate import (
    Rating,
    RatingRecord,
    RatingTable,
    SamplingConfig,
    agreement_breakdown,
    agreement_matrix,
    build_manifest,
    build_table,
    distribution,
    fuse_ratings,
    incremental_split,
    sample_epoch,
    sampling_weights,
)

# ----------------------------------------------------------------------
# 1. Four patches rated by three models (a, b, c).  In production these
#    records come out of the review service's event log.
# ----------------------------------------------------------------------
VERDICTS = {
    "a": ("good", "good", "bad", "medium"),
    "b": ("good", "bad", "bad", "medium"),
    "c": ("bad", "bad", "bad", "good"),
}
records = [
    RatingRecord(f"p{i + 1}", model, "rater1", 1, Rating.parse(label), timestamp=float(i))
    for model, labels in VERDICTS.items()
    for i, label in enumerate(labels)
]
table = build_table(records, strict=False)

# ----------------------------------------------------------------------
# 2. The ensemble verdict per patch is the order-maximum: good beats
#    medium beats bad.  Only an all-bad patch stays bad.
# ----------------------------------------------------------------------
for patch in table.patches:
    ratings = [table.get(patch, m) for m in table.models]
    fused = fuse_ratings(ratings)
    print(patch, [r.label for r in ratings], "->", fused.label)

dist = distribution(table)
print("fused counts:", dist["fused"]["counts"])

# ----------------------------------------------------------------------
# 3. Inter-model agreement: the off-diagonal entries are the fraction of
#    patches on which a pair of models gave the same rating.
# ----------------------------------------------------------------------
matrix = agreement_matrix(table)
print("\nagreement between", matrix.models)
for row in matrix.values:
    print("  ", [f"{v:.2f}" for v in row])
print("breakdown:", agreement_breakdown(table)["good"])

# ----------------------------------------------------------------------
# 4. Build the training manifest.  good_only keeps every good-rated
#    (patch, model) mask as a pseudo-label; adding the corrected all-bad
#    patch p3 gives the combined strategy.
# ----------------------------------------------------------------------
manifest = build_manifest(table, corrections={"p3"}, strategy="combined")
print("\nmanifest:", manifest.class_counts())
for item in manifest.items:
    print("  ", item.item_id, item.class_label)

# ----------------------------------------------------------------------
# 5. Nested splits: the half-size subset is contained in the full set,
#    class by class, so learning curves stay comparable.
# ----------------------------------------------------------------------
halves = incremental_split(manifest, [0.5, 1.0], seed=7)
print("\nsplit sizes:", [s.n_train for s in halves])
assert {i.item_id for i in halves[0].items} <= {i.item_id for i in halves[1].items}

# ----------------------------------------------------------------------
# 6. Class-balancing weights.  With gamma = 0.85 the single corrected
#    patch is drawn far more often than its raw share; gamma = 0 keeps
#    plain uniform sampling.
# ----------------------------------------------------------------------
weighted = sampling_weights(manifest, SamplingConfig(gamma_s=0.85, seed=0))
for item in weighted.items:
    print(f"  {item.item_id:14s} weight={item.weight:.4f}")

schedule = sample_epoch(weighted, n_draws=12, seed=0)
print("\none epoch:", schedule)

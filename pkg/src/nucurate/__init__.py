"""Human-in-the-loop curation toolkit for multi-model nuclei instance segmentation.

The pieces, in pipeline order: extract patches from whole slides
(:mod:`nucurate.patches`), store and validate instance masks
(:mod:`nucurate.masks`), score predictions against ground truth
(:mod:`nucurate.metrics`), rate and fuse per-model quality verdicts
(:mod:`nucurate.ratings`), assemble weighted fine-tuning manifests
(:mod:`nucurate.enrichment`), and run the two-round review workflow over HTTP
(:mod:`nucurate.service`).  ``nucurate --help`` lists the batch front end.
"""

from .enrichment import (
    STRATEGIES,
    EnrichmentError,
    EnrichmentItem,
    EnrichmentManifest,
    SamplingConfig,
    build_manifest,
    incremental_split,
    read_manifest,
    sample_epoch,
    sampling_weights,
    write_manifest,
    write_schedule,
)
from .masks import (
    MAX_INSTANCE_ID,
    Finding,
    InstanceMask,
    InstanceStats,
    MaskError,
    RleDocument,
    RleInstance,
    decode_label_map,
    decode_rle,
    encode_rle,
    instance_stats,
    read_label_map,
    read_rle,
    rle_from_json,
    rle_from_payload,
    rle_to_json,
    validate,
    write_label_map,
    write_rle,
)
from .metrics import (
    IoUTable,
    MatchResult,
    Metrics,
    MetricsError,
    aggregate,
    compute_metrics,
    match_instances,
    metrics_report,
    pairwise_iou,
)
from .patches import (
    PatchError,
    PatchManifest,
    PatchRecord,
    QcConfig,
    QcResult,
    derive_seed,
    extract_patch,
    ingest_dataset,
    make_patch_id,
    qc_filter,
    read_patch_manifest,
    tile_image,
    write_patch_manifest,
)
from .ratings import (
    AgreementMatrix,
    Rating,
    RatingConfig,
    RatingError,
    RatingRecord,
    RatingTable,
    agreement_breakdown,
    agreement_matrix,
    auto_rate,
    build_table,
    capture_fraction,
    distribution,
    fuse_ratings,
    rate_capture,
    read_records,
    write_records,
)
from .service import ReviewService, create_app, write_raters

__version__ = "0.1.0"

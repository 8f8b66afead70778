"""IoU matching of predicted against ground-truth instances and detection metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .masks import InstanceMask, MaskError, _grid

__all__ = [
    "IoUTable",
    "MatchResult",
    "Metrics",
    "MetricsError",
    "aggregate",
    "compute_metrics",
    "match_instances",
    "metrics_report",
    "pairwise_iou",
]


class MetricsError(ValueError):
    """A matching threshold or aggregation request violates its contract."""


@dataclass(frozen=True)
class IoUTable:
    """Sparse IoU entries between GT and predicted instances.

    ``entries`` holds exactly the (gt_id, pred_id) pairs with nonzero pixel
    intersection; ``gt_areas`` / ``pred_areas`` cover every instance, including
    those with no overlap at all.
    """

    entries: tuple[tuple[int, int, float], ...]
    gt_areas: Mapping[int, int]
    pred_areas: Mapping[int, int]


@dataclass(frozen=True)
class MatchResult:
    """TP pairs plus unmatched prediction (FP) and GT (FN) ids at one threshold."""

    tp_pairs: tuple[tuple[int, int, float], ...]
    fp_ids: tuple[int, ...]
    fn_ids: tuple[int, ...]
    threshold: float

    @property
    def tp(self) -> int:
        return len(self.tp_pairs)

    @property
    def fp(self) -> int:
        return len(self.fp_ids)

    @property
    def fn(self) -> int:
        return len(self.fn_ids)


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def pairwise_iou(gt: InstanceMask, pred: InstanceMask) -> IoUTable:
    """IoU for every (gt, pred) instance pair with nonzero pixel intersection.

    IoU = |A∩B| / (|A| + |B| - |A∩B|), computed from raw pixel counts.
    """
    if (gt.width, gt.height) != (pred.width, pred.height):
        raise MaskError(
            f"mask dimensions differ: {gt.width}x{gt.height} vs {pred.width}x{pred.height}"
        )
    g = _grid(gt).reshape(-1).astype(np.int64)
    p = _grid(pred).reshape(-1).astype(np.int64)

    gt_ids, gt_counts = np.unique(g[g > 0], return_counts=True)
    pred_ids, pred_counts = np.unique(p[p > 0], return_counts=True)
    gt_areas = {int(i): int(c) for i, c in zip(gt_ids, gt_counts)}
    pred_areas = {int(i): int(c) for i, c in zip(pred_ids, pred_counts)}

    both = (g > 0) & (p > 0)
    # ids fit in 16 bits, so a single 32-bit key indexes the pair uniquely
    keys, inters = np.unique(g[both] * (1 << 16) + p[both], return_counts=True)
    entries = []
    for key, inter in zip(keys.tolist(), inters.tolist()):
        gid, pid = int(key >> 16), int(key & 0xFFFF)
        union = gt_areas[gid] + pred_areas[pid] - inter
        entries.append((gid, pid, inter / union))
    return IoUTable(entries=tuple(entries), gt_areas=gt_areas, pred_areas=pred_areas)


def match_instances(table: IoUTable, threshold: float = 0.5) -> MatchResult:
    """Match instances whose IoU is strictly greater than ``threshold``.

    For thresholds >= 0.5 the strict inequality makes the matching one-to-one
    by construction: two distinct instances cannot both overlap a third with
    IoU > 0.5.  Thresholds below 0.5 are rejected because that guarantee
    disappears.
    """
    if threshold < 0.5:
        raise MetricsError(f"threshold must be >= 0.5, got {threshold}")
    tp_pairs = tuple(
        (gid, pid, iou) for gid, pid, iou in table.entries if iou > threshold
    )
    matched_gt = {gid for gid, _, _ in tp_pairs}
    matched_pred = {pid for _, pid, _ in tp_pairs}
    if len(matched_gt) != len(tp_pairs) or len(matched_pred) != len(tp_pairs):
        raise AssertionError("IoU > 0.5 matching produced a duplicate instance")
    fp_ids = tuple(sorted(set(table.pred_areas) - matched_pred))
    fn_ids = tuple(sorted(set(table.gt_areas) - matched_gt))
    return MatchResult(tp_pairs=tp_pairs, fp_ids=fp_ids, fn_ids=fn_ids, threshold=threshold)


def compute_metrics(match: MatchResult) -> Metrics:
    """Precision, recall and F1 from a match result.

    Degenerate cases follow the all-empty convention: with nothing to predict
    and nothing predicted all three metrics are 1.0; a metric whose denominator
    is zero while errors exist elsewhere is 0.0.
    """
    tp, fp, fn = match.tp, match.fp, match.fn
    return _metrics_from_counts(tp, fp, fn)


def _metrics_from_counts(tp: int, fp: int, fn: int) -> Metrics:
    if tp + fp + fn == 0:
        return Metrics(precision=1.0, recall=1.0, f1=1.0, tp=0, fp=0, fn=0)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn)
    return Metrics(precision=precision, recall=recall, f1=f1, tp=tp, fp=fp, fn=fn)


def aggregate(per_patch: Sequence[MatchResult], mode: str = "micro") -> Metrics:
    """Pool per-patch match results into one score.

    ``micro`` sums tp/fp/fn across patches before applying the metric
    formulas; ``macro`` averages the per-patch metrics (a patch with no GT and
    no predictions contributes 1.0).  The returned counts are the pooled sums
    in both modes.
    """
    if not per_patch:
        raise MetricsError("cannot aggregate an empty list of match results")
    if mode not in ("micro", "macro"):
        raise MetricsError(f"mode must be 'micro' or 'macro', got {mode!r}")
    tp = sum(m.tp for m in per_patch)
    fp = sum(m.fp for m in per_patch)
    fn = sum(m.fn for m in per_patch)
    if mode == "micro":
        return _metrics_from_counts(tp, fp, fn)
    per = [compute_metrics(m) for m in per_patch]
    n = len(per)
    return Metrics(
        precision=sum(m.precision for m in per) / n,
        recall=sum(m.recall for m in per) / n,
        f1=sum(m.f1 for m in per) / n,
        tp=tp,
        fp=fp,
        fn=fn,
    )


def metrics_report(
    per_patch: Sequence[tuple[str, MatchResult]], mode: str = "micro"
) -> dict:
    """Build the JSON-ready metrics report for a set of evaluated patches."""
    summary = aggregate([m for _, m in per_patch], mode=mode)
    return {
        "mode": mode,
        "precision": summary.precision,
        "recall": summary.recall,
        "f1": summary.f1,
        "tp": summary.tp,
        "fp": summary.fp,
        "fn": summary.fn,
        "per_patch": [
            {"patch_id": pid, "tp": m.tp, "fp": m.fp, "fn": m.fn}
            for pid, m in per_patch
        ],
    }

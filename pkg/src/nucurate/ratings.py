"""Rating taxonomy, automatic rating from GT, multi-model fusion and agreement analytics."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .masks import InstanceMask
from .metrics import match_instances, pairwise_iou

__all__ = [
    "AgreementMatrix",
    "Rating",
    "RatingConfig",
    "RatingError",
    "RatingRecord",
    "RatingTable",
    "agreement_breakdown",
    "agreement_matrix",
    "auto_rate",
    "build_table",
    "capture_fraction",
    "distribution",
    "fuse_ratings",
    "rate_capture",
    "read_records",
    "write_records",
]


class RatingError(ValueError):
    """A rating value, record or table violates its contract."""


class Rating(enum.IntEnum):
    """Prediction quality verdict, totally ordered bad < medium < good."""

    BAD = 0
    MEDIUM = 1
    GOOD = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: Union[str, "Rating"]) -> "Rating":
        if isinstance(value, Rating):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise RatingError(f"unknown rating {value!r}; expected good/medium/bad") from None


RATING_LABELS = tuple(r.label for r in (Rating.GOOD, Rating.MEDIUM, Rating.BAD))


@dataclass(frozen=True)
class RatingConfig:
    """Thresholds on the capture fraction that define good/medium/bad."""

    good_threshold: float = 0.90
    bad_threshold: float = 0.50
    iou_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not 0 < self.bad_threshold < self.good_threshold <= 1:
            raise RatingError(
                "need 0 < bad_threshold < good_threshold <= 1, got "
                f"bad={self.bad_threshold}, good={self.good_threshold}"
            )
        if self.iou_threshold < 0.5:
            raise RatingError(
                f"iou_threshold must be >= 0.5 (one-to-one matching), got {self.iou_threshold}"
            )


@dataclass(frozen=True)
class RatingRecord:
    """One rater's verdict on one model's mask for one patch."""

    patch_id: str
    model_id: str
    rater_id: str
    round: int
    rating: Rating
    uncertain: bool = False
    timestamp: float = 0.0  # UTC seconds

    def to_payload(self) -> dict:
        return {
            "patch_id": self.patch_id,
            "model_id": self.model_id,
            "rater_id": self.rater_id,
            "round": self.round,
            "rating": self.rating.label,
            "uncertain": self.uncertain,
            "timestamp": datetime.fromtimestamp(self.timestamp, tz=timezone.utc).isoformat(),
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "RatingRecord":
        try:
            ts = payload["timestamp"]
            if isinstance(ts, str):
                ts = datetime.fromisoformat(ts).timestamp()
            record = cls(
                patch_id=str(payload["patch_id"]),
                model_id=str(payload["model_id"]),
                rater_id=str(payload["rater_id"]),
                round=int(payload["round"]),
                rating=Rating.parse(payload["rating"]),
                uncertain=bool(payload["uncertain"]),
                timestamp=float(ts),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, RatingError):
                raise
            raise RatingError(f"malformed rating record: {exc!r}") from exc
        if record.round not in (1, 2):
            raise RatingError(f"round must be 1 or 2, got {record.round}")
        return record


def write_records(records: Iterable[RatingRecord], path: Union[str, Path]) -> None:
    """Write records as newline-delimited JSON, one per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_payload(), separators=(",", ":")) + "\n")


def read_records(path: Union[str, Path]) -> list[RatingRecord]:
    """Read rating records from newline-JSON.

    Accepts both plain rating files and service event logs: a line carrying
    a ``type`` field other than ``"rating"`` (e.g. a correction event) is
    skipped; untyped lines must be rating records.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            payload = json.loads(line)
            if payload.get("type", "rating") != "rating":
                continue
            records.append(RatingRecord.from_payload(payload))
    return records


@dataclass(frozen=True)
class RatingTable:
    """Final rating per (patch, model); round-2 verdicts override round-1."""

    ratings: Mapping[tuple[str, str], Rating]

    @property
    def patches(self) -> tuple[str, ...]:
        return tuple(sorted({p for p, _ in self.ratings}))

    @property
    def models(self) -> tuple[str, ...]:
        return tuple(sorted({m for _, m in self.ratings}))

    def get(self, patch_id: str, model_id: str) -> Rating | None:
        return self.ratings.get((patch_id, model_id))

    def patch_ratings(self, patch_id: str) -> dict[str, Rating]:
        return {m: r for (p, m), r in self.ratings.items() if p == patch_id}

    def complete_patches(self, models: Sequence[str] | None = None) -> tuple[str, ...]:
        """Patches carrying a final rating for every model."""
        models = tuple(models) if models is not None else self.models
        return tuple(
            p for p in self.patches
            if all((p, m) in self.ratings for m in models)
        )


def build_table(records: Sequence[RatingRecord], strict: bool = True) -> RatingTable:
    """Fold a rating log into final per-(patch, model) verdicts.

    The latest round-2 record wins; otherwise unanimous, certain round-1
    records decide.  Keys whose round-1 records conflict or carry an uncertain
    flag stay unresolved (absent) until a round-2 verdict lands.  With
    ``strict`` a round-2 record without a matching escalation is rejected.
    """
    grouped: dict[tuple[str, str], list[tuple[int, RatingRecord]]] = {}
    for seq, record in enumerate(records):
        if record.round not in (1, 2):
            raise RatingError(f"round must be 1 or 2, got {record.round}")
        grouped.setdefault((record.patch_id, record.model_id), []).append((seq, record))

    final: dict[tuple[str, str], Rating] = {}
    for key, entries in grouped.items():
        round1 = [(s, r) for s, r in entries if r.round == 1]
        round2 = [(s, r) for s, r in entries if r.round == 2]
        escalated = bool(round1) and (
            any(r.uncertain for _, r in round1)
            or len({r.rating for _, r in round1}) > 1
        )
        if round2:
            if strict and not escalated:
                raise RatingError(
                    f"round-2 record for {key} without an uncertain or "
                    "conflicting round-1 record"
                )
            _, latest = max(round2, key=lambda item: (item[1].timestamp, item[0]))
            final[key] = latest.rating
        elif round1 and not escalated:
            final[key] = round1[0][1].rating
    return RatingTable(ratings=final)


def rate_capture(fraction: float, cfg: RatingConfig = RatingConfig()) -> Rating:
    """Map a capture fraction to a rating.

    good iff fraction >= good_threshold; bad iff fraction < bad_threshold;
    medium otherwise.  Boundaries follow the inclusive-good / exclusive-bad
    convention so the three intervals partition [0, 1].
    """
    if not 0 <= fraction <= 1:
        raise RatingError(f"capture fraction must lie in [0, 1], got {fraction}")
    if fraction >= cfg.good_threshold:
        return Rating.GOOD
    if fraction < cfg.bad_threshold:
        return Rating.BAD
    return Rating.MEDIUM


def capture_fraction(
    gt: InstanceMask, pred: InstanceMask, cfg: RatingConfig = RatingConfig()
) -> float:
    """Detection recall at the configured IoU threshold: the fraction of GT
    instances matched one-to-one with IoU strictly above it."""
    table = pairwise_iou(gt, pred)
    if not table.gt_areas:
        raise RatingError("ground truth has no instances; capture fraction undefined")
    match = match_instances(table, threshold=cfg.iou_threshold)
    return match.tp / (match.tp + match.fn)


def auto_rate(
    gt: InstanceMask, pred: InstanceMask, cfg: RatingConfig = RatingConfig()
) -> Rating:
    """Rate a prediction against GT by its capture fraction."""
    return rate_capture(capture_fraction(gt, pred, cfg), cfg)


def fuse_ratings(per_model: Sequence[Rating]) -> Rating:
    """Ensemble verdict: the order-maximum of the per-model ratings.

    Equivalent to: good if any model is good; bad only if all are bad;
    medium otherwise.
    """
    if not per_model:
        raise RatingError("cannot fuse an empty list of ratings")
    return Rating(max(per_model))


@dataclass(frozen=True)
class AgreementMatrix:
    """Pairwise fraction of patches on which two models gave the same rating."""

    models: tuple[str, ...]
    values: np.ndarray  # square, symmetric, unit diagonal

    def value(self, a: str, b: str) -> float:
        return float(self.values[self.models.index(a), self.models.index(b)])


def _complete_matrix(table: RatingTable) -> tuple[tuple[str, ...], tuple[str, ...], np.ndarray]:
    """Patches x models rating matrix; errors if any cell is missing."""
    if not table.ratings:
        raise RatingError("rating table is empty")
    models = table.models
    patches = table.patches
    missing = [
        (p, m) for p in patches for m in models if (p, m) not in table.ratings
    ]
    if missing:
        raise RatingError(
            f"table is incomplete: {len(missing)} (patch, model) cells missing, "
            f"first {missing[0]}"
        )
    grid = np.array(
        [[int(table.ratings[(p, m)]) for m in models] for p in patches], dtype=np.int64
    )
    return patches, models, grid


def agreement_matrix(table: RatingTable) -> AgreementMatrix:
    """Fraction of patches where each pair of models assigned equal ratings."""
    _, models, grid = _complete_matrix(table)
    n_models = len(models)
    values = np.ones((n_models, n_models), dtype=float)
    for i in range(n_models):
        for j in range(i + 1, n_models):
            frac = float(np.mean(grid[:, i] == grid[:, j]))
            values[i, j] = values[j, i] = frac
    return AgreementMatrix(models=models, values=values)


def agreement_breakdown(
    table: RatingTable, group_by: str = "fused"
) -> dict[str, dict[str, int]]:
    """Per-rating-class counts of all/two/none agreement among exactly 3 models.

    Patches are grouped by their fused rating by default; pass a model id as
    ``group_by`` to group by that model's own rating instead.
    """
    patches, models, grid = _complete_matrix(table)
    if len(models) != 3:
        raise RatingError(f"breakdown is defined for exactly 3 models, got {len(models)}")
    if group_by != "fused" and group_by not in models:
        raise RatingError(f"group_by must be 'fused' or a model id, got {group_by!r}")
    counts = {
        label: {"all_agree": 0, "two_agree": 0, "none_agree": 0}
        for label in RATING_LABELS
    }
    for row in grid:
        distinct = len(set(row.tolist()))
        category = {1: "all_agree", 2: "two_agree", 3: "none_agree"}[distinct]
        if group_by == "fused":
            group = Rating(int(row.max()))
        else:
            group = Rating(int(row[models.index(group_by)]))
        counts[group.label][category] += 1
    return counts


def distribution(table: RatingTable) -> dict:
    """Rating class counts and fractions per model, plus the fused row.

    Per-model counts run over the patches that model has rated; the fused row
    runs over the patches rated by every model.
    """
    per_model: dict[str, dict] = {}
    for model in table.models:
        tally = {label: 0 for label in RATING_LABELS}
        for (p, m), rating in table.ratings.items():
            if m == model:
                tally[rating.label] += 1
        total = sum(tally.values())
        per_model[model] = {
            "counts": tally,
            "fractions": {
                label: (tally[label] / total if total else 0.0)
                for label in RATING_LABELS
            },
            "n_patches": total,
        }
    fused_tally = {label: 0 for label in RATING_LABELS}
    complete = table.complete_patches()
    for patch in complete:
        ratings = [table.ratings[(patch, m)] for m in table.models]
        fused_tally[fuse_ratings(ratings).label] += 1
    fused_total = len(complete)
    return {
        "per_model": per_model,
        "fused": {
            "counts": fused_tally,
            "fractions": {
                label: (fused_tally[label] / fused_total if fused_total else 0.0)
                for label in RATING_LABELS
            },
            "n_patches": fused_total,
        },
    }

"""Fine-tuning manifests: strategy assembly, nested splits, oversampling weights, epoch sampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Collection, Mapping, Sequence, Union

import numpy as np

from .ratings import Rating, RatingTable, fuse_ratings

__all__ = [
    "EnrichmentError",
    "EnrichmentItem",
    "EnrichmentManifest",
    "SamplingConfig",
    "STRATEGIES",
    "build_manifest",
    "incremental_split",
    "read_manifest",
    "sample_epoch",
    "sampling_weights",
    "write_manifest",
    "write_schedule",
]

STRATEGIES = ("good_only", "bad_only", "combined")


class EnrichmentError(ValueError):
    """A manifest, strategy or sampling request violates its contract."""


@dataclass(frozen=True)
class EnrichmentItem:
    """One training sample: a pseudo-labeled or pathologist-corrected patch."""

    patch_id: str
    label_source: str  # "pseudo" | "corrected"
    model_id: str | None = None  # present iff pseudo
    weight: float | None = None  # filled by sampling_weights

    def __post_init__(self) -> None:
        if self.label_source not in ("pseudo", "corrected"):
            raise EnrichmentError(f"unknown label_source {self.label_source!r}")
        if self.label_source == "pseudo" and not self.model_id:
            raise EnrichmentError("pseudo items must carry the model whose mask is the label")
        if self.label_source == "corrected" and self.model_id is not None:
            raise EnrichmentError("corrected items carry no model_id")

    @property
    def class_label(self) -> str:
        return "good_pseudo" if self.label_source == "pseudo" else "bad_corrected"

    @property
    def item_id(self) -> str:
        suffix = self.model_id if self.label_source == "pseudo" else "corrected"
        return f"{self.patch_id}:{suffix}"

    def to_payload(self) -> dict:
        payload: dict = {
            "patch_id": self.patch_id,
            "label_source": self.label_source,
            "class_label": self.class_label,
            "weight": self.weight,
        }
        if self.label_source == "pseudo":
            payload["model_id"] = self.model_id
        return payload

    @classmethod
    def from_payload(cls, payload: Mapping) -> "EnrichmentItem":
        try:
            return cls(
                patch_id=str(payload["patch_id"]),
                label_source=str(payload["label_source"]),
                model_id=payload.get("model_id"),
                weight=payload.get("weight"),
            )
        except KeyError as exc:
            raise EnrichmentError(f"malformed manifest item: missing {exc}") from exc


@dataclass(frozen=True)
class EnrichmentManifest:
    """The assembled fine-tuning dataset under one strategy."""

    items: tuple[EnrichmentItem, ...]
    strategy: str
    gamma_s: float | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise EnrichmentError(f"unknown strategy {self.strategy!r}")
        if self.strategy == "good_only" and any(
            i.label_source != "pseudo" for i in self.items
        ):
            raise EnrichmentError("good_only manifests contain pseudo items only")
        if self.strategy == "bad_only" and any(
            i.label_source != "corrected" for i in self.items
        ):
            raise EnrichmentError("bad_only manifests contain corrected items only")

    @property
    def n_train(self) -> int:
        return len(self.items)

    def class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for item in self.items:
            counts[item.class_label] = counts.get(item.class_label, 0) + 1
        return counts


@dataclass(frozen=True)
class SamplingConfig:
    """Oversampling strength gamma_s in [0, 1] and the sampling seed."""

    gamma_s: float = 0.85
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.gamma_s <= 1:
            raise EnrichmentError(f"gamma_s must lie in [0, 1], got {self.gamma_s}")
        if not 0 <= self.seed < 2**64:
            raise EnrichmentError("seed must fit in an unsigned 64-bit integer")


def build_manifest(
    ratings: RatingTable,
    corrections: Union[Collection[str], Mapping[str, object]],
    strategy: str,
    dedupe: bool = False,
    capture: Mapping[tuple[str, str], float] | None = None,
) -> EnrichmentManifest:
    """Assemble the fine-tuning manifest for one enrichment strategy.

    ``good_only`` yields one pseudo item per (patch, model) pair rated good, so
    a patch rated good by two models contributes two items; ``dedupe`` keeps a
    single item per patch instead, preferring the mask with the highest entry
    in ``capture`` when given (smallest model id otherwise).  ``bad_only``
    yields one corrected item per entry of ``corrections``, each of which must
    be a patch whose fused rating is bad.  ``combined`` is the union.
    """
    if strategy not in STRATEGIES:
        raise EnrichmentError(f"unknown strategy {strategy!r}")
    corrected_ids = set(corrections.keys() if isinstance(corrections, Mapping) else corrections)

    for patch_id in sorted(corrected_ids):
        model_ratings = ratings.patch_ratings(patch_id)
        if not model_ratings or set(model_ratings) != set(ratings.models):
            raise EnrichmentError(
                f"corrected patch {patch_id!r} lacks a final rating from every model"
            )
        if fuse_ratings(list(model_ratings.values())) != Rating.BAD:
            raise EnrichmentError(
                f"corrected patch {patch_id!r} is not fused-bad; corrections "
                "target consensus-bad patches only"
            )

    items: list[EnrichmentItem] = []
    if strategy in ("good_only", "combined"):
        good_cells = sorted(
            (p, m) for (p, m), rating in ratings.ratings.items() if rating == Rating.GOOD
        )
        if dedupe:
            best: dict[str, str] = {}
            for p, m in good_cells:
                if p not in best:
                    best[p] = m
                elif capture is not None:
                    if capture.get((p, m), 0.0) > capture.get((p, best[p]), 0.0):
                        best[p] = m
            good_cells = sorted(best.items())
        items.extend(
            EnrichmentItem(patch_id=p, label_source="pseudo", model_id=m)
            for p, m in good_cells
        )
    if strategy in ("bad_only", "combined"):
        if not corrected_ids:
            raise EnrichmentError(
                f"strategy {strategy!r} includes corrected items but no corrections were given"
            )
        items.extend(
            EnrichmentItem(patch_id=p, label_source="corrected")
            for p in sorted(corrected_ids)
        )
    if not items:
        raise EnrichmentError(f"strategy {strategy!r} produced an empty manifest")
    return EnrichmentManifest(items=tuple(items), strategy=strategy)


def _round_half_up(x: float) -> int:
    # guard against float dust like 49.499999999999996 before the .5 shift
    return int(math.floor(round(x, 9) + 0.5))


def incremental_split(
    manifest: EnrichmentManifest, fractions: Sequence[float], seed: int
) -> list[EnrichmentManifest]:
    """Nested, class-stratified sub-manifests at increasing fractions.

    Per class, ``|split(f)| = round_half_up(f * class_count)`` and every
    smaller split is a subset of the next.  Fractions must be ascending,
    within (0, 1], and end at 1.0.  The same seed reproduces the same splits.
    """
    if not fractions:
        raise EnrichmentError("at least one fraction is required")
    if any(f <= 0 or f > 1 for f in fractions):
        raise EnrichmentError(f"fractions must lie in (0, 1], got {list(fractions)}")
    if list(fractions) != sorted(fractions):
        raise EnrichmentError("fractions must be sorted ascending")
    if fractions[-1] != 1.0:
        raise EnrichmentError("the last fraction must be 1.0")

    rng = np.random.default_rng(seed)
    by_class: dict[str, list[int]] = {}
    for idx, item in enumerate(manifest.items):
        by_class.setdefault(item.class_label, []).append(idx)
    shuffled = {
        label: [indices[i] for i in rng.permutation(len(indices))]
        for label, indices in sorted(by_class.items())
    }

    splits: list[EnrichmentManifest] = []
    for fraction in fractions:
        chosen: set[int] = set()
        for label, order in shuffled.items():
            take = _round_half_up(fraction * len(order))
            chosen.update(order[:take])
        items = tuple(manifest.items[i] for i in sorted(chosen))
        splits.append(replace(manifest, items=items, seed=seed))
    return splits


def sampling_weights(
    manifest: EnrichmentManifest, cfg: SamplingConfig = SamplingConfig()
) -> EnrichmentManifest:
    """Fill per-item class-balancing weights.

    An item of a class with count n_c gets
    ``N_train / (gamma_s * n_c + (1 - gamma_s) * N_train)``, so all items of
    one class share a weight, gamma_s = 0 gives uniform weight 1, and
    gamma_s = 1 gives pure inverse class frequency.
    """
    if manifest.n_train < 1:
        raise EnrichmentError("manifest must contain at least one item")
    n_train = manifest.n_train
    counts = manifest.class_counts()
    class_weight = {
        label: n_train / (cfg.gamma_s * count + (1 - cfg.gamma_s) * n_train)
        for label, count in counts.items()
    }
    items = tuple(
        replace(item, weight=class_weight[item.class_label]) for item in manifest.items
    )
    return replace(manifest, items=items, gamma_s=cfg.gamma_s, seed=cfg.seed)


def sample_epoch(manifest: EnrichmentManifest, n_draws: int, seed: int) -> list[str]:
    """Draw item ids with replacement, probability proportional to weight.

    Deterministic for a fixed seed; ``n_draws = 0`` yields an empty schedule.
    """
    if n_draws < 0:
        raise EnrichmentError(f"n_draws must be >= 0, got {n_draws}")
    weights = []
    for item in manifest.items:
        if item.weight is None or item.weight <= 0:
            raise EnrichmentError(
                f"item {item.item_id} has weight {item.weight}; run sampling_weights first"
            )
        weights.append(item.weight)
    if n_draws == 0:
        return []
    probabilities = np.asarray(weights, dtype=float)
    probabilities /= probabilities.sum()
    rng = np.random.default_rng(seed)
    indices = rng.choice(len(weights), size=n_draws, replace=True, p=probabilities)
    ids = [item.item_id for item in manifest.items]
    return [ids[i] for i in indices.tolist()]


def write_manifest(manifest: EnrichmentManifest, path: Union[str, Path]) -> None:
    """Write the manifest: a header line, then one item per line (NDJSON)."""
    header = {
        "strategy": manifest.strategy,
        "n_train": manifest.n_train,
        "gamma_s": manifest.gamma_s,
        "seed": manifest.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for item in manifest.items:
            fh.write(json.dumps(item.to_payload(), separators=(",", ":")) + "\n")


def read_manifest(path: Union[str, Path]) -> EnrichmentManifest:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise EnrichmentError(f"{path}: empty manifest file")
    header = json.loads(lines[0])
    if "strategy" not in header:
        raise EnrichmentError(f"{path}: first line must be the manifest header")
    items = tuple(EnrichmentItem.from_payload(json.loads(line)) for line in lines[1:])
    manifest = EnrichmentManifest(
        items=items,
        strategy=str(header["strategy"]),
        gamma_s=header.get("gamma_s"),
        seed=header.get("seed"),
    )
    declared = header.get("n_train")
    if declared is not None and declared != manifest.n_train:
        raise EnrichmentError(
            f"{path}: header declares n_train={declared} but {manifest.n_train} items follow"
        )
    return manifest


def write_schedule(item_ids: Sequence[str], path: Union[str, Path]) -> None:
    """Write an epoch schedule: newline-delimited item ids in draw order."""
    Path(path).write_text("".join(f"{i}\n" for i in item_ids), encoding="utf-8")

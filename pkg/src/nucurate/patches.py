"""Fixed-size patch extraction from source images, QC filtering and provenance manifests."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np
from PIL import Image

__all__ = [
    "PatchError",
    "PatchManifest",
    "PatchRecord",
    "QcConfig",
    "QcResult",
    "derive_seed",
    "extract_patch",
    "ingest_dataset",
    "make_patch_id",
    "qc_filter",
    "read_patch_manifest",
    "tile_image",
    "write_patch_manifest",
]


class PatchError(ValueError):
    """A patch record, source image or manifest violates its contract."""


def make_patch_id(source_image: str, x: int, y: int, width: int, height: int) -> str:
    """Deterministic patch id from the source path and the patch rectangle."""
    key = f"{source_image}|{x}|{y}|{width}|{height}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


def derive_seed(global_seed: int, source_image: str) -> int:
    """Stable per-source seed so sources can be tiled concurrently yet reproducibly."""
    digest = hashlib.sha256(f"{global_seed}|{source_image}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class PatchRecord:
    """Provenance of one extracted patch."""

    patch_id: str
    source_image: str
    x: int
    y: int
    width: int = 512
    height: int = 512
    stain: str = ""
    species: str = ""
    dataset: str = ""

    def to_payload(self) -> dict:
        return {
            "patch_id": self.patch_id,
            "source_image": self.source_image,
            "x": self.x,
            "y": self.y,
            "width": self.width,
            "height": self.height,
            "stain": self.stain,
            "species": self.species,
            "dataset": self.dataset,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "PatchRecord":
        try:
            return cls(
                patch_id=str(payload["patch_id"]),
                source_image=str(payload["source_image"]),
                x=int(payload["x"]),
                y=int(payload["y"]),
                width=int(payload["width"]),
                height=int(payload["height"]),
                stain=str(payload.get("stain", "")),
                species=str(payload.get("species", "")),
                dataset=str(payload.get("dataset", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise PatchError(f"malformed patch record: {exc!r}") from exc


@dataclass(frozen=True)
class QcConfig:
    """Quality-control thresholds for keeping a patch."""

    min_tissue_fraction: float = 0.1
    tissue_saturation_threshold: int = 20  # 8-bit saturation level
    max_mean_brightness: int = 245  # 8-bit level

    def __post_init__(self) -> None:
        if not 0 <= self.min_tissue_fraction <= 1:
            raise PatchError("min_tissue_fraction must lie in [0, 1]")
        if not 0 <= self.tissue_saturation_threshold <= 255:
            raise PatchError("tissue_saturation_threshold must be an 8-bit level")
        if not 0 <= self.max_mean_brightness <= 255:
            raise PatchError("max_mean_brightness must be an 8-bit level")


@dataclass(frozen=True)
class QcResult:
    keep: bool
    reason: str | None = None  # "background" | "overexposed" when discarded


def tile_image(
    source_image: str,
    image: np.ndarray,
    count: int = 4,
    size: int = 512,
    seed: int = 0,
    stain: str = "",
    species: str = "",
    dataset: str = "",
) -> list[PatchRecord]:
    """Draw ``count`` uniformly random in-bounds square patches from one image.

    Overlapping (even identical) patches are permitted; duplicates are caught
    later at ingest time.  The draw is deterministic per (image, seed).
    """
    arr = np.asarray(image)
    if arr.ndim < 2:
        raise PatchError(f"image must be at least 2-D, got shape {arr.shape}")
    img_h, img_w = arr.shape[0], arr.shape[1]
    if img_w < size or img_h < size:
        raise PatchError(
            f"image {img_w}x{img_h} is smaller than the patch size {size}x{size}"
        )
    rng = np.random.default_rng(seed)
    xs = rng.integers(0, img_w - size + 1, size=count)
    ys = rng.integers(0, img_h - size + 1, size=count)
    return [
        PatchRecord(
            patch_id=make_patch_id(source_image, int(x), int(y), size, size),
            source_image=source_image,
            x=int(x),
            y=int(y),
            width=size,
            height=size,
            stain=stain,
            species=species,
            dataset=dataset,
        )
        for x, y in zip(xs.tolist(), ys.tolist())
    ]


def extract_patch(image: np.ndarray, record: PatchRecord) -> np.ndarray:
    """Crop the patch rectangle out of its source image array."""
    arr = np.asarray(image)
    if record.y + record.height > arr.shape[0] or record.x + record.width > arr.shape[1]:
        raise PatchError(f"patch {record.patch_id} exceeds its source image bounds")
    return arr[record.y : record.y + record.height, record.x : record.x + record.width]


def qc_filter(pixels: np.ndarray, cfg: QcConfig = QcConfig()) -> QcResult:
    """Keep or discard a patch based on tissue coverage and exposure.

    A pixel counts as tissue when its HSV-style saturation (8-bit) exceeds the
    configured threshold; a patch without enough such pixels is discarded as
    "background".  Patches brighter on average than the cap are "overexposed".
    """
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise PatchError(f"patch must be an 8-bit RGB raster, got {arr.dtype} {arr.shape}")
    channels = arr.astype(np.float64)
    mx = channels.max(axis=2)
    mn = channels.min(axis=2)
    saturation = np.zeros_like(mx)
    lit = mx > 0
    saturation[lit] = 255.0 * (mx[lit] - mn[lit]) / mx[lit]
    tissue_fraction = float(np.mean(saturation > cfg.tissue_saturation_threshold))
    if tissue_fraction < cfg.min_tissue_fraction:
        return QcResult(keep=False, reason="background")
    if float(channels.mean()) > cfg.max_mean_brightness:
        return QcResult(keep=False, reason="overexposed")
    return QcResult(keep=True)


@dataclass(frozen=True)
class PatchManifest:
    """All extracted patch records plus summary counts by tag."""

    records: tuple[PatchRecord, ...]

    def summary(self) -> dict:
        tally: dict[str, dict[str, int]] = {"stain": {}, "species": {}, "dataset": {}}
        for record in self.records:
            for facet in tally:
                tag = getattr(record, facet)
                tally[facet][tag] = tally[facet].get(tag, 0) + 1
        return {"total": len(self.records), **tally}


def ingest_dataset(
    sources: Sequence[Mapping],
    count: int = 4,
    size: int = 512,
    seed: int = 0,
    qc: QcConfig | None = None,
) -> PatchManifest:
    """Tile every source image into patches and collect the provenance manifest.

    Each source entry maps ``path`` to a readable image and may carry
    ``stain``/``species``/``dataset`` tags plus an optional ``source`` name
    (defaults to the file's basename) used as the stable identity in patch ids
    and derived seeds.  Per-source seeds come from the global seed, so sources
    may be processed in any order or concurrently.  Duplicate patch ids (same
    source, same coordinates) are an error.
    """
    records: list[PatchRecord] = []
    seen: set[str] = set()
    for entry in sources:
        path = str(entry["path"])
        source = str(entry.get("source", Path(path).name))
        try:
            with Image.open(path) as img:
                arr = np.asarray(img.convert("RGB"))
        except (OSError, ValueError) as exc:
            raise PatchError(f"unreadable source image {path!r}: {exc}") from exc
        tiles = tile_image(
            source,
            arr,
            count=count,
            size=size,
            seed=derive_seed(seed, source),
            stain=str(entry.get("stain", "")),
            species=str(entry.get("species", "")),
            dataset=str(entry.get("dataset", "")),
        )
        for record in tiles:
            if qc is not None and not qc_filter(extract_patch(arr, record), qc).keep:
                continue
            if record.patch_id in seen:
                raise PatchError(
                    f"duplicate patch id {record.patch_id} "
                    f"(source {path!r} at ({record.x},{record.y}))"
                )
            seen.add(record.patch_id)
            records.append(record)
    return PatchManifest(records=tuple(records))


def write_patch_manifest(manifest: PatchManifest, path: Union[str, Path]) -> None:
    """Write the manifest as newline-delimited JSON, one record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in manifest.records:
            fh.write(json.dumps(record.to_payload(), separators=(",", ":")) + "\n")


def read_patch_manifest(path: Union[str, Path]) -> PatchManifest:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(PatchRecord.from_payload(json.loads(line)))
    return PatchManifest(records=tuple(records))

"""Instance label masks: raster/RLE codecs, validation, per-instance statistics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Union

import numpy as np
from PIL import Image
from scipy import ndimage

__all__ = [
    "MAX_INSTANCE_ID",
    "Finding",
    "InstanceMask",
    "InstanceStats",
    "MaskError",
    "RleDocument",
    "RleInstance",
    "decode_label_map",
    "decode_rle",
    "encode_rle",
    "instance_stats",
    "read_label_map",
    "read_rle",
    "rle_from_json",
    "rle_to_json",
    "validate",
    "write_label_map",
    "write_rle",
]

MAX_INSTANCE_ID = 65535

# 4-connectivity: N/S/E/W neighbours only.
_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


class MaskError(ValueError):
    """A mask or mask document violates its structural contract."""


@dataclass(frozen=True, eq=False)
class InstanceMask:
    """A 2-D label raster assigning each pixel to background (0) or an instance id.

    ``labels`` is stored exactly as supplied so that malformed masks can still
    be inspected with :func:`validate`.  Operations that need a well-formed
    mask raise :class:`MaskError` when the structure is broken.  Instances are
    not required to be 4-connected; fragmentation is reported by
    :func:`validate` as a warning, not an error.
    """

    width: int
    height: int
    labels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.labels).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @classmethod
    def from_array(cls, labels: Any) -> "InstanceMask":
        """Build a mask from a 2-D (height, width) label array."""
        arr = np.asarray(labels)
        if arr.ndim != 2:
            raise MaskError(f"label grid must be 2-D, got shape {arr.shape}")
        return cls(width=int(arr.shape[1]), height=int(arr.shape[0]), labels=arr)

    @property
    def grid(self) -> np.ndarray:
        """Labels as a read-only (height, width) array; raises on malformed masks."""
        return _grid(self)

    def instance_ids(self) -> tuple[int, ...]:
        """Distinct nonzero ids, ascending."""
        ids = np.unique(_grid(self))
        return tuple(int(i) for i in ids if i != 0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InstanceMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(
                np.asarray(self.labels).reshape(-1),
                np.asarray(other.labels).reshape(-1),
            )
        )


@dataclass(frozen=True)
class RleInstance:
    """One instance's run-length encoding: runs over its own pixels only."""

    id: int
    runs: tuple[tuple[int, int], ...]  # (start, length), row-major pixel indices


@dataclass(frozen=True)
class RleDocument:
    """Sparse per-instance run-length serialization of an :class:`InstanceMask`."""

    width: int
    height: int
    instances: tuple[RleInstance, ...]


@dataclass(frozen=True)
class Finding:
    """One validation result; ``level`` is ``"error"`` or ``"warning"``."""

    level: str
    code: str
    message: str
    instance_id: int | None = None


@dataclass(frozen=True)
class InstanceStats:
    id: int
    area: int
    bbox: tuple[int, int, int, int]  # (min_x, min_y, max_x, max_y) inclusive
    centroid: tuple[float, float]  # (x, y) pixel-coordinate means
    component_count: int


def _grid(mask: InstanceMask) -> np.ndarray:
    """Return the (height, width) label grid, raising :class:`MaskError` if malformed."""
    if mask.width < 1 or mask.height < 1:
        raise MaskError(f"mask dimensions must be >= 1, got {mask.width}x{mask.height}")
    labels = np.asarray(mask.labels)
    if not np.issubdtype(labels.dtype, np.integer):
        raise MaskError(f"labels must be an integer array, got dtype {labels.dtype}")
    if labels.size != mask.width * mask.height:
        raise MaskError(
            f"labels length {labels.size} does not match "
            f"{mask.width}x{mask.height}={mask.width * mask.height}"
        )
    if labels.size and (labels.min() < 0 or labels.max() > MAX_INSTANCE_ID):
        raise MaskError(f"instance ids must lie in [0, {MAX_INSTANCE_ID}]")
    grid = labels.reshape(mask.height, mask.width)
    grid.setflags(write=False)
    return grid


def decode_label_map(raster: np.ndarray, width: int, height: int) -> InstanceMask:
    """Turn a decoded 16-bit single-channel raster into an :class:`InstanceMask`.

    Pixel values are copied verbatim: value = instance id, 0 = background.
    Rejects rasters whose dtype is not unsigned 16-bit or whose shape does not
    match the declared dimensions.
    """
    arr = np.asarray(raster)
    if arr.dtype != np.uint16:
        raise MaskError(f"label map must be 16-bit (uint16), got dtype {arr.dtype}")
    if arr.ndim != 2:
        raise MaskError(f"label map must be single-channel 2-D, got shape {arr.shape}")
    if arr.shape != (height, width):
        raise MaskError(
            f"raster shape {arr.shape[1]}x{arr.shape[0]} does not match "
            f"declared {width}x{height}"
        )
    return InstanceMask(width=width, height=height, labels=arr)


def read_label_map(path: Union[str, Path]) -> InstanceMask:
    """Read a single-channel 16-bit PNG label map."""
    with Image.open(path) as img:
        if img.mode not in ("I;16", "I;16B", "I;16L", "I"):
            raise MaskError(
                f"{path}: expected a 16-bit single-channel PNG, got mode {img.mode!r}"
            )
        arr = np.asarray(img)
    if arr.dtype != np.uint16:
        # Pillow promotes some 16-bit PNGs to 32-bit "I"; values must still fit.
        if arr.size and (arr.min() < 0 or arr.max() > MAX_INSTANCE_ID):
            raise MaskError(f"{path}: pixel values exceed 16-bit range")
        arr = arr.astype(np.uint16)
    return decode_label_map(arr, width=arr.shape[1], height=arr.shape[0])


def write_label_map(mask: InstanceMask, path: Union[str, Path]) -> None:
    """Write the mask as a single-channel 16-bit PNG (value = instance id)."""
    grid = _grid(mask).astype(np.uint16)
    Image.fromarray(grid).save(path, format="PNG")


def encode_rle(mask: InstanceMask) -> RleDocument:
    """Run-length encode a mask, one sorted run list per instance."""
    flat = _grid(mask).reshape(-1)
    change = np.flatnonzero(flat[1:] != flat[:-1])
    starts = np.concatenate(([0], change + 1))
    lengths = np.diff(np.concatenate((starts, [flat.size])))
    values = flat[starts]
    per_id: dict[int, list[tuple[int, int]]] = {}
    for start, length, value in zip(starts.tolist(), lengths.tolist(), values.tolist()):
        if value:
            per_id.setdefault(int(value), []).append((int(start), int(length)))
    instances = tuple(
        RleInstance(id=i, runs=tuple(per_id[i])) for i in sorted(per_id)
    )
    return RleDocument(width=mask.width, height=mask.height, instances=instances)


def decode_rle(doc: RleDocument) -> InstanceMask:
    """Decode an RLE document back to a mask.

    Rejects documents with out-of-bounds runs, unsorted or overlapping runs
    within an instance, pixels claimed by more than one instance, or invalid
    instance ids.
    """
    if doc.width < 1 or doc.height < 1:
        raise MaskError(f"document dimensions must be >= 1, got {doc.width}x{doc.height}")
    total = doc.width * doc.height
    flat = np.zeros(total, dtype=np.uint16)
    seen: set[int] = set()
    for inst in doc.instances:
        if not 1 <= inst.id <= MAX_INSTANCE_ID:
            raise MaskError(f"instance id {inst.id} outside [1, {MAX_INSTANCE_ID}]")
        if inst.id in seen:
            raise MaskError(f"instance id {inst.id} listed twice")
        seen.add(inst.id)
        prev_end = 0
        for start, length in inst.runs:
            if length < 1:
                raise MaskError(f"instance {inst.id}: run length {length} < 1")
            if start < prev_end:
                raise MaskError(f"instance {inst.id}: runs unsorted or overlapping")
            if start < 0 or start + length > total:
                raise MaskError(
                    f"instance {inst.id}: run ({start},{length}) exceeds {total} pixels"
                )
            segment = flat[start : start + length]
            if segment.any():
                raise MaskError(
                    f"instance {inst.id}: run ({start},{length}) overlaps another instance"
                )
            segment[:] = inst.id
            prev_end = start + length
    return InstanceMask(
        width=doc.width, height=doc.height, labels=flat.reshape(doc.height, doc.width)
    )


def rle_to_json(doc: RleDocument) -> str:
    """Serialize to the canonical RLE JSON document."""
    payload = {
        "width": doc.width,
        "height": doc.height,
        "instances": [
            {"id": inst.id, "runs": [[s, n] for s, n in inst.runs]}
            for inst in doc.instances
        ],
    }
    return json.dumps(payload, separators=(",", ":"))


def rle_from_json(text: Union[str, bytes]) -> RleDocument:
    """Parse the canonical RLE JSON document."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MaskError(f"invalid RLE JSON: {exc}") from exc
    return rle_from_payload(payload)


def rle_from_payload(payload: Any) -> RleDocument:
    """Build an :class:`RleDocument` from already-parsed JSON data."""
    if not isinstance(payload, dict):
        raise MaskError("RLE document must be a JSON object")
    try:
        width = int(payload["width"])
        height = int(payload["height"])
        raw_instances = payload["instances"]
        instances = []
        for entry in raw_instances:
            runs = tuple((int(s), int(n)) for s, n in entry["runs"])
            instances.append(RleInstance(id=int(entry["id"]), runs=runs))
    except (KeyError, TypeError, ValueError) as exc:
        raise MaskError(f"malformed RLE document: {exc!r}") from exc
    return RleDocument(width=width, height=height, instances=tuple(instances))


def read_rle(path: Union[str, Path]) -> RleDocument:
    return rle_from_json(Path(path).read_text(encoding="utf-8"))


def write_rle(doc: RleDocument, path: Union[str, Path]) -> None:
    Path(path).write_text(rle_to_json(doc), encoding="utf-8")


def validate(mask: InstanceMask) -> list[Finding]:
    """Check a mask against its invariants.

    Returns an empty list iff the mask is well-formed.  Structural problems
    (bad dimensions, length mismatch, out-of-range ids) are error findings;
    instances split into several 4-connected components are warnings.
    """
    findings: list[Finding] = []
    if mask.width < 1 or mask.height < 1:
        findings.append(
            Finding("error", "bad-dimensions",
                    f"dimensions must be >= 1, got {mask.width}x{mask.height}")
        )
    labels = np.asarray(mask.labels)
    if not np.issubdtype(labels.dtype, np.integer):
        findings.append(
            Finding("error", "bad-dtype", f"labels must be integers, got {labels.dtype}")
        )
        return findings
    expected = mask.width * mask.height
    if not findings and labels.size != expected:
        findings.append(
            Finding("error", "size-mismatch",
                    f"labels length {labels.size} != width*height {expected}")
        )
    if findings:
        return findings
    if labels.size and (labels.min() < 0 or labels.max() > MAX_INSTANCE_ID):
        findings.append(
            Finding("error", "id-out-of-range",
                    f"instance ids must lie in [0, {MAX_INSTANCE_ID}]")
        )
        return findings
    grid = labels.reshape(mask.height, mask.width)
    for stats in instance_stats(InstanceMask(mask.width, mask.height, grid)):
        if stats.component_count > 1:
            findings.append(
                Finding(
                    "warning",
                    "fragmented",
                    f"instance {stats.id} has {stats.component_count} "
                    "disconnected components",
                    instance_id=stats.id,
                )
            )
    return findings


def instance_stats(mask: InstanceMask) -> list[InstanceStats]:
    """Per-instance area, bounding box, centroid and 4-connected component count.

    One entry per distinct nonzero id, ascending; areas sum to the count of
    nonzero pixels.
    """
    grid = _grid(mask)
    ys, xs = np.nonzero(grid)
    if ys.size == 0:
        return []
    values = grid[ys, xs]
    order = np.argsort(values, kind="stable")
    ys, xs, values = ys[order], xs[order], values[order]
    boundaries = np.flatnonzero(values[1:] != values[:-1]) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [values.size]))
    out: list[InstanceStats] = []
    for a, b in zip(starts.tolist(), ends.tolist()):
        gid = int(values[a])
        gxs, gys = xs[a:b], ys[a:b]
        min_x, max_x = int(gxs.min()), int(gxs.max())
        min_y, max_y = int(gys.min()), int(gys.max())
        crop = grid[min_y : max_y + 1, min_x : max_x + 1] == gid
        _, n_components = ndimage.label(crop, structure=_FOUR_CONNECTED)
        out.append(
            InstanceStats(
                id=gid,
                area=b - a,
                bbox=(min_x, min_y, max_x, max_y),
                centroid=(float(gxs.mean()), float(gys.mean())),
                component_count=int(n_components),
            )
        )
    return out

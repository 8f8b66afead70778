"""HTTP review service: two-round rating workflow, corrections, live curation stats."""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from io import BytesIO
from pathlib import Path
from typing import Callable, Mapping, Union

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image

from .enrichment import EnrichmentError, build_manifest
from .masks import (
    InstanceMask,
    MaskError,
    RleDocument,
    decode_rle,
    encode_rle,
    read_label_map,
    read_rle,
    rle_from_payload,
    rle_to_json,
    validate,
)
from .ratings import (
    Rating,
    RatingError,
    RatingRecord,
    RatingTable,
    agreement_breakdown,
    agreement_matrix,
    build_table,
    distribution,
    fuse_ratings,
)

__all__ = [
    "CorrectionPreconditionError",
    "DuplicateRatingError",
    "ReviewItem",
    "ReviewService",
    "ServiceError",
    "UnknownItemError",
    "UnknownRaterError",
    "create_app",
    "write_raters",
]

RATING_DONE_STATES = ("rated", "escalated", "corrected")


class ServiceError(Exception):
    """Base class for review-service request failures."""


class UnknownRaterError(ServiceError):
    pass


class UnknownItemError(ServiceError):
    pass


class DuplicateRatingError(ServiceError):
    pass


class CorrectionPreconditionError(ServiceError):
    pass


@dataclass
class ReviewItem:
    """One reviewable (patch, model, round) unit and its workflow status."""

    patch_id: str
    model_id: str
    round: int
    status: str = "pending"  # pending | rated | escalated | corrected

    @property
    def image_ref(self) -> str:
        return f"/api/patches/{self.patch_id}/image"

    @property
    def mask_ref(self) -> str:
        return f"/api/patches/{self.patch_id}/masks/{self.model_id}"

    def to_payload(self) -> dict:
        return {
            "patch_id": self.patch_id,
            "model_id": self.model_id,
            "round": self.round,
            "status": self.status,
            "image_ref": self.image_ref,
            "mask_ref": self.mask_ref,
        }


def write_raters(data_dir: Union[str, Path], raters: Mapping[str, list[int]]) -> None:
    """Register raters: a map from rater id to the rounds they may serve."""
    path = Path(data_dir) / "raters.json"
    path.write_text(json.dumps(dict(raters), sort_keys=True), encoding="utf-8")


class ReviewService:
    """Event-sourced review workflow over a directory of staged patches.

    The patch store lives in ``data_dir/patches``: ``<patch_id>.png`` images
    with ``<patch_id>.<model_id>.mask.png`` or ``<patch_id>.<model_id>.rle.json``
    masks alongside.  Every accepted rating or correction is appended to a
    newline-JSON event log; the entire state is a pure fold of that log, so a
    restart plus replay reproduces statistics byte for byte.
    """

    def __init__(
        self,
        data_dir: Union[str, Path],
        log_path: Union[str, Path, None] = None,
        required_raters: int = 2,
        clock: Callable[[], float] = time.time,
    ) -> None:
        self.data_dir = Path(data_dir)
        self.log_path = Path(log_path) if log_path else self.data_dir / "events.ndjson"
        self.required_raters = required_raters
        self._clock = clock
        self._lock = threading.RLock()
        self._serve_counter = 0

        raters_path = self.data_dir / "raters.json"
        if raters_path.exists():
            self.raters: dict[str, list[int]] = {
                str(k): [int(r) for r in v]
                for k, v in json.loads(raters_path.read_text(encoding="utf-8")).items()
            }
        else:
            self.raters = {}

        self.items: dict[tuple[str, str, int], ReviewItem] = {}
        self.records: list[RatingRecord] = []
        self.corrections: dict[str, RleDocument] = {}
        self._last_served: dict[tuple[str, str, int], int] = {}
        self._served_at: dict[tuple[str, str, int, str], float] = {}
        self._rated_by: set[tuple[str, str, int, str]] = set()

        self._scan_store()
        self._replay()

    # ------------------------------------------------------------------ store

    @property
    def patches_dir(self) -> Path:
        return self.data_dir / "patches"

    def _scan_store(self) -> None:
        self._mask_files: dict[tuple[str, str], Path] = {}
        self._image_files: dict[str, Path] = {}
        if not self.patches_dir.is_dir():
            return
        for path in sorted(self.patches_dir.iterdir()):
            name = path.name
            if name.endswith(".mask.png"):
                pid, mid = name[: -len(".mask.png")].split(".", 1)
                self._mask_files[(pid, mid)] = path
            elif name.endswith(".rle.json"):
                pid, mid = name[: -len(".rle.json")].split(".", 1)
                self._mask_files.setdefault((pid, mid), path)
            elif name.endswith(".png") and "." not in name[: -len(".png")]:
                self._image_files[name[: -len(".png")]] = path
        for pid, mid in sorted(self._mask_files):
            self.items[(pid, mid, 1)] = ReviewItem(patch_id=pid, model_id=mid, round=1)

    @property
    def models(self) -> tuple[str, ...]:
        return tuple(sorted({mid for _, mid in self._mask_files}))

    @property
    def patch_ids(self) -> tuple[str, ...]:
        return tuple(sorted({pid for pid, _ in self._mask_files}))

    def load_mask(self, patch_id: str, model_id: str) -> InstanceMask:
        # "corrected" is a reserved model id: it resolves to the stored
        # correction, so a reviewer can re-fetch what they submitted.
        if model_id == "corrected" and patch_id in self.corrections:
            return decode_rle(self.corrections[patch_id])
        path = self._mask_files.get((patch_id, model_id))
        if path is None:
            raise UnknownItemError(f"no mask staged for patch {patch_id!r} model {model_id!r}")
        if path.name.endswith(".rle.json"):
            return decode_rle(read_rle(path))
        return read_label_map(path)

    def image_path(self, patch_id: str) -> Path | None:
        return self._image_files.get(patch_id)

    # ------------------------------------------------------------------- log

    def _append_event(self, event: dict) -> None:
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True, separators=(",", ":")) + "\n")
            fh.flush()

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        with open(self.log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                if event.get("type") == "rating":
                    self._apply_rating(RatingRecord.from_payload(event))
                elif event.get("type") == "correction":
                    self._apply_correction(
                        str(event["patch_id"]), rle_from_payload(event["rle"])
                    )

    # ------------------------------------------------------------ state fold

    def _apply_rating(self, record: RatingRecord) -> None:
        self.records.append(record)
        self._rated_by.add((record.patch_id, record.model_id, record.round, record.rater_id))
        key1 = (record.patch_id, record.model_id, 1)
        if record.round == 2:
            item2 = self.items.get((record.patch_id, record.model_id, 2))
            if item2 is not None and item2.status == "pending":
                item2.status = "rated"
            return
        item = self.items.get(key1)
        if item is None:
            return
        round1 = [
            r
            for r in self.records
            if r.patch_id == record.patch_id
            and r.model_id == record.model_id
            and r.round == 1
        ]
        conflict = len({r.rating for r in round1}) > 1
        uncertain = any(r.uncertain for r in round1)
        if conflict or uncertain:
            if item.status in ("pending", "rated"):
                item.status = "escalated"
            key2 = (record.patch_id, record.model_id, 2)
            if key2 not in self.items:
                self.items[key2] = ReviewItem(
                    patch_id=record.patch_id, model_id=record.model_id, round=2
                )
        elif len(round1) >= self.required_raters and item.status == "pending":
            item.status = "rated"

    def _apply_correction(self, patch_id: str, doc: RleDocument) -> None:
        self.corrections[patch_id] = doc
        for key, item in self.items.items():
            if key[0] == patch_id:
                item.status = "corrected"

    # ------------------------------------------------------------- operations

    def _check_rater(self, rater_id: str, round: int) -> None:
        rounds = self.raters.get(rater_id)
        if rounds is None or round not in rounds:
            raise UnknownRaterError(
                f"rater {rater_id!r} is not registered for round {round}"
            )

    def next_item(self, rater_id: str, round: int) -> ReviewItem | None:
        """Serve the least-recently-served pending item this rater has not rated."""
        with self._lock:
            self._check_rater(rater_id, round)
            candidates = [
                item
                for (pid, mid, rnd), item in self.items.items()
                if rnd == round
                and item.status == "pending"
                and (pid, mid, rnd, rater_id) not in self._rated_by
            ]
            if not candidates:
                return None
            candidates.sort(
                key=lambda it: (
                    self._last_served.get((it.patch_id, it.model_id, it.round), 0),
                    it.patch_id,
                    it.model_id,
                )
            )
            chosen = candidates[0]
            self._serve_counter += 1
            key = (chosen.patch_id, chosen.model_id, chosen.round)
            self._last_served[key] = self._serve_counter
            self._served_at[key + (rater_id,)] = self._clock()
            return chosen

    def submit_rating(self, payload: Mapping) -> RatingRecord:
        """Validate, persist and apply one rating submission."""
        payload = dict(payload)
        payload.setdefault("uncertain", False)
        payload.setdefault("timestamp", self._clock())
        record = RatingRecord.from_payload(payload)
        with self._lock:
            self._check_rater(record.rater_id, record.round)
            key = (record.patch_id, record.model_id, record.round)
            if key not in self.items:
                raise UnknownItemError(
                    f"no round-{record.round} item for patch {record.patch_id!r} "
                    f"model {record.model_id!r}"
                )
            if key + (record.rater_id,) in self._rated_by:
                raise DuplicateRatingError(
                    f"rater {record.rater_id!r} already rated {key}"
                )
            served = self._served_at.pop(key + (record.rater_id,), None)
            event = {"type": "rating", **record.to_payload()}
            event["review_seconds"] = (
                round(self._clock() - served, 3) if served is not None else None
            )
            self._append_event(event)
            self._apply_rating(record)
        return record

    def submit_correction(self, patch_id: str, payload: Mapping) -> None:
        """Validate, persist and apply a corrected mask for a consensus-bad patch."""
        with self._lock:
            if patch_id not in self.patch_ids:
                raise UnknownItemError(f"unknown patch {patch_id!r}")
            table = self.final_table()
            model_ratings = {
                m: table.get(patch_id, m)
                for m in self.models
            }
            if any(r is None for r in model_ratings.values()) or fuse_ratings(
                [r for r in model_ratings.values() if r is not None]
            ) != Rating.BAD:
                raise CorrectionPreconditionError(
                    f"patch {patch_id!r} is not consensus-bad; corrections are "
                    "restricted to patches every model rated bad"
                )
            doc = rle_from_payload(payload)
            mask = decode_rle(doc)  # raises MaskError on overlap/bounds problems
            errors = [f for f in validate(mask) if f.level == "error"]
            if errors:
                raise MaskError(f"corrected mask invalid: {errors[0].message}")
            event = {
                "type": "correction",
                "patch_id": patch_id,
                "rle": json.loads(rle_to_json(doc)),
            }
            self._append_event(event)
            self._apply_correction(patch_id, doc)

    # -------------------------------------------------------------- analytics

    def final_table(self) -> RatingTable:
        """Current final verdicts: the pure fold of the rating log."""
        return build_table(self.records, strict=False)

    def stats(self) -> dict:
        """Snapshot of distributions, agreement and queue depths."""
        with self._lock:
            table = self.final_table()
            models = self.models
            complete = list(table.complete_patches(models)) if models else []
            complete_table = RatingTable(
                ratings={
                    (p, m): r
                    for (p, m), r in table.ratings.items()
                    if p in set(complete)
                }
            )
            dist = distribution(table) if table.ratings else None
            per_model = {
                m: (
                    dist["per_model"][m]["counts"]
                    if dist and m in dist["per_model"]
                    else {"good": 0, "medium": 0, "bad": 0}
                )
                for m in models
            }
            fused = {"good": 0, "medium": 0, "bad": 0}
            for p in complete:
                verdict = fuse_ratings([table.ratings[(p, m)] for m in models])
                fused[verdict.label] += 1
            agreement = None
            if complete:
                matrix = agreement_matrix(complete_table)
                agreement = {
                    "models": list(matrix.models),
                    "values": [[float(v) for v in row] for row in matrix.values],
                }
            breakdown = None
            if complete and len(models) == 3:
                breakdown = agreement_breakdown(complete_table)
            queue_depths = {
                f"round{rnd}": sum(
                    1
                    for (pid, mid, r), item in self.items.items()
                    if r == rnd and item.status == "pending"
                )
                for rnd in (1, 2)
            }
            return {
                "per_model": per_model,
                "fused": fused,
                "agreement": agreement,
                "breakdown": breakdown,
                "complete_patches": len(complete),
                "corrections": len(self.corrections),
                "queue_depths": queue_depths,
                "n_ratings": len(self.records),
            }

    def stats_json(self) -> str:
        """Canonical (byte-stable) JSON rendering of :meth:`stats`."""
        return json.dumps(self.stats(), sort_keys=True, separators=(",", ":"))


def create_app(service: ReviewService) -> FastAPI:
    """Wrap a :class:`ReviewService` in the HTTP API."""
    app = FastAPI(title="nucurate review service")
    # The browser client is served from its own origin (static file server
    # or dev proxy); this is a localhost tool, so any origin may call the API.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(UnknownRaterError)
    async def _unknown_rater(request: Request, exc: UnknownRaterError):
        return JSONResponse(status_code=403, content={"detail": str(exc)})

    @app.exception_handler(UnknownItemError)
    async def _unknown_item(request: Request, exc: UnknownItemError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(DuplicateRatingError)
    async def _duplicate(request: Request, exc: DuplicateRatingError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(CorrectionPreconditionError)
    async def _precondition(request: Request, exc: CorrectionPreconditionError):
        return JSONResponse(status_code=412, content={"detail": str(exc)})

    @app.exception_handler(MaskError)
    async def _mask_error(request: Request, exc: MaskError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(RatingError)
    async def _rating_error(request: Request, exc: RatingError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(EnrichmentError)
    async def _enrichment_error(request: Request, exc: EnrichmentError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.get("/api/queue/{round}/next")
    def queue_next(round: int, rater: str):
        item = service.next_item(rater, round)
        if item is None:
            return Response(status_code=204)
        return JSONResponse(item.to_payload())

    @app.post("/api/ratings", status_code=201)
    async def post_rating(request: Request):
        payload = await request.json()
        record = service.submit_rating(payload)
        return {"status": "recorded", "patch_id": record.patch_id,
                "model_id": record.model_id, "round": record.round}

    @app.post("/api/corrections/{patch_id}", status_code=201)
    async def post_correction(patch_id: str, request: Request):
        payload = await request.json()
        service.submit_correction(patch_id, payload)
        return {"status": "stored", "patch_id": patch_id}

    @app.get("/api/patches/{patch_id}/image")
    def get_image(patch_id: str):
        path = service.image_path(patch_id)
        if path is None:
            return JSONResponse(status_code=404, content={"detail": f"no image for {patch_id!r}"})
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.get("/api/patches/{patch_id}/masks/{model_id}")
    def get_mask(patch_id: str, model_id: str, request: Request):
        try:
            mask = service.load_mask(patch_id, model_id)
        except UnknownItemError as exc:
            return JSONResponse(status_code=404, content={"detail": str(exc)})
        accept = request.headers.get("accept", "")
        if "application/json" in accept:
            return Response(content=rle_to_json(encode_rle(mask)), media_type="application/json")
        buffer = BytesIO()
        Image.fromarray(mask.grid.astype("uint16")).save(buffer, format="PNG")
        return Response(content=buffer.getvalue(), media_type="image/png")

    @app.get("/api/stats")
    def get_stats():
        return Response(content=service.stats_json(), media_type="application/json")

    @app.get("/api/manifest")
    def get_manifest(strategy: str):
        table = service.final_table()
        manifest = build_manifest(table, set(service.corrections), strategy)
        header = {
            "strategy": manifest.strategy,
            "n_train": manifest.n_train,
            "gamma_s": manifest.gamma_s,
            "seed": manifest.seed,
        }
        lines = [json.dumps(header, separators=(",", ":"))]
        lines.extend(
            json.dumps(item.to_payload(), separators=(",", ":")) for item in manifest.items
        )
        return Response(content="".join(line + "\n" for line in lines),
                        media_type="application/x-ndjson")

    return app

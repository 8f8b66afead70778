"""Command-line front end: tiling, evaluation, rating, enrichment and the review service."""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from PIL import Image

from .enrichment import (
    STRATEGIES,
    SamplingConfig,
    build_manifest,
    incremental_split,
    read_manifest,
    sample_epoch,
    sampling_weights,
    write_manifest,
    write_schedule,
)
from .masks import InstanceMask, decode_rle, read_label_map, read_rle
from .metrics import match_instances, metrics_report, pairwise_iou
from .patches import (
    PatchManifest,
    PatchError,
    QcConfig,
    extract_patch,
    ingest_dataset,
    qc_filter,
    read_patch_manifest,
    write_patch_manifest,
)
from .ratings import (
    RatingConfig,
    agreement_breakdown,
    agreement_matrix,
    build_table,
    capture_fraction,
    fuse_ratings,
    rate_capture,
    read_records,
)
from .service import ReviewService, create_app

__all__ = ["main"]

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage problems; this tool reserves 2 for data errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _load_mask_any(path: Path) -> InstanceMask:
    if path.name.endswith(".rle.json"):
        return decode_rle(read_rle(path))
    return read_label_map(path)


def _mask_index(directory: str) -> dict[str, Path]:
    """Map patch id (filename stem before the first dot) to its mask file."""
    folder = Path(directory)
    if not folder.is_dir():
        raise FileNotFoundError(f"not a directory: {folder}")
    index: dict[str, Path] = {}
    for path in sorted(folder.iterdir()):
        if path.name.endswith(".rle.json") or path.suffix == ".png":
            index.setdefault(path.name.split(".", 1)[0], path)
    return index


def _paired_ids(gt: dict[str, Path], pred: dict[str, Path]) -> list[str]:
    common = sorted(set(gt) & set(pred))
    if not common:
        raise ValueError("no patch ids shared between --gt and --pred")
    return common


def _load_corrections(spec: str) -> set[str]:
    """Corrected patch ids from a directory of masks or a one-id-per-line file."""
    path = Path(spec)
    if path.is_dir():
        return {
            p.name.split(".", 1)[0]
            for p in path.iterdir()
            if p.name.endswith(".rle.json") or p.suffix == ".png"
        }
    return {line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()}


# --------------------------------------------------------------- subcommands


def _cmd_tile(args: argparse.Namespace) -> int:
    in_dir = Path(args.input)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"not a directory: {in_dir}")
    paths = sorted(p for p in in_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise PatchError(f"no source images under {in_dir}")
    sources = [
        {
            "path": str(p),
            "source": p.name,
            "stain": args.stain,
            "species": args.species,
            "dataset": args.dataset,
        }
        for p in paths
    ]
    qc = None
    if args.qc:
        qc = QcConfig(
            min_tissue_fraction=args.min_tissue,
            tissue_saturation_threshold=args.sat_threshold,
            max_mean_brightness=args.max_brightness,
        )
    manifest = ingest_dataset(sources, count=args.count, size=args.size, seed=args.seed, qc=qc)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    by_source: dict[str, list] = {}
    for record in manifest.records:
        by_source.setdefault(record.source_image, []).append(record)
    name_to_path = {p.name: p for p in paths}
    for source, records in by_source.items():
        with Image.open(name_to_path[source]) as img:
            arr = np.asarray(img.convert("RGB"))
        for record in records:
            Image.fromarray(extract_patch(arr, record)).save(out / f"{record.patch_id}.png")
    write_patch_manifest(manifest, out / "manifest.ndjson")
    print(json.dumps(manifest.summary(), sort_keys=True))
    return 0


def _cmd_qc(args: argparse.Namespace) -> int:
    manifest = read_patch_manifest(args.manifest)
    cfg = QcConfig(
        min_tissue_fraction=args.min_tissue,
        tissue_saturation_threshold=args.sat_threshold,
        max_mean_brightness=args.max_brightness,
    )
    kept = []
    dropped = {"background": 0, "overexposed": 0}
    for record in manifest.records:
        png = Path(args.patches) / f"{record.patch_id}.png"
        with Image.open(png) as img:
            arr = np.asarray(img.convert("RGB"))
        result = qc_filter(arr, cfg)
        if result.keep:
            kept.append(record)
        else:
            dropped[result.reason] += 1
    write_patch_manifest(PatchManifest(records=tuple(kept)), args.out)
    print(json.dumps({"kept": len(kept), "dropped": dropped}, sort_keys=True))
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    gt, pred = _mask_index(args.gt), _mask_index(args.pred)
    per_patch = []
    for pid in _paired_ids(gt, pred):
        table = pairwise_iou(_load_mask_any(gt[pid]), _load_mask_any(pred[pid]))
        per_patch.append((pid, match_instances(table, threshold=args.iou)))
    _emit(metrics_report(per_patch, mode=args.mode), args.out)
    return 0


def _cmd_auto_rate(args: argparse.Namespace) -> int:
    cfg = RatingConfig(
        good_threshold=args.good, bad_threshold=args.bad, iou_threshold=args.iou
    )
    gt, pred = _mask_index(args.gt), _mask_index(args.pred)
    rows = []
    for pid in _paired_ids(gt, pred):
        frac = capture_fraction(_load_mask_any(gt[pid]), _load_mask_any(pred[pid]), cfg)
        rows.append(
            {"patch_id": pid, "capture": round(frac, 6), "rating": rate_capture(frac, cfg).label}
        )
    payload: dict = {"patches": rows}
    if not args.deterministic:
        payload["generated_at"] = _now_iso()
    _emit(payload, args.out)
    return 0


def _cmd_fuse(args: argparse.Namespace) -> int:
    table = build_table(read_records(args.ratings), strict=False)
    models = table.models
    rows = []
    counts = {"good": 0, "medium": 0, "bad": 0}
    for pid in table.complete_patches():
        verdict = fuse_ratings([table.ratings[(pid, m)] for m in models])
        rows.append({"patch_id": pid, "fused": verdict.label})
        counts[verdict.label] += 1
    _emit({"models": list(models), "counts": counts, "patches": rows}, args.out)
    return 0


def _cmd_agreement(args: argparse.Namespace) -> int:
    table = build_table(read_records(args.ratings), strict=False)
    matrix = agreement_matrix(table)
    payload = {
        "models": list(matrix.models),
        "values": [[float(v) for v in row] for row in matrix.values],
    }
    if args.breakdown:
        payload["breakdown"] = agreement_breakdown(table, group_by=args.group_by)
    _emit(payload, args.out)
    return 0


def _cmd_manifest(args: argparse.Namespace) -> int:
    table = build_table(read_records(args.ratings), strict=False)
    corrections = _load_corrections(args.corrections) if args.corrections else set()
    manifest = build_manifest(table, corrections, args.strategy, dedupe=args.dedupe)
    write_manifest(manifest, args.out)
    print(
        json.dumps(
            {
                "strategy": manifest.strategy,
                "n_train": manifest.n_train,
                "class_counts": manifest.class_counts(),
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_split(args: argparse.Namespace) -> int:
    manifest = read_manifest(args.manifest)
    fractions = [float(x) for x in args.fractions.split(",") if x.strip()]
    splits = incremental_split(manifest, fractions, seed=args.seed)
    rows = []
    for fraction, sub in zip(fractions, splits):
        path = f"{args.out_prefix}_{fraction:g}.ndjson"
        write_manifest(sub, path)
        rows.append(
            {
                "fraction": fraction,
                "path": path,
                "n_train": sub.n_train,
                "class_counts": sub.class_counts(),
            }
        )
    print(json.dumps({"seed": args.seed, "splits": rows}, sort_keys=True))
    return 0


def _cmd_weights(args: argparse.Namespace) -> int:
    manifest = read_manifest(args.manifest)
    weighted = sampling_weights(manifest, SamplingConfig(gamma_s=args.gamma, seed=args.seed))
    class_weights: dict[str, float] = {}
    for item in weighted.items:
        class_weights.setdefault(item.class_label, float(item.weight))
    if args.out:
        write_manifest(weighted, args.out)
    print(
        json.dumps(
            {
                "gamma_s": args.gamma,
                "n_train": weighted.n_train,
                "class_counts": weighted.class_counts(),
                "class_weights": class_weights,
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_schedule(args: argparse.Namespace) -> int:
    manifest = read_manifest(args.manifest)
    item_ids = sample_epoch(manifest, n_draws=args.draws, seed=args.seed)
    write_schedule(item_ids, args.out)
    print(json.dumps({"draws": len(item_ids), "out": args.out}))
    return 0


def _make_service(args: argparse.Namespace) -> ReviewService:
    data = args.data or os.environ.get("DATA_DIR")
    if not data:
        raise ValueError("a data directory is required (--data or DATA_DIR)")
    log = args.log or os.environ.get("LOG_PATH")
    return ReviewService(data, log_path=log)


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    addr = args.addr or os.environ.get("LISTEN_ADDR", "127.0.0.1:8000")
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"listen address must look like host:port, got {addr!r}")
    app = create_app(_make_service(args))
    uvicorn.run(app, host=host, port=int(port), log_level="warning")
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    sys.stdout.write(_make_service(args).stats_json() + "\n")
    return 0


# --------------------------------------------------------------------- wiring


def _add_qc_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--min-tissue", type=float, default=0.1,
                        help="minimum tissue (saturated-pixel) fraction to keep a patch")
    parser.add_argument("--sat-threshold", type=int, default=20,
                        help="8-bit saturation level above which a pixel counts as tissue")
    parser.add_argument("--max-brightness", type=int, default=245,
                        help="discard patches whose mean 8-bit level exceeds this")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nucurate", description=__doc__)
    parser.add_argument("--config", help="JSON file of flag defaults (flags still win)")
    parser.add_argument("--deterministic", action="store_true",
                        help="suppress timestamps so identical inputs give identical bytes")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("tile", help="crop random patches out of source images")
    p.add_argument("--input", required=True, help="directory of source images")
    p.add_argument("--out", required=True, help="output directory for PNGs + manifest.ndjson")
    p.add_argument("--count", type=int, default=4, help="patches per source image")
    p.add_argument("--size", type=int, default=512, help="square patch edge in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stain", default="", help="stain tag recorded on every patch")
    p.add_argument("--species", default="", help="species tag recorded on every patch")
    p.add_argument("--dataset", default="", help="dataset tag recorded on every patch")
    p.add_argument("--qc", action="store_true", help="drop background/overexposed patches")
    _add_qc_flags(p)
    p.set_defaults(func=_cmd_tile)

    p = sub.add_parser("qc", help="filter an existing patch set by tissue/exposure checks")
    p.add_argument("--patches", required=True, help="directory holding <patch_id>.png files")
    p.add_argument("--manifest", required=True, help="patch manifest to filter")
    p.add_argument("--out", required=True, help="filtered manifest path")
    _add_qc_flags(p)
    p.set_defaults(func=_cmd_qc)

    p = sub.add_parser("evaluate", help="instance-level precision/recall/F1 on mask pairs")
    p.add_argument("--gt", required=True, help="directory of ground-truth masks")
    p.add_argument("--pred", required=True, help="directory of predicted masks")
    p.add_argument("--iou", type=float, default=0.5, help="IoU threshold (strictly above)")
    p.add_argument("--mode", choices=("micro", "macro"), default="micro")
    p.add_argument("--out", help="report path (stdout when omitted)")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("auto-rate", help="rate predictions by their GT capture fraction")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--good", type=float, default=0.90, help="capture fraction for a good rating")
    p.add_argument("--bad", type=float, default=0.50, help="capture fraction below which bad")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--out", help="ratings path (stdout when omitted)")
    p.add_argument("--deterministic", action="store_true", default=argparse.SUPPRESS,
                   help="suppress the generated_at timestamp")
    p.set_defaults(func=_cmd_auto_rate)

    p = sub.add_parser("fuse", help="combine per-model ratings into ensemble verdicts")
    p.add_argument("--ratings", required=True, help="newline-JSON rating records")
    p.add_argument("--out", help="fused verdicts path (stdout when omitted)")
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("agreement", help="pairwise inter-model agreement matrix")
    p.add_argument("--ratings", required=True, help="newline-JSON rating records")
    p.add_argument("--breakdown", action="store_true",
                   help="add all/two/none agreement counts (3 models)")
    p.add_argument("--group-by", default="fused",
                   help="breakdown grouping: 'fused' or a model id")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.set_defaults(func=_cmd_agreement)

    p = sub.add_parser("manifest", help="assemble a fine-tuning manifest from ratings")
    p.add_argument("--ratings", required=True, help="newline-JSON rating records")
    p.add_argument("--strategy", required=True, choices=STRATEGIES)
    p.add_argument("--corrections", help="corrected-mask directory or file of patch ids")
    p.add_argument("--dedupe", action="store_true",
                   help="keep at most one pseudo-label per patch")
    p.add_argument("--out", required=True, help="manifest path (newline JSON)")
    p.set_defaults(func=_cmd_manifest)

    p = sub.add_parser("split", help="nested class-stratified sub-manifests")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fractions", default="0.25,0.5,0.75,1.0",
                   help="comma-separated ascending fractions ending at 1.0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True, help="written as <prefix>_<fraction>.ndjson")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("weights", help="class-balancing sampling weights")
    p.add_argument("--manifest", required=True)
    p.add_argument("--gamma", type=float, default=0.85, help="oversampling strength in [0, 1]")
    p.add_argument("--seed", type=int, default=0, help="recorded for later epoch sampling")
    p.add_argument("--out", help="weighted manifest path (summary always on stdout)")
    p.set_defaults(func=_cmd_weights)

    p = sub.add_parser("schedule", help="draw one weighted training epoch")
    p.add_argument("--manifest", required=True, help="weighted manifest")
    p.add_argument("--draws", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="item ids, one per line")
    p.set_defaults(func=_cmd_schedule)

    p = sub.add_parser("serve", help="run the HTTP review service")
    p.add_argument("--data", help="data directory (default: DATA_DIR)")
    p.add_argument("--log", help="event log path (default: LOG_PATH or <data>/events.ndjson)")
    p.add_argument("--addr", help="host:port (default: LISTEN_ADDR or 127.0.0.1:8000)")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("stats", help="print review statistics by replaying the event log")
    p.add_argument("--data", help="data directory (default: DATA_DIR)")
    p.add_argument("--log", help="event log path (default: LOG_PATH or <data>/events.ndjson)")
    p.set_defaults(func=_cmd_stats)

    # Subparsers parse into a fresh namespace, so config-file defaults must be
    # pushed onto each of them, not just onto the top-level parser.
    parser.sub_map = dict(sub.choices)
    return parser


def _extract_config(argv: list[str]) -> dict:
    """Pull --config out of argv early so its values can seed parser defaults."""
    for i, token in enumerate(argv):
        if token == "--config":
            if i + 1 >= len(argv):
                return {}
            path = argv[i + 1]
            break
        if token.startswith("--config="):
            path = token.split("=", 1)[1]
            break
    else:
        return {}
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        raise ValueError(f"config file {path!r} must hold a JSON object")
    return payload


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        config = _extract_config(argv)
        if config:
            parser.set_defaults(**config)
            sub_config = {k: v for k, v in config.items() if k not in ("config", "deterministic")}
            if sub_config:
                for child in parser.sub_map.values():
                    child.set_defaults(**sub_config)
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse --help (0) or usage error (1 via _Parser)
        code = exc.code
        return int(code) if isinstance(code, int) else 1
    except ValueError as exc:  # includes Mask/Rating/Enrichment/Patch errors
        module = type(exc).__module__.rsplit(".", 1)[-1]
        label = "cli" if module == "builtins" else module
        print(f"error [{label}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())

"""Command line entry points.

Subcommands cover the whole pipeline: ``prepare`` (training rasters),
``oracle-predict`` (ground-truth-derived probability maps), ``calibrate``
(foreground threshold sweep, written back to the config), ``segment``
(probability maps to instance masks), ``evaluate`` (SEG/DET/OP_CSB),
``experiment`` (comparison tables) and ``synth`` (synthetic dataset).

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
Diagnostics go to stderr as ``cellws: error: <message>``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import raster
from .config import DatasetConfig, load_config, save_config, with_updates
from .ctc import SequenceLayout, scan_frames, write_manifest
from .dataprep import (
    AugmentationSpec,
    ElasticParams,
    augment,
    draw_augmentation,
    make_reference,
    markers_from_weak,
    normalize,
    weight_map,
)
from .errors import DataError, UsageError
from .experiments import (
    augmentation_experiment,
    markertype_experiment,
    segfunction_experiment,
)
from .markerseg import (
    calibrate_foreground_threshold,
    cell_region_mask,
    extract_markers,
    remove_border_cells,
    segmentation_function,
    watershed,
)
from .metrics import EvalReport, evaluate_frames
from .morphology import max_inscribed_diameter
from .oracle import OracleSpec, predictions_from_masks
from .synth import synth_dataset

log = logging.getLogger("cellws")

_PRED_RE = re.compile(r"^(\d+)_(marker|fg)\.(?:tif|tiff|png)$", re.IGNORECASE)


def scan_predictions(directory: str | Path) -> dict[int, dict[str, Path]]:
    """Map frame number -> {"marker": path, "fg": path} in a prediction dir."""
    directory = Path(directory)
    out: dict[int, dict[str, Path]] = {}
    if not directory.is_dir():
        return out
    for p in sorted(directory.iterdir()):
        m = _PRED_RE.match(p.name)
        if m is None:
            continue
        fid, kind = int(m.group(1)), m.group(2).lower()
        slot = out.setdefault(fid, {})
        if kind in slot:
            raise DataError(f"duplicate {kind} prediction for frame {fid} in {directory}")
        slot[kind] = p
    return out


class _Parser(argparse.ArgumentParser):
    """argparse with the documented exit code for bad invocations."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"cellws: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load(args) -> DatasetConfig:
    if args.config is None:
        raise UsageError("this command needs --config")
    return load_config(args.config)


def _sequences(cfg: DatasetConfig, args, out_sensitive: bool = False) -> list[str]:
    if args.seq:
        if args.seq not in cfg.sequences:
            log.warning("sequence %s is not listed in the config", args.seq)
        return [args.seq]
    seqs = list(cfg.sequences)
    if out_sensitive and args.out and len(seqs) > 1:
        raise UsageError("--out needs --seq when the config lists several sequences")
    return seqs


def _oracle_spec(cfg: DatasetConfig) -> OracleSpec:
    return OracleSpec(
        sigma=cfg.oracle_sigma, size_ratio=cfg.oracle_size_ratio, noise=cfg.oracle_noise
    )


def _marker_reference(cfg: DatasetConfig, labels, weak, fid: int, size_ratio: float):
    """Binary marker reference per the configured source."""
    if cfg.marker_source == "weak":
        if weak is None:
            raise DataError(f"frame {fid}: weak annotation missing")
        if weak.shape != labels.shape:
            raise DataError(f"frame {fid}: weak annotation dimensions differ")
        return markers_from_weak(weak, cfg.connectivity)
    return make_reference(labels, size_ratio, cfg.connectivity).markers


def _reference_ratio(cfg: DatasetConfig) -> float:
    if cfg.marker_source == "weak":
        return 0.0  # unused
    if cfg.size_ratio is None:
        raise UsageError("marker_source eroded_full requires size_ratio")
    return cfg.size_ratio


# ---------------------------------------------------------------- prepare


def cmd_prepare(args) -> None:
    cfg = _load(args)
    root = cfg.require_root()
    wparams = cfg.weight_params()
    size_ratio = _reference_ratio(cfg)
    seed = cfg.seed if args.seed is None else args.seed
    aug_spec = AugmentationSpec(elastic=ElasticParams())
    for seq in _sequences(cfg, args, out_sensitive=True):
        layout = SequenceLayout(root, seq)
        out_dir = Path(args.out) if args.out else root / f"{seq}_PREP"
        images = layout.images()
        segs = layout.seg_annotations()
        tras = layout.tra_annotations()
        rows: list[dict] = []
        written = 0
        for fid in sorted(images):
            if fid not in segs:
                rows.append({"frame": fid, "skipped": "no full annotation"})
                continue
            if cfg.marker_source == "weak" and fid not in tras:
                rows.append({"frame": fid, "skipped": "no weak annotation"})
                continue
            image = raster.read_image(images[fid])
            labels = raster.read_labels(segs[fid])
            if image.shape != labels.shape:
                raise DataError(f"frame {fid}: image and annotation dimensions differ")
            weak = raster.read_labels(tras[fid]) if fid in tras else None
            norm = normalize(image, cfg.normalization)
            samples = [(f"t{fid:03d}", norm, labels, weak, None)]
            for j in range(1, args.augment + 1):
                rng = np.random.default_rng([seed, fid, j])
                draw = draw_augmentation(aug_spec, rng)
                aug_img, aug_labels = augment(norm, labels, aug_spec, draw)
                aug_weak = None
                if weak is not None:
                    _, aug_weak = augment(norm, weak, aug_spec, draw)
                samples.append((f"t{fid:03d}_a{j:02d}", aug_img, aug_labels, aug_weak, draw))
            for stem, s_img, s_labels, s_weak, draw in samples:
                y_m = _marker_reference(cfg, s_labels, s_weak, fid, size_ratio)
                y_c = s_labels > 0
                weights = weight_map(s_labels, wparams)
                raster.write_image(out_dir / f"{stem}_norm.tif", s_img.astype(np.float32))
                raster.write_image(
                    out_dir / f"{stem}_ym.tif", (y_m * np.uint8(255)).astype(np.uint8)
                )
                raster.write_image(
                    out_dir / f"{stem}_yc.tif", (y_c * np.uint8(255)).astype(np.uint8)
                )
                raster.write_image(out_dir / f"{stem}_weight.tif", weights)
                row = {
                    "frame": fid,
                    "stem": stem,
                    "image": images[fid].name,
                    "annotation": segs[fid].name,
                    "marker_source": cfg.marker_source,
                    "k": cfg.size_ratio,
                    "normalization": cfg.normalization,
                    "weight_magnitude": wparams.magnitude,
                    "weight_border": wparams.border_width,
                }
                if draw is not None:
                    row["augment"] = {
                        "scale": draw.scale,
                        "angle": draw.angle,
                        "flip": draw.flip,
                        "elastic_seed": draw.elastic_seed,
                        "seed": seed,
                    }
                rows.append(row)
                written += 1
        out_dir.mkdir(parents=True, exist_ok=True)
        write_manifest(out_dir / "manifest.jsonl", rows)
        if written == 0:
            log.warning("sequence %s: no annotated frames; manifest is empty", seq)
        print(f"{seq}: wrote {written} training samples -> {out_dir}")


# ---------------------------------------------------------- oracle-predict


def cmd_oracle_predict(args) -> None:
    cfg = _load(args)
    root = cfg.require_root()
    spec = _oracle_spec(cfg)
    # a full-width blur would flatten few-pixel annotations below the
    # marker threshold; predictors trained on them emit compact blobs
    marker_sigma = min(1.0, spec.sigma) if cfg.marker_source == "weak" else None
    size_ratio = cfg.oracle_size_ratio if cfg.marker_source != "weak" else 0.0
    seed = cfg.seed if args.seed is None else args.seed
    for seq in _sequences(cfg, args, out_sensitive=True):
        layout = SequenceLayout(root, seq)
        out_dir = Path(args.out) if args.out else root / f"{seq}_PRED"
        segs = layout.seg_annotations()
        tras = layout.tra_annotations()
        if not segs:
            raise DataError(f"sequence {seq}: no annotations under {layout.seg_dir}")
        for fid, path in sorted(segs.items()):
            labels = raster.read_labels(path)
            weak = raster.read_labels(tras[fid]) if fid in tras else None
            y_m = _marker_reference(cfg, labels, weak, fid, size_ratio)
            rng = np.random.default_rng([seed, fid]) if spec.noise > 0 else None
            marker, fg = predictions_from_masks(
                y_m, labels > 0, spec, rng, marker_sigma=marker_sigma
            )
            raster.write_probability(out_dir / f"{fid:03d}_marker.tif", marker)
            raster.write_probability(out_dir / f"{fid:03d}_fg.tif", fg)
        print(f"{seq}: wrote predictions for {len(segs)} frames -> {out_dir}")


# -------------------------------------------------------------- calibrate


def cmd_calibrate(args) -> None:
    cfg = _load(args)
    root = cfg.require_root()
    pairs = []
    diameters: list[float] = []
    for seq in _sequences(cfg, args):
        layout = SequenceLayout(root, seq)
        segs = layout.seg_annotations()
        preds = scan_predictions(args.pred if args.pred else root / f"{seq}_PRED")
        for fid in sorted(segs):
            labels = raster.read_labels(segs[fid])
            if cfg.min_cell_diameter is None:
                for lab in np.unique(labels):
                    if lab:
                        diameters.append(max_inscribed_diameter(labels == lab))
            if fid in preds and "fg" in preds[fid]:
                fg = raster.read_probability(preds[fid]["fg"])
                if fg.shape != labels.shape:
                    raise DataError(f"frame {fid}: prediction dimensions differ")
                pairs.append((fg, labels > 0))
    if not pairs:
        raise DataError("no frames have both a foreground prediction and annotation")
    t_c, curve = calibrate_foreground_threshold(pairs)

    updates: dict = {"foreground_threshold": t_c}
    if cfg.min_cell_diameter is None:
        if not diameters:
            raise DataError("cannot measure min_cell_diameter: no annotated cells")
        updates["min_cell_diameter"] = float(min(diameters))
    save_config(with_updates(cfg, **updates), args.config)

    out_dir = Path(args.out) if args.out else Path(args.config).parent
    curve_path = out_dir / "calibration_curve.csv"
    out_dir.mkdir(parents=True, exist_ok=True)
    with curve_path.open("w") as fh:
        fh.write("threshold,jaccard\n")
        for t, j in enumerate(curve):
            fh.write(f"{t},{j:.6f}\n")
    print(f"foreground_threshold = {t_c} over {len(pairs)} frames")
    if "min_cell_diameter" in updates:
        print(f"min_cell_diameter = {updates['min_cell_diameter']:g}")
    print(f"updated {args.config}; curve -> {curve_path}")


# ---------------------------------------------------------------- segment


def _segment_frame(task) -> tuple[int, int, int, float]:
    """Worker: one frame from prediction rasters to a written mask."""
    marker_path, fg_path, params, out_path, fid = task
    t0 = time.perf_counter()
    marker = raster.read_probability(marker_path)
    fg = raster.read_probability(fg_path)
    if marker.shape != fg.shape:
        raise DataError(f"frame {fid}: marker and foreground dimensions differ")
    markers = extract_markers(
        marker,
        params.filter_diameter(),
        params.contrast,
        params.marker_threshold,
        params.connectivity,
    )
    labels = watershed(
        markers,
        segmentation_function(fg),
        cell_region_mask(fg, params.foreground_threshold),
        params.connectivity,
    )
    if params.remove_border:
        labels = remove_border_cells(labels)
    raster.write_labels(out_path, labels)
    n_segments = int(np.count_nonzero(np.unique(labels)))
    return fid, int(markers.max()), n_segments, time.perf_counter() - t0


def cmd_segment(args) -> None:
    cfg = _load(args)
    params = cfg.pipeline_params()
    root = cfg.require_root()
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    for seq in _sequences(cfg, args, out_sensitive=True):
        layout = SequenceLayout(root, seq)
        pred_dir = Path(args.pred) if args.pred else root / f"{seq}_PRED"
        preds = scan_predictions(pred_dir)
        images = layout.images()
        fids = sorted(images) if images else sorted(preds)
        if not fids:
            raise DataError(f"sequence {seq}: no frames found")
        for fid in fids:
            for kind in ("marker", "fg"):
                if kind not in preds.get(fid, {}):
                    raise DataError(
                        f"sequence {seq}: missing {kind} prediction for frame {fid}"
                    )
        out_dir = Path(args.out) if args.out else layout.res_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        tasks = [
            (
                str(preds[fid]["marker"]),
                str(preds[fid]["fg"]),
                params,
                str(out_dir / f"mask{fid:03d}.tif"),
                fid,
            )
            for fid in fids
        ]
        if args.workers == 1:
            results = [_segment_frame(t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                results = list(pool.map(_segment_frame, tasks))
        frames_log = []
        for fid, n_markers, n_segments, wall in results:
            if n_segments == 0:
                log.warning("sequence %s frame %d: empty mask", seq, fid)
            frames_log.append(
                {
                    "frame": fid,
                    "markers": n_markers,
                    "segments": n_segments,
                    "wall_s": round(wall, 6),
                }
            )
        run_log = {
            "sequence": seq,
            "params": dataclasses.asdict(params),
            "workers": args.workers,
            "frames": frames_log,
        }
        (out_dir / "run_log.json").write_text(json.dumps(run_log, indent=2, sort_keys=True) + "\n")
        print(f"{seq}: segmented {len(fids)} frames -> {out_dir}")


# --------------------------------------------------------------- evaluate


def cmd_evaluate(args) -> None:
    cfg = _load(args)
    root = cfg.require_root()
    for seq in _sequences(cfg, args, out_sensitive=True):
        layout = SequenceLayout(root, seq)
        segs = layout.seg_annotations()
        if not segs:
            raise DataError(f"sequence {seq}: no annotations under {layout.seg_dir}")
        res_dir = Path(args.res) if args.res else layout.res_dir
        masks = scan_frames(res_dir, "mask")
        pairs = []
        for fid in sorted(segs):
            if fid not in masks:
                raise DataError(f"sequence {seq}: no result mask for frame {fid}")
            ref = raster.read_labels(segs[fid])
            seg = raster.read_labels(masks[fid])
            if ref.shape != seg.shape:
                raise DataError(f"frame {fid}: mask dimensions differ from annotation")
            pairs.append((ref, seg))
        report = evaluate_frames(pairs)
        out_dir = Path(args.out) if args.out else res_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "eval_report.json").write_text(report.to_json() + "\n")
        (out_dir / "eval_summary.csv").write_text(
            EvalReport.CSV_HEADER + "\n" + report.csv_line() + "\n"
        )
        print(
            f"{seq}: SEG {report.seg:.6f}  DET {report.det:.6f}  "
            f"OP_CSB {report.op_csb:.6f}  ({report.n_frames} frames)"
        )


# -------------------------------------------------------------- experiment


def cmd_experiment(args) -> None:
    if args.name == "segfunction":
        rows = segfunction_experiment(seed=0 if args.seed is None else args.seed)
    elif args.name == "augmentation":
        rows = augmentation_experiment(_load(args), seed=args.seed)
    elif args.name == "markertype":
        rows = markertype_experiment(_load(args))
    else:  # argparse choices already reject this
        raise UsageError(f"unknown experiment {args.name!r}")
    out_dir = Path(args.out) if args.out else Path.cwd()
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"experiment_{args.name}.csv"
    header: list[str] = []
    for row in rows:
        for key in row:
            if key not in header:
                header.append(key)
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(row.get(k, "")) for k in header) + "\n")
    for row in rows:
        print("  ".join(f"{k}={row[k]}" for k in header if k in row))
    print(f"table -> {path}")


# ------------------------------------------------------------------ synth


def cmd_synth(args) -> None:
    out = Path(args.out) if args.out else Path("synth_data")
    if args.frames < 1:
        raise UsageError("--frames must be >= 1")
    cfg_path = synth_dataset(out, frames=args.frames, seed=0 if args.seed is None else args.seed)
    print(f"wrote {args.frames} synthetic frames -> {out} (config: {cfg_path})")


# ------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cellws", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, func, help_text: str):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.set_defaults(func=func)
        sp.add_argument("--config", type=Path, help="dataset config file")
        sp.add_argument("--seq", help="restrict to one sequence id")
        sp.add_argument("--workers", type=int, default=1, help="parallel frame workers")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        return sp

    add("prepare", cmd_prepare, "derive training rasters and a manifest").add_argument(
        "--augment", type=int, default=0, help="augmented variants per frame"
    )
    add(
        "oracle-predict",
        cmd_oracle_predict,
        "derive probability maps from ground truth (CNN stand-in)",
    )
    add(
        "calibrate",
        cmd_calibrate,
        "sweep the foreground threshold and write it back to the config",
    ).add_argument("--pred", type=Path, help="prediction directory")
    add("segment", cmd_segment, "turn probability maps into instance masks").add_argument(
        "--pred", type=Path, help="prediction directory"
    )
    add("evaluate", cmd_evaluate, "score result masks against annotations").add_argument(
        "--res", type=Path, help="result mask directory"
    )
    add("experiment", cmd_experiment, "run a comparison study").add_argument(
        "name", choices=("augmentation", "segfunction", "markertype")
    )
    add("synth", cmd_synth, "generate a synthetic dataset").add_argument(
        "--frames", type=int, default=24, help="number of frames"
    )
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (UsageError, DataError) as exc:
        print(f"cellws: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

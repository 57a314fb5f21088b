"""Command-line entry point: ``depthfill <command> [options]``.

Exit status is 0 when every per-image operation succeeded, 1 when any
failed (or training diverged) and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

from depthfill import config as config_mod
from depthfill import predictor
from depthfill.inpaint import fill_missing, fit_prediction
from depthfill.io import (
    ManifestEntry,
    ManifestError,
    manifest_from_cityscapes,
    read_disparity_png,
    read_manifest,
    read_rgb_png,
    write_disparity_png,
    write_manifest,
    write_rgb_png,
)
from depthfill.metrics import (
    accuracy,
    average_invalid,
    invalid_count,
    invalid_stats_from_counts,
    pooled_accuracy,
    write_per_image_csv,
)
from depthfill.refine import REPORT_FIELDS, RefinementDivergedError, default_eval_indices, iterative_refine
from depthfill.refine import timed_correct, train_corrector
from depthfill.synth import InfeasibleSceneError, generate_dataset

log = logging.getLogger("depthfill")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _load_config(args) -> config_mod.PipelineConfig:
    cfg = config_mod.load(args.config) if getattr(args, "config", None) else config_mod.PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "iterations", None) is not None:
        cfg = cfg.with_iterations(args.iterations)
    if getattr(args, "out", None):
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def _out_dir(args, cfg=None) -> Path:
    out = Path(args.out if args.out else (cfg.output_dir if cfg is not None else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _num(v):
    return "" if v is None else repr(v)


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) if isinstance(v, float) or v is None else v for v in row])


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _run_batch(entries, fn: Callable[[ManifestEntry], object], jobs: int):
    """Apply ``fn`` to every entry with a bounded pool; results keep manifest order.

    Returns ``(results, failures)`` where a failed entry's result is None.
    """

    def guarded(entry):
        try:
            return fn(entry), None
        except Exception as exc:  # reported per image
            return None, f"{entry.id}: {exc}"

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            pairs = list(pool.map(guarded, entries))
    else:
        pairs = [guarded(e) for e in entries]
    failures = [err for _, err in pairs if err is not None]
    for err in failures:
        log.error(err)
    return [r for r, _ in pairs], failures


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    if args.n is None or args.n < 1:
        raise UsageError("synth needs -n/--count >= 1")
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    samples = generate_dataset(cfg.scene_config(), args.n)
    for sub in ("rgb", "truth", "holed"):
        (out / sub).mkdir(exist_ok=True)
    eval_idx = set(default_eval_indices(args.n, cfg.refine.eval_split_fraction))
    entries = []
    for i, s in enumerate(samples):
        sid = f"scene_{i:05d}"
        write_rgb_png(s.rgb, out / "rgb" / f"{sid}.png")
        write_disparity_png(s.truth, out / "truth" / f"{sid}.png")
        write_disparity_png(s.holed, out / "holed" / f"{sid}.png")
        entries.append(
            ManifestEntry(
                id=sid,
                rgb_path=str(out / "rgb" / f"{sid}.png"),
                disparity_path=str(out / "holed" / f"{sid}.png"),
                split="eval" if i in eval_idx else "train",
                truth_path=str(out / "truth" / f"{sid}.png"),
            )
        )
    write_manifest(entries, out / "manifest.jsonl")
    stats = average_invalid([s.holed for s in samples])
    print(json.dumps({"images": args.n, "average_invalid": stats.average_invalid,
                      "invalid_fraction_pct": stats.invalid_fraction_pct}, sort_keys=True))
    return EXIT_OK


def cmd_stats(args) -> int:
    entries = read_manifest(args.manifest)

    def one(e):
        r = read_disparity_png(e.disparity_path)
        return invalid_count(r), r.shape

    counts, failures = _run_batch(entries, one, args.jobs)
    ok = [(e, c) for e, c in zip(entries, counts) if c is not None]
    if not ok:
        return EXIT_FAIL
    shapes = {shape for _, (_, shape) in ok}
    if len(shapes) != 1:
        log.error("rasters differ in size: %s", sorted(shapes))
        return EXIT_FAIL
    h, w = shapes.pop()
    stats = invalid_stats_from_counts([c for _, (c, _) in ok], h * w)
    for e, (c, _) in ok:
        print(f"{e.id},{c}")
    summary = {"images": len(ok), "average_invalid": stats.average_invalid,
               "invalid_fraction_pct": stats.invalid_fraction_pct}
    print(json.dumps(summary, sort_keys=True))
    if args.out:
        out = _out_dir(args)
        write_per_image_csv(out / "stats.csv", [e.id for e, _ in ok], [c for _, (c, _) in ok])
        _write_json(out / "stats.json", summary)
    return EXIT_FAIL if failures else EXIT_OK


def _load_pairs(entries):
    dataset = []
    for e in entries:
        if e.rgb_path is None:
            raise ManifestError(f"entry {e.id!r} has no rgb_path")
        dataset.append((read_rgb_png(e.rgb_path), read_disparity_png(e.disparity_path)))
    return dataset


def cmd_refine(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    entries = read_manifest(args.manifest)
    dataset = _load_pairs(entries)
    eval_idx = [i for i, e in enumerate(entries) if e.split == "eval"]
    if not eval_idx or len(eval_idx) == len(entries):
        raise UsageError("refine needs both train and eval entries in the manifest")
    config_mod.save(cfg, out / "config.yaml")

    report_path = out / "reports.jsonl"
    report_path.write_text("")

    def persist(it, model, targets, report):
        d = out / f"iter_{it:02d}"
        (d / "rasters").mkdir(parents=True, exist_ok=True)
        for e, r in zip(entries, targets):
            write_disparity_png(r, d / "rasters" / f"{e.id}.png")
        predictor.save(model, d / "model.ckpt")
        with open(report_path, "a") as fh:
            fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")

    try:
        _, reports = iterative_refine(dataset, cfg.refine_config(), eval_indices=eval_idx, on_iteration=persist)
    except RefinementDivergedError as exc:
        print(f"depthfill: error: training diverged in {exc}", file=sys.stderr)
        return EXIT_FAIL

    _write_rows(out / "table.csv", REPORT_FIELDS, [[getattr(r, f) for f in REPORT_FIELDS] for r in reports])
    last = out / f"iter_{len(reports):02d}" / "rasters"
    refined = [replace(e, target_path=str(last / f"{e.id}.png")) for e in entries]
    write_manifest(refined, out / "refined_manifest.jsonl")
    for r in reports:
        print(json.dumps(r.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_fill(args) -> int:
    model = predictor.load(args.checkpoint)
    out = _out_dir(args)
    entries = read_manifest(args.manifest)

    def one(e):
        target = read_disparity_png(e.disparity_path)
        pred = predictor.predict(model, read_rgb_png(e.rgb_path), (target.width, target.height))
        res = fill_missing(target, fit_prediction(pred, target))
        write_disparity_png(res.filled, out / f"{e.id}.png")
        return invalid_count(target), res.replaced_count, res.remaining_invalid

    rows, failures = _run_batch(entries, one, args.jobs)
    done = [(e, r) for e, r in zip(entries, rows) if r is not None]
    _write_rows(out / "fill.csv", ["image_id", "invalid_before", "replaced_count", "remaining_invalid"],
                [[e.id, *r] for e, r in done])
    summary = {"images": len(done), "failed": len(failures),
               "replaced_total": sum(r[1] for _, r in done),
               "remaining_invalid_total": sum(r[2] for _, r in done)}
    _write_json(out / "fill.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_FAIL if failures else EXIT_OK


def cmd_train_corrector(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    entries = [e for e in read_manifest(args.manifest) if e.split == "train"]
    missing = [e.id for e in entries if e.target_path is None]
    if missing:
        raise UsageError(f"entries without target_path: {missing[:5]}")
    if not entries:
        raise UsageError("manifest has no train entries")
    pairs = [(read_disparity_png(e.disparity_path), read_disparity_png(e.target_path)) for e in entries]
    try:
        model = train_corrector(pairs, cfg.network, cfg.training)
    except predictor.TrainingDivergedError as exc:
        print(f"depthfill: error: corrector training diverged: {exc}", file=sys.stderr)
        return EXIT_FAIL
    predictor.save(model, out / "corrector.ckpt")
    print(json.dumps({"pairs": len(pairs), "checkpoint": str(out / "corrector.ckpt")}, sort_keys=True))
    return EXIT_OK


def cmd_correct(args) -> int:
    model = predictor.load(args.checkpoint)
    out = _out_dir(args)
    entries = read_manifest(args.manifest)

    def one(e):
        holed = read_disparity_png(e.disparity_path)
        fixed, ms = timed_correct(model, holed)
        write_disparity_png(fixed, out / f"{e.id}.png")
        return invalid_count(holed), invalid_count(fixed), ms

    rows, failures = _run_batch(entries, one, args.jobs)
    done = [(e, r) for e, r in zip(entries, rows) if r is not None]
    _write_rows(out / "correct.csv", ["image_id", "invalid_before", "remaining_invalid"],
                [[e.id, r[0], r[1]] for e, r in done])
    summary = {"images": len(done), "failed": len(failures),
               "remaining_invalid_total": sum(r[1] for _, r in done)}
    _write_json(out / "correct.json", summary)
    if done:
        # timing goes to the log only so output files stay reproducible
        log.info("mean correction time %.2f ms per frame", sum(r[2] for _, r in done) / len(done))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_FAIL if failures else EXIT_OK


def cmd_eval(args) -> int:
    out = _out_dir(args)
    entries = read_manifest(args.manifest)
    pred_dir = Path(args.pred_dir)

    def one(e):
        ref_path = {"disparity": e.disparity_path, "truth": e.truth_path, "target": e.target_path}[args.against]
        if ref_path is None:
            raise ValueError(f"no {args.against}_path in manifest entry")
        ref = read_disparity_png(ref_path)
        pred = read_disparity_png(pred_dir / f"{e.id}.png")
        return pred, ref, accuracy(pred, ref, masked=args.masked)

    rows, failures = _run_batch(entries, one, args.jobs)
    done = [(e, r) for e, r in zip(entries, rows) if r is not None]
    header = ["image_id", "absolute_error_sum", "target_sum", "error_ratio_pct", "accuracy_pct"]
    _write_rows(out / "eval.csv", header,
                [[e.id, s.absolute_error_sum, s.target_sum, s.error_ratio_pct, s.accuracy_pct] for e, (_, _, s) in done])
    if done:
        agg = pooled_accuracy([p for _, (p, _, _) in done], [r for _, (_, r, _) in done], masked=args.masked)
        summary = {"images": len(done), "failed": len(failures), "against": args.against, "masked": args.masked,
                   **agg.to_dict()}
    else:
        summary = {"images": 0, "failed": len(failures)}
    _write_json(out / "eval.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_FAIL if failures or not done else EXIT_OK


def cmd_manifest(args) -> int:
    entries = manifest_from_cityscapes(args.cityscapes)
    if not entries:
        log.error("no image/disparity pairs found under %s", args.cityscapes)
        return EXIT_FAIL
    write_manifest(entries, args.output)
    print(json.dumps({"entries": len(entries), "manifest": str(args.output)}))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depthfill", description="Depth-map hole filling pipeline")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, *, config=False, manifest=False, out=True, jobs=False, seed=False):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        if config:
            p.add_argument("--config", help="pipeline YAML configuration")
        if manifest:
            p.add_argument("--manifest", required=True, help="JSON-lines manifest")
        if out:
            p.add_argument("--out", help="output directory")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="worker threads for per-image work")
        if seed:
            p.add_argument("--seed", type=int, help="override every seed in the configuration")
        return p

    p = add("synth", cmd_synth, "generate a synthetic dataset", config=True, seed=True)
    p.add_argument("-n", "--count", dest="n", type=int, help="number of scenes")
    add("stats", cmd_stats, "invalid-pixel statistics", manifest=True, jobs=True)
    p = add("refine", cmd_refine, "iterative self-training refinement", config=True, manifest=True, seed=True)
    p.add_argument("--iterations", type=int, help="override refine.iterations")
    p = add("fill", cmd_fill, "fill holes with a trained predictor", manifest=True, jobs=True)
    p.add_argument("--checkpoint", required=True)
    add("train-corrector", cmd_train_corrector, "train the second-stage corrector",
        config=True, manifest=True, seed=True)
    p = add("correct", cmd_correct, "apply a trained corrector", manifest=True, jobs=True)
    p.add_argument("--checkpoint", required=True)
    p = add("eval", cmd_eval, "accuracy of predicted rasters", manifest=True, jobs=True)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--against", choices=("disparity", "truth", "target"), default="disparity")
    p.add_argument("--masked", action="store_true", help="ignore pixels invalid in the reference")
    p = add("manifest", cmd_manifest, "build a manifest from a Cityscapes-style tree", out=False)
    p.add_argument("--cityscapes", required=True, help="dataset root holding leftImg8bit/ and disparity/")
    p.add_argument("--output", required=True, help="manifest path to write")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "jobs", 1) < 1:
        parser.print_usage(sys.stderr)
        print("depthfill: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"depthfill: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ManifestError, config_mod.ConfigError, InfeasibleSceneError, OSError, ValueError) as exc:
        print(f"depthfill: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

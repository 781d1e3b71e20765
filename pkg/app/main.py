"""Entry point for the curvelet IQA toolkit: `python3 -m app.main <command>`."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

try:
    from .config import DEBUG, DISTORTIONS, FEATURE_CACHE_PATH, build_run_config
    from .datasets import SyntheticSpec, build_synthetic_manifest, load_manifest, make_base_images
    from .errors import CurviqaError, NoInputs
    from .evaluation import compare_models, comparison_frame, format_table, read_results, summarize_results, tally_outcomes
    from .features import extract_paths, get_extractor, write_features_csv
    from .image_io import list_images, load_gray
    from .protocol import run_protocol
    from .selftest import require_pass, run_selftest
    from .two_stage import GridConfig, load_model, make_split_plan, predict_quality
    from .utils.round_debug import print_prediction_debug
except ImportError:
    from config import DEBUG, DISTORTIONS, FEATURE_CACHE_PATH, build_run_config
    from datasets import SyntheticSpec, build_synthetic_manifest, load_manifest, make_base_images
    from errors import CurviqaError, NoInputs
    from evaluation import compare_models, comparison_frame, format_table, read_results, summarize_results, tally_outcomes
    from features import extract_paths, get_extractor, write_features_csv
    from image_io import list_images, load_gray
    from protocol import run_protocol
    from selftest import require_pass, run_selftest
    from two_stage import GridConfig, load_model, make_split_plan, predict_quality
    from utils.round_debug import print_prediction_debug

logger = logging.getLogger(__name__)

SYNTHETIC_CLASSES = ("wn", "gblur")


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose or DEBUG else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _run_config(args):
    flags = {
        "seed": getattr(args, "seed", None),
        "rounds": getattr(args, "rounds", None),
        "workers": getattr(args, "workers", None),
    }
    if getattr(args, "save_models", False):
        flags["save_models"] = True
    return build_run_config(flags, getattr(args, "config", None))


def cmd_extract(args) -> None:
    source = Path(args.input)
    if source.is_dir():
        paths = list_images(source)
    elif source.is_file():
        paths = [source]
    else:
        raise NoInputs(f"no such file or directory: {source}")
    if not paths:
        raise NoInputs(f"no images found in {source}")

    extractor = get_extractor(args.extractor)
    workers = args.workers or _run_config(args).workers
    rows = extract_paths([str(p) for p in paths], args.extractor, workers, progress=True)
    write_features_csv(list(zip([str(p) for p in paths], rows)), args.out, extractor.feature_names)
    print(f"Features written: {args.out}")
    print(f"Images: {len(paths)}")


def _print_tables(results, classes: Sequence[str]) -> None:
    summary = summarize_results(results, classes)
    print("\nMulticlass (mean over rounds)")
    print(summary[["rounds", "srocc", "krocc", "accuracy"]].to_string(float_format=lambda v: f"{v:.4f}"))
    per_class = [f"{c}_srocc" for c in classes] + [f"{c}_krocc" for c in classes]
    if not per_class:
        return
    print("\nPer distortion class (mean over rounds)")
    print(summary[per_class].to_string(float_format=lambda v: f"{v:.4f}"))


def _train(args, manifest, test_manifests, classes: Sequence[str]) -> None:
    cfg = _run_config(args)
    out_dir = Path(args.out)
    plan = make_split_plan(manifest, cfg.repeats, cfg.folds, cfg.seed)
    results = run_protocol(
        manifest,
        test_manifests,
        plan,
        GridConfig.from_run_config(cfg),
        rounds=cfg.rounds,
        classes=classes,
        workers=cfg.workers,
        results_path=str(out_dir / "results.csv"),
        models_dir=str(out_dir / "models") if cfg.save_models else None,
        cache_path=str(out_dir / Path(FEATURE_CACHE_PATH).name),
        seed=cfg.seed,
    )
    print(f"Results written: {out_dir / 'results.csv'}")
    print(f"Rounds completed: {len({r.round_id for r in results})}")
    _print_tables(results, classes)


def cmd_train(args) -> None:
    manifest = load_manifest(args.manifest)
    _train(args, manifest, [], tuple(args.classes or DISTORTIONS))


def cmd_benchmark(args) -> None:
    if args.synthetic:
        spec = SyntheticSpec(tuple(make_base_images(args.bases, seed=args.seed or 0)))
        manifest = build_synthetic_manifest(spec, args.synthetic)
        _train(args, manifest, [], SYNTHETIC_CLASSES)
        return
    if not args.manifest:
        raise NoInputs("benchmark needs --manifest or --synthetic")
    manifest = load_manifest(args.manifest)
    tests = [load_manifest(p) for p in args.test_manifest or []]
    _train(args, manifest, tests, tuple(args.classes or DISTORTIONS))


def cmd_predict(args) -> None:
    model = load_model(args.model)
    prediction = predict_quality(model, load_gray(args.image))
    print(f"Q: {prediction.quality:.4f}")
    print("p: " + " ".join(f"{c}={v:.4f}" for c, v in zip(model.classes, prediction.probabilities)))
    print("q: " + " ".join(f"{c}={v:.4f}" for c, v in zip(model.classes, prediction.class_scores)))
    print(f"Class: {prediction.hard_class}")
    if DEBUG:
        print_prediction_debug(args.image, prediction, model.classes)


def cmd_evaluate(args) -> None:
    results = read_results(args.results)
    classes = sorted({c for r in results for c in r.per_class}, key=lambda c: (c not in DISTORTIONS, c))
    _print_tables(results, classes)
    if not args.baseline:
        return

    baseline = read_results(args.baseline)
    metrics = ["srocc", "krocc", "accuracy"] + [f"{c}_{m}" for c in classes for m in ("srocc", "krocc")]
    table = compare_models(results, baseline, metrics)
    print("\nWilcoxon signed-rank comparison (* = significant winner, p < 0.05)")
    print(format_table(table, Path(args.results).stem, Path(args.baseline).stem))
    tally = tally_outcomes(table)
    print(
        f"\nFavorable: {tally['favorable']} | Indifferent: {tally['indifferent']} | "
        f"Unfavorable: {tally['unfavorable']}"
    )
    if tally["persistent"]:
        print(f"Persistent improvements: {', '.join(tally['persistent'])}")
    if args.table_out:
        Path(args.table_out).parent.mkdir(parents=True, exist_ok=True)
        comparison_frame(table).to_csv(args.table_out, index=False, float_format="%.17g")
        print(f"Table written: {args.table_out}")


def cmd_selftest(args) -> None:
    results = run_selftest(groups=args.group or None)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<16} {r.seconds:6.1f}s  {r.detail}")
    require_pass(results)


def cmd_synth(args) -> None:
    levels = args.levels
    spec = SyntheticSpec(
        tuple(make_base_images(args.bases, seed=args.seed)),
        wn_sigmas=tuple(5.0 * 2**i for i in range(levels)),
        gblur_sigmas=tuple(0.8 * 2**i for i in range(levels)),
        seed=args.seed,
    )
    manifest = build_synthetic_manifest(spec, args.out)
    print(f"Manifest written: {Path(args.out) / 'manifest.csv'}")
    print(f"Images: {len(manifest)}")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "--grid", dest="config", help="KEY=VALUE run configuration file (overrides flags)")
    p.add_argument("--rounds", type=int, help="Number of protocol rounds (1..200)")
    p.add_argument("--seed", type=int, help="Split and search seed")
    p.add_argument("--workers", type=int, help="Worker processes")
    p.add_argument("--save-models", action="store_true", help="Write one model file per round")
    p.add_argument("--classes", nargs="+", choices=DISTORTIONS, help="Distortion classes to model")
    p.add_argument("--out", default="runs", help="Output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="No-reference image quality with curvelet statistics")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="Extract feature vectors")
    p.add_argument("--input", required=True, help="Image file or directory")
    p.add_argument("--out", required=True, help="Feature CSV")
    p.add_argument("--extractor", default="m1")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="Run the training protocol on a manifest")
    p.add_argument("--manifest", required=True)
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("benchmark", help="Protocol with external test sets, or on synthetic data")
    p.add_argument("--manifest")
    p.add_argument("--test-manifest", action="append")
    p.add_argument("--synthetic", help="Directory for a generated synthetic dataset")
    p.add_argument("--bases", type=int, default=5, help="Synthetic base images")
    _add_run_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("predict", help="Predict the quality of one image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="Summarise results, optionally against a baseline")
    p.add_argument("--results", required=True)
    p.add_argument("--baseline")
    p.add_argument("--table-out", help="Comparison table CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("selftest", help="Run the embedded property suite")
    p.add_argument("--group", action="append", help="Run only this group (repeatable)")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("synth", help="Write a synthetic wn/gblur dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--bases", type=int, default=5)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        args.func(args)
    except CurviqaError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

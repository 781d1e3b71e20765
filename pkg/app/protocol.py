"""Train/evaluate protocol: one two-stage model per (repeat, fold) round,
scored on the round's held-out references and on every external test set."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

try:
    from .config import DEBUG, DEFAULT_SEED, DISTORTIONS
    from .datasets import DatasetManifest, records_for
    from .errors import DegenerateVariance, IoError, RunMismatch, SchemaError, TooFewSamples
    from .evaluation import RoundResult, accuracy, append_results, krocc, read_results, srocc, write_results
    from .features import extract_manifest
    from .two_stage import GridConfig, RoundSpec, SplitPlan, TwoStageModel, predict_features, save_model, train_round
    from .utils.round_debug import print_round_debug
except ImportError:
    from config import DEBUG, DEFAULT_SEED, DISTORTIONS
    from datasets import DatasetManifest, records_for
    from errors import DegenerateVariance, IoError, RunMismatch, SchemaError, TooFewSamples
    from evaluation import RoundResult, accuracy, append_results, krocc, read_results, srocc, write_results
    from features import extract_manifest
    from two_stage import GridConfig, RoundSpec, SplitPlan, TwoStageModel, predict_features, save_model, train_round
    from utils.round_debug import print_round_debug

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TestSet:
    name: str
    manifest: DatasetManifest
    features: np.ndarray


def heldout_name(manifest: DatasetManifest) -> str:
    return f"{manifest.dataset_id}-heldout"


def _safe(fn, x, y) -> float:
    try:
        return fn(x, y)
    except (DegenerateVariance, TooFewSamples):
        return float("nan")


def evaluate_test_set(
    model: TwoStageModel,
    round_id: int,
    name: str,
    manifest: DatasetManifest,
    features: np.ndarray,
) -> RoundResult:
    """Rank correlations of Q with the subjective scores, sign-normalised to
    the model's polarity, plus classifier accuracy and per-class correlations."""
    predictions = predict_features(model, features)
    quality = np.array([p.quality for p in predictions])
    truth = manifest.scores()
    sign = 1.0 if manifest.polarity == model.score_polarity else -1.0
    labels = manifest.labels()

    per_class: Dict[str, Tuple[float, float]] = {}
    for cls in model.classes:
        rows = np.array([label == cls for label in labels])
        if rows.sum() >= 3:
            per_class[cls] = (
                sign * _safe(srocc, quality[rows], truth[rows]),
                sign * _safe(krocc, quality[rows], truth[rows]),
            )
    return RoundResult(
        round_id=round_id,
        test_set=name,
        srocc=sign * _safe(srocc, quality, truth),
        krocc=sign * _safe(krocc, quality, truth),
        accuracy=accuracy([p.hard_class for p in predictions], labels),
        per_class=per_class,
    )


def _check_no_leakage(spec: RoundSpec) -> None:
    overlap = set(spec.train_refs) & set(spec.test_refs)
    if overlap:
        raise SchemaError(f"round {spec.round_id}: references in both train and test: {sorted(overlap)}")


def run_round(
    spec: RoundSpec,
    manifest: DatasetManifest,
    features: np.ndarray,
    externals: Sequence[TestSet],
    grid: GridConfig,
    classes: Sequence[str] = DISTORTIONS,
    seed: int = DEFAULT_SEED,
    model_path: Optional[str] = None,
) -> List[RoundResult]:
    _check_no_leakage(spec)
    model = train_round(manifest, features, spec, grid, classes=classes, seed=seed)
    if model_path:
        save_model(model, model_path)

    test_refs = set(spec.test_refs)
    rows = [i for i, r in enumerate(manifest.records) if r.reference_id in test_refs]
    heldout = records_for(manifest, rows)
    results = [evaluate_test_set(model, spec.round_id, heldout_name(manifest), heldout, features[rows])]
    for ext in externals:
        results.append(evaluate_test_set(model, spec.round_id, ext.name, ext.manifest, ext.features))
    return results


def _run_round_job(job) -> Tuple[RoundSpec, List[RoundResult]]:
    spec, kwargs = job
    return spec, run_round(spec, **kwargs)


def identity_path(results_path) -> Path:
    return Path(results_path).with_suffix(".run.json")


def run_identity(
    train_manifest: DatasetManifest,
    test_sets: Sequence[str],
    plan: SplitPlan,
    grid: GridConfig,
    classes: Sequence[str],
    extractor: str,
    seed: int,
) -> Dict[str, object]:
    """Everything a results file depends on apart from the number of rounds."""
    digest = hashlib.sha256(json.dumps([plan.seed, plan.assignments]).encode("utf-8")).hexdigest()
    return {
        "dataset": train_manifest.dataset_id,
        "images": len(train_manifest),
        "test_sets": list(test_sets),
        "repeats": plan.repeats,
        "folds": plan.folds,
        "plan": digest,
        "grid": {k: list(v) if isinstance(v, tuple) else v for k, v in vars(grid).items()},
        "classes": list(classes),
        "extractor": extractor,
        "seed": seed,
    }


def check_run_identity(results_path, identity: Dict[str, object]) -> None:
    """Write the identity of a new results file; refuse to resume a different run."""
    results, sidecar = Path(results_path), identity_path(results_path)
    if results.exists() and results.stat().st_size > 0:
        if not sidecar.exists():
            raise RunMismatch(f"{results} has no run identity file {sidecar.name}; use a new output path")
        try:
            recorded = json.loads(sidecar.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise IoError(f"cannot read {sidecar}: {exc}") from exc
        changed = sorted(k for k in set(recorded) | set(identity) if recorded.get(k) != identity.get(k))
        if changed:
            raise RunMismatch(f"{results} was written by a different run ({', '.join(changed)} differ)")
        return
    try:
        sidecar.parent.mkdir(parents=True, exist_ok=True)
        with open(sidecar, "w", encoding="utf-8") as f:
            json.dump(identity, f, indent=2)
    except OSError as exc:
        raise IoError(f"cannot write {sidecar}: {exc}") from exc


def completed_rounds(results_path, test_sets: Sequence[str]) -> Dict[int, List[RoundResult]]:
    """Rounds already in the results file with a row for every test set."""
    if not results_path or not Path(results_path).exists():
        return {}
    by_round: Dict[int, Dict[str, RoundResult]] = {}
    for result in read_results(results_path):
        by_round.setdefault(result.round_id, {}).setdefault(result.test_set, result)
    wanted = list(test_sets)
    return {r: [rows[name] for name in wanted] for r, rows in by_round.items() if set(wanted) <= set(rows)}


def run_protocol(
    train_manifest: DatasetManifest,
    test_manifests: Sequence[DatasetManifest],
    plan: SplitPlan,
    grid: GridConfig,
    rounds: Optional[int] = None,
    classes: Sequence[str] = DISTORTIONS,
    workers: int = 1,
    results_path: Optional[str] = None,
    models_dir: Optional[str] = None,
    cache_path: Optional[str] = None,
    extractor: str = "m1",
    seed: int = DEFAULT_SEED,
    progress: bool = True,
) -> List[RoundResult]:
    """Run (or resume) the first `rounds` rounds of `plan`. Finished rounds are
    appended to `results_path` in round order whatever the worker count."""
    features = extract_manifest(train_manifest, extractor, workers, cache_path, progress)
    externals = [
        TestSet(m.dataset_id, m, extract_manifest(m, extractor, workers, cache_path, progress))
        for m in test_manifests
    ]
    names = [heldout_name(train_manifest)] + [t.name for t in externals]
    specs = plan.rounds(rounds)

    done: Dict[int, List[RoundResult]] = {}
    if results_path:
        check_run_identity(results_path, run_identity(train_manifest, names, plan, grid, classes, extractor, seed))
        done = completed_rounds(results_path, names)
        kept = [row for r in sorted(done) for row in done[r]]
        if Path(results_path).exists() and len(read_results(results_path)) != len(kept):
            # rows of interrupted rounds are dropped before those rounds rerun
            write_results(kept, results_path, classes)
    pending = [s for s in specs if s.round_id not in done]
    if done:
        logger.info("resuming: %d of %d rounds already in %s", len(specs) - len(pending), len(specs), results_path)

    def job(spec: RoundSpec):
        model_path = None
        if models_dir:
            model_path = str(Path(models_dir) / f"round_{spec.round_id:03d}.cviq")
        kwargs = dict(
            manifest=train_manifest,
            features=features,
            externals=externals,
            grid=grid,
            classes=tuple(classes),
            seed=seed,
            model_path=model_path,
        )
        return spec, kwargs

    collected: Dict[int, List[RoundResult]] = dict(done)
    finished: Dict[int, List[RoundResult]] = {}
    next_index = 0

    def record(spec: RoundSpec, results: List[RoundResult]) -> None:
        nonlocal next_index
        finished[spec.round_id] = results
        while next_index < len(pending) and pending[next_index].round_id in finished:
            ready = pending[next_index]
            rows = finished.pop(ready.round_id)
            collected[ready.round_id] = rows
            if results_path:
                append_results(rows, results_path, classes)
            if DEBUG:
                print_round_debug(ready.round_id, ready.train_refs, ready.test_refs, rows)
            next_index += 1

    bar = tqdm(total=len(pending), desc="Rounds", disable=not progress)
    try:
        if workers > 1 and len(pending) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_run_round_job, job(s)) for s in pending]
                for future in as_completed(futures):
                    spec, results = future.result()
                    record(spec, results)
                    bar.update(1)
        else:
            for s in pending:
                spec, results = _run_round_job(job(s))
                record(spec, results)
                bar.update(1)
    finally:
        bar.close()

    order = {name: i for i, name in enumerate(names)}
    ordered = []
    for spec in specs:
        ordered.extend(sorted(collected[spec.round_id], key=lambda r: order.get(r.test_set, len(order))))
    return ordered

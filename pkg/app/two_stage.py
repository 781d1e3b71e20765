"""Two-stage quality model: a calibrated distortion classifier whose class
probabilities weight the scores of one specialist regressor per class,
Q = sum_k p_k q_k. Also the split plan and hyperparameter search."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    from .config import (
        DEFAULT_SEED,
        DISTORTIONS,
        GRID_C,
        GRID_CV_FOLDS,
        GRID_CV_REPEATS,
        GRID_GAMMA,
        GRID_NU,
        SPLIT_FOLDS,
        SPLIT_REPEATS,
    )
    from .datasets import DatasetManifest
    from .errors import (
        DegenerateVariance,
        InvalidParameter,
        LengthMismatch,
        MissingClass,
        SingleClass,
        TooFewReferences,
        TooFewSamples,
        UntrainedModel,
    )
    from .evaluation import srocc
    from .features import get_extractor
    from .image_io import GrayImage
    from .model_io import read_container, write_container
    from .svm import (
        Standardizer,
        SvcModel,
        SvrModel,
        fit_standardizer,
        predict,
        predict_class,
        predict_proba,
        train_svc,
        train_svr,
    )
except ImportError:
    from config import (
        DEFAULT_SEED,
        DISTORTIONS,
        GRID_C,
        GRID_CV_FOLDS,
        GRID_CV_REPEATS,
        GRID_GAMMA,
        GRID_NU,
        SPLIT_FOLDS,
        SPLIT_REPEATS,
    )
    from datasets import DatasetManifest
    from errors import (
        DegenerateVariance,
        InvalidParameter,
        LengthMismatch,
        MissingClass,
        SingleClass,
        TooFewReferences,
        TooFewSamples,
        UntrainedModel,
    )
    from evaluation import srocc
    from features import get_extractor
    from image_io import GrayImage
    from model_io import read_container, write_container
    from svm import (
        Standardizer,
        SvcModel,
        SvrModel,
        fit_standardizer,
        predict,
        predict_class,
        predict_proba,
        train_svc,
        train_svr,
    )

logger = logging.getLogger(__name__)

MODEL_TYPE = "two-stage-svm"


@dataclass(frozen=True)
class GridConfig:
    c_grid: Tuple[float, ...] = GRID_C
    gamma_grid: Tuple[float, ...] = GRID_GAMMA
    nu_grid: Tuple[float, ...] = GRID_NU
    cv_folds: int = GRID_CV_FOLDS
    cv_repeats: int = GRID_CV_REPEATS

    @classmethod
    def from_run_config(cls, cfg) -> "GridConfig":
        return cls(
            c_grid=tuple(cfg.c_grid),
            gamma_grid=tuple(cfg.gamma_grid),
            nu_grid=tuple(cfg.nu_grid),
            cv_folds=cfg.cv_folds,
            cv_repeats=cfg.cv_repeats,
        )

    def cells(self, task: str) -> List[Tuple[float, float, float]]:
        """(C, gamma, nu) candidates in tie-break order: smaller C, then gamma, then nu."""
        nus = sorted(self.nu_grid) if task == "regress" else [0.0]
        return list(product(sorted(self.c_grid), sorted(self.gamma_grid), nus))


@dataclass(frozen=True)
class GridChoice:
    C: float
    gamma: float
    nu: float
    score: float


@dataclass(frozen=True)
class RoundSpec:
    round_id: int
    repeat: int
    fold: int
    train_refs: Tuple[str, ...]
    test_refs: Tuple[str, ...]


@dataclass(frozen=True)
class SplitPlan:
    """Reference ids of every fold of every repeat."""

    assignments: Tuple[Tuple[Tuple[str, ...], ...], ...]
    seed: int

    @property
    def repeats(self) -> int:
        return len(self.assignments)

    @property
    def folds(self) -> int:
        return len(self.assignments[0]) if self.assignments else 0

    def rounds(self, limit: Optional[int] = None) -> List[RoundSpec]:
        """Rounds in (repeat, fold) order; `limit` keeps the first k."""
        out = []
        for r, folds in enumerate(self.assignments):
            for f, test in enumerate(folds):
                train = tuple(ref for g, other in enumerate(folds) if g != f for ref in other)
                out.append(RoundSpec(len(out), r, f, train, tuple(test)))
        return out if limit is None else out[:limit]


def make_split_plan(
    manifest: DatasetManifest,
    repeats: int = SPLIT_REPEATS,
    folds: int = SPLIT_FOLDS,
    seed: int = DEFAULT_SEED,
) -> SplitPlan:
    refs = sorted(manifest.reference_ids())
    if len(refs) < folds:
        raise TooFewReferences(f"{len(refs)} reference images cannot fill {folds} folds")
    rng = np.random.default_rng(seed)
    assignments = []
    for _ in range(repeats):
        shuffled = [refs[i] for i in rng.permutation(len(refs))]
        parts = np.array_split(np.arange(len(refs)), folds)
        assignments.append(tuple(tuple(shuffled[i] for i in part) for part in parts))
    return SplitPlan(tuple(assignments), seed)


def _stratified_folds(labels: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    assignment = np.empty(labels.size, dtype=int)
    offset = 0
    for cls in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        assignment[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size
    return assignment


def _plain_folds(n: int, folds: int, rng: np.random.Generator) -> np.ndarray:
    assignment = np.empty(n, dtype=int)
    assignment[rng.permutation(n)] = np.arange(n) % folds
    return assignment


def _cv_accuracy(X, labels, assignment, folds, C, gamma) -> float:
    correct = 0
    for f in range(folds):
        test = assignment == f
        train = ~test
        if not test.any():
            continue
        try:
            model = train_svc(X[train], labels[train], C, gamma, probability=False)
            predicted = np.asarray(predict_class(model, X[test]))
        except SingleClass:
            predicted = np.full(test.sum(), labels[train][0])
        correct += int(np.sum(predicted == labels[test]))
    return correct / labels.size


def _cv_srocc(X, targets, assignment, folds, C, gamma, nu) -> float:
    predicted = np.zeros(targets.size)
    for f in range(folds):
        test = assignment == f
        if not test.any():
            continue
        model = train_svr(X[~test], targets[~test], C, gamma, nu)
        predicted[test] = predict(model, X[test])
    try:
        return srocc(predicted, targets)
    except DegenerateVariance:
        return -1.0


def grid_search(
    X,
    y,
    grid: GridConfig,
    task: str = "classify",
    seed: int = DEFAULT_SEED,
) -> GridChoice:
    """Exhaustive repeated k-fold search; accuracy for classification, SROCC of
    out-of-fold predictions for regression."""
    X = np.asarray(X, dtype=float)
    if task not in ("classify", "regress"):
        raise InvalidParameter(f"unknown task {task!r}")
    n = X.shape[0]
    if len(y) != n:
        raise LengthMismatch(f"{n} rows but {len(y)} targets")
    if n < max(grid.cv_folds, 2):
        raise TooFewSamples(f"{n} samples for {grid.cv_folds}-fold cross-validation")

    if task == "classify":
        labels = np.asarray([str(v) for v in y])
        if len(set(labels.tolist())) < 2:
            raise SingleClass("classification grid search needs two classes")
    else:
        targets = np.asarray(y, dtype=float)

    splits = []
    for r in range(grid.cv_repeats):
        rng = np.random.default_rng(seed + r)
        if task == "classify":
            splits.append(_stratified_folds(labels, grid.cv_folds, rng))
        else:
            splits.append(_plain_folds(n, grid.cv_folds, rng))

    best: Optional[GridChoice] = None
    for C, gamma, nu in grid.cells(task):
        if task == "classify":
            scores = [_cv_accuracy(X, labels, a, grid.cv_folds, C, gamma) for a in splits]
        else:
            scores = [_cv_srocc(X, targets, a, grid.cv_folds, C, gamma, nu) for a in splits]
        score = float(np.mean(scores))
        # Strict improvement only: earlier (smaller) cells win ties.
        if best is None or score > best.score:
            best = GridChoice(C, gamma, nu, score)
    logger.debug("grid search (%s): C=%g gamma=%g nu=%g score=%.4f", task, best.C, best.gamma, best.nu, best.score)
    return best


@dataclass(frozen=True)
class Prediction:
    quality: float
    probabilities: np.ndarray
    class_scores: np.ndarray
    hard_class: str


@dataclass(frozen=True)
class TwoStageModel:
    standardizer: Standardizer
    classifier: SvcModel
    regressors: Dict[str, SvrModel]
    classes: Tuple[str, ...] = DISTORTIONS
    score_polarity: str = "lower-is-better"
    choices: Dict[str, GridChoice] = field(default_factory=dict)

    def __post_init__(self):
        if tuple(self.classifier.classes) != tuple(self.classes):
            raise MissingClass(f"classifier classes {self.classifier.classes} != {self.classes}")
        missing = [c for c in self.classes if c not in self.regressors]
        if missing:
            raise MissingClass(f"no regressor for {missing}")


def train_two_stage(
    X,
    labels: Sequence[str],
    scores,
    grid: GridConfig,
    classes: Sequence[str] = DISTORTIONS,
    polarity: str = "lower-is-better",
    seed: int = DEFAULT_SEED,
) -> TwoStageModel:
    """Fit the shared standardizer, then the classifier on every row and each
    regressor on the rows of its own class."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray([str(v) for v in labels])
    scores = np.asarray(scores, dtype=float)
    classes = tuple(classes)
    missing = [c for c in classes if not np.any(labels == c)]
    if missing:
        raise MissingClass(f"training set has no images of class {missing}")

    keep = np.isin(labels, classes)
    X, labels, scores = X[keep], labels[keep], scores[keep]
    standardizer = fit_standardizer(X)
    Z = standardizer.apply(X)

    choices = {}
    svc_choice = grid_search(Z, labels, grid, "classify", seed)
    choices["classifier"] = svc_choice
    classifier = train_svc(Z, labels, svc_choice.C, svc_choice.gamma, classes=classes)

    regressors = {}
    for cls in classes:
        rows = labels == cls
        choice = grid_search(Z[rows], scores[rows], grid, "regress", seed)
        choices[cls] = choice
        regressors[cls] = train_svr(Z[rows], scores[rows], choice.C, choice.gamma, choice.nu)

    return TwoStageModel(standardizer, classifier, regressors, classes, polarity, choices)


def train_round(
    manifest: DatasetManifest,
    features: np.ndarray,
    round_spec: RoundSpec,
    grid: GridConfig,
    classes: Sequence[str] = DISTORTIONS,
    seed: int = DEFAULT_SEED,
) -> TwoStageModel:
    """Train on the degraded images of the round's training references."""
    train_refs = set(round_spec.train_refs)
    rows = [i for i, r in enumerate(manifest.records) if r.reference_id in train_refs]
    labels = [manifest.records[i].distortion for i in rows]
    scores = [manifest.records[i].score for i in rows]
    return train_two_stage(
        np.asarray(features)[rows],
        labels,
        scores,
        grid,
        classes=classes,
        polarity=manifest.polarity,
        seed=seed + round_spec.round_id,
    )


def predict_features(model: Optional[TwoStageModel], features) -> List[Prediction]:
    """Predictions for already-extracted feature rows."""
    if model is None:
        raise UntrainedModel("two-stage model has not been trained")
    Z = model.standardizer.apply(np.atleast_2d(np.asarray(features, dtype=float)))
    P = np.atleast_2d(predict_proba(model.classifier, Z))
    Qs = np.column_stack([predict(model.regressors[c], Z) for c in model.classes])
    out = []
    for p, q in zip(P, Qs):
        quality = float(p @ q)
        # Keep the fused score inside the convex hull despite rounding.
        quality = min(max(quality, float(q.min())), float(q.max()))
        out.append(Prediction(quality, p, q, model.classes[int(np.argmax(p))]))
    return out


def predict_quality(model: TwoStageModel, img: GrayImage, extractor: str = "m1") -> Prediction:
    vector = get_extractor(extractor).extract_image(img)
    return predict_features(model, vector)[0]


def save_model(model: TwoStageModel, path) -> None:
    svc = model.classifier
    arrays = {
        "standardizer.means": model.standardizer.means,
        "standardizer.stds": model.standardizer.stds,
        "svc.support_vectors": svc.support_vectors,
        "svc.pair_coef": svc.pair_coef,
        "svc.rho": svc.rho,
        "svc.prob_a": svc.prob_a,
        "svc.prob_b": svc.prob_b,
    }
    regressors = {}
    for cls in model.classes:
        reg = model.regressors[cls]
        arrays[f"svr.{cls}.support_vectors"] = reg.support_vectors
        arrays[f"svr.{cls}.coef"] = reg.coef
        regressors[cls] = {
            "bias": reg.bias,
            "gamma": reg.gamma,
            "C": reg.C,
            "nu": reg.nu,
            "epsilon": reg.epsilon,
            "n_train": reg.n_train,
        }
    header = {
        "classes": list(model.classes),
        "score_polarity": model.score_polarity,
        "svc": {"gamma": svc.gamma, "C": svc.C, "probability": svc.probability},
        "svr": regressors,
        "choices": {k: vars(v) for k, v in model.choices.items()},
    }
    write_container(path, MODEL_TYPE, header, arrays)


def load_model(path) -> TwoStageModel:
    meta, arrays = read_container(path, MODEL_TYPE)
    classes = tuple(meta["classes"])
    n_features = arrays["standardizer.means"].size

    def matrix(name: str) -> np.ndarray:
        return arrays[name].reshape(-1, n_features)

    svc = SvcModel(
        classes=classes,
        support_vectors=matrix("svc.support_vectors"),
        pair_coef=arrays["svc.pair_coef"].reshape(len(arrays["svc.rho"]), -1),
        rho=arrays["svc.rho"],
        prob_a=arrays["svc.prob_a"],
        prob_b=arrays["svc.prob_b"],
        gamma=meta["svc"]["gamma"],
        C=meta["svc"]["C"],
        probability=meta["svc"]["probability"],
    )
    regressors = {}
    for cls in classes:
        info = meta["svr"][cls]
        regressors[cls] = SvrModel(
            support_vectors=matrix(f"svr.{cls}.support_vectors"),
            coef=arrays[f"svr.{cls}.coef"],
            bias=info["bias"],
            gamma=info["gamma"],
            C=info["C"],
            nu=info["nu"],
            epsilon=info["epsilon"],
            n_train=info["n_train"],
        )
    choices = {k: GridChoice(**v) for k, v in meta.get("choices", {}).items()}
    return TwoStageModel(
        Standardizer(arrays["standardizer.means"], arrays["standardizer.stds"]),
        svc,
        regressors,
        classes,
        meta["score_polarity"],
        choices,
    )

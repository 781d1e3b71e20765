"""M1 curvelet features: scale energies (MES), S4 orientation energy (OED4) and
finest-scale log statistics (SFS5), pooled per image by the mean over blocks."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

try:
    from .config import FEATURE_NAMES, LOG_FLOOR
    from .errors import (
        DegenerateScale,
        InsufficientSamples,
        IoError,
        SchemaError,
        ShapeError,
    )
    from .fdct import CoefficientPyramid, CurveletConfig, forward
    from .image_io import GrayImage, fragment, load_gray
    from .robust_stats import bowley_skew, mad, moors_kurt, octiles, qcd, rmad
except ImportError:
    from config import FEATURE_NAMES, LOG_FLOOR
    from errors import (
        DegenerateScale,
        InsufficientSamples,
        IoError,
        SchemaError,
        ShapeError,
    )
    from fdct import CoefficientPyramid, CurveletConfig, forward
    from image_io import GrayImage, fragment, load_gray
    from robust_stats import bowley_skew, mad, moors_kurt, octiles, qcd, rmad

logger = logging.getLogger(__name__)

N_FEATURES = len(FEATURE_NAMES)
EMO4_LENGTH = 64


@dataclass(frozen=True)
class FeatureVector:
    """The 11 M1 features in canonical order."""

    d1: float
    d2: float
    d3: float
    qcd4: float
    rmad4: float
    area4: float
    med5: float
    iqr5: float
    mad5: float
    skew5: float
    kurt5: float

    def to_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(FEATURE_NAMES, astuple(self)))

    @classmethod
    def from_array(cls, values) -> "FeatureVector":
        values = np.asarray(values, dtype=float).ravel()
        if values.size != N_FEATURES:
            raise ShapeError(f"expected {N_FEATURES} feature values, got {values.size}")
        return cls(*(float(v) for v in values))


# Per-block and pooled vectors share one layout.
BlockFeatures = FeatureVector


@dataclass(frozen=True)
class EMO4Series:
    values: Tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != EMO4_LENGTH:
            raise ShapeError(f"EMO4 series needs {EMO4_LENGTH} values, got {len(self.values)}")
        if any(v < 0 for v in self.values):
            raise ShapeError("EMO4 values must be non-negative")


def _log_magnitudes(magnitudes: np.ndarray) -> np.ndarray:
    return np.log10(np.maximum(magnitudes, LOG_FLOOR))


def mean_log_energy(pyr: CoefficientPyramid, j: int) -> float:
    """Mean of log10 |c| over every coefficient of scale j (1-based)."""
    return float(np.mean(_log_magnitudes(pyr.magnitudes(j))))


def mes_features(pyr: CoefficientPyramid) -> Tuple[float, float, float]:
    e = [mean_log_energy(pyr, j) for j in (1, 2, 3, 4)]
    return (e[0] - e[1], e[1] - e[2], e[2] - e[3])


def emo4(pyr: CoefficientPyramid) -> EMO4Series:
    """Mean coefficient magnitude of each S4 orientation panel."""
    return EMO4Series(tuple(float(np.mean(np.abs(p))) for p in pyr.panels(4)))


def _or_zero(stat: Callable, *args) -> float:
    try:
        return stat(*args)
    except DegenerateScale:
        return 0.0


def oed4_features(series: EMO4Series) -> Tuple[float, float, float]:
    values = np.asarray(series.values, dtype=float)
    if not np.any(values):
        return (0.0, 0.0, 0.0)
    return (_or_zero(qcd, values), _or_zero(rmad, values), float(np.sum(values)))


def sfs5_features(pyr: CoefficientPyramid) -> Tuple[float, float, float, float, float]:
    e5 = _log_magnitudes(pyr.magnitudes(5))
    oc = octiles(e5)
    return (
        oc.median,
        oc.iqr,
        mad(e5),
        _or_zero(bowley_skew, oc),
        _or_zero(moors_kurt, oc),
    )


def features_from_pyramid(pyr: CoefficientPyramid) -> FeatureVector:
    return FeatureVector(*mes_features(pyr), *oed4_features(emo4(pyr)), *sfs5_features(pyr))


def extract_block(block, cfg: Optional[CurveletConfig] = None) -> FeatureVector:
    return features_from_pyramid(forward(np.asarray(block, dtype=float), cfg))


def extract_image(img: GrayImage, cfg: Optional[CurveletConfig] = None) -> FeatureVector:
    """Componentwise mean of the block features of every tile."""
    blocks = fragment(img).blocks
    stacked = np.stack([extract_block(b, cfg).to_array() for b in blocks])
    return FeatureVector.from_array(stacked.mean(axis=0))


def redundancy_check(features) -> np.ndarray:
    """Eigenvalues of the feature covariance matrix, largest first."""
    X = np.asarray(
        [f.to_array() if isinstance(f, FeatureVector) else f for f in features], dtype=float
    )
    if X.ndim != 2 or X.shape[0] < 12:
        raise InsufficientSamples(f"redundancy check needs >= 12 samples, got {len(X)}")
    eigenvalues = np.linalg.eigvalsh(np.cov(X, rowvar=False))
    return eigenvalues[::-1]


def near_zero_eigenvalues(eigenvalues: np.ndarray, rel_tol: float = 1e-8) -> int:
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    return int(np.sum(eigenvalues <= rel_tol * eigenvalues.max()))


class FeatureExtractor:
    """Image -> fixed-length feature vector."""

    name: str = ""
    feature_names: Tuple[str, ...] = ()

    def extract_image(self, img: GrayImage) -> np.ndarray:
        raise NotImplementedError


class M1Extractor(FeatureExtractor):
    name = "m1"
    feature_names = FEATURE_NAMES

    def __init__(self, cfg: Optional[CurveletConfig] = None):
        self.cfg = cfg or CurveletConfig()

    def extract_image(self, img: GrayImage) -> np.ndarray:
        return extract_image(img, self.cfg).to_array()


_EXTRACTORS: Dict[str, Callable[[], FeatureExtractor]] = {"m1": M1Extractor}


def register_extractor(name: str, factory: Callable[[], FeatureExtractor]) -> None:
    _EXTRACTORS[name.lower()] = factory


def get_extractor(name: str = "m1") -> FeatureExtractor:
    try:
        return _EXTRACTORS[name.lower()]()
    except KeyError as exc:
        known = ", ".join(sorted(_EXTRACTORS))
        raise SchemaError(f"unknown feature extractor {name!r} (known: {known})") from exc


def _extract_path(job: Tuple[str, str]) -> np.ndarray:
    path, extractor_name = job
    return get_extractor(extractor_name).extract_image(load_gray(path))


def extract_paths(
    paths: Sequence[str],
    extractor: str = "m1",
    workers: int = 1,
    progress: bool = False,
) -> np.ndarray:
    """Feature matrix with one row per path, in input order."""
    jobs = [(str(p), extractor) for p in paths]
    if not jobs:
        return np.empty((0, len(get_extractor(extractor).feature_names)))

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(
                tqdm(pool.map(_extract_path, jobs), total=len(jobs), disable=not progress, desc="features")
            )
    else:
        rows = [_extract_path(job) for job in tqdm(jobs, disable=not progress, desc="features")]
    return np.vstack(rows)


def extract_manifest(
    manifest,
    extractor: str = "m1",
    workers: int = 1,
    cache_path: Optional[str] = None,
    progress: bool = False,
) -> np.ndarray:
    """Features of every manifest record in record order, reusing a CSV cache."""
    paths = [str(p) for p in manifest.paths()]
    names = get_extractor(extractor).feature_names

    cached: Dict[str, np.ndarray] = {}
    if cache_path and Path(cache_path).exists():
        cached_paths, cached_rows = read_features_csv(cache_path, names)
        cached = dict(zip(cached_paths, cached_rows))

    missing = list(dict.fromkeys(p for p in paths if p not in cached))
    if missing:
        logger.info("extracting features for %d of %d images", len(missing), len(paths))
        rows = extract_paths(missing, extractor, workers, progress)
        cached.update(zip(missing, rows))
        if cache_path:
            write_features_csv(list(cached.items()), cache_path, names)

    return np.vstack([cached[p] for p in paths]) if paths else np.empty((0, len(names)))


def write_features_csv(
    rows: Sequence[Tuple[str, Sequence[float]]],
    path,
    names: Sequence[str] = FEATURE_NAMES,
) -> None:
    """One row per image: image_path then the feature columns, repr-exact floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = []
    for image_path, values in rows:
        values = np.asarray(values, dtype=float).ravel()
        if values.size != len(names):
            raise ShapeError(f"{image_path}: {values.size} values for {len(names)} columns")
        records.append([str(image_path), *values.tolist()])
    df = pd.DataFrame(records, columns=["image_path", *names])
    try:
        df.to_csv(path, index=False, float_format="%.17g")
    except OSError as exc:
        raise IoError(f"cannot write features to {path}: {exc}") from exc


def read_features_csv(
    path, names: Sequence[str] = FEATURE_NAMES
) -> Tuple[List[str], np.ndarray]:
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except OSError as exc:
        raise IoError(f"cannot read features from {path}: {exc}") from exc
    expected = ["image_path", *names]
    if list(df.columns) != expected:
        raise SchemaError(f"{path}: expected header {','.join(expected)}")
    return df["image_path"].astype(str).tolist(), df[list(names)].to_numpy(dtype=float)

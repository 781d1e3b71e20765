"""Dataset manifests (one canonical CSV per dataset) and the synthetic
wn/gblur generator used for dataset-free runs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.ndimage import convolve1d

try:
    from .config import BLOCK_SIZE, DISTORTIONS, MANIFEST_COLUMNS
    from .errors import InvalidParameter, IoError, MissingFile, SchemaError, ScoreOutOfRange
    from .image_io import GrayImage, save_gray
except ImportError:
    from config import BLOCK_SIZE, DISTORTIONS, MANIFEST_COLUMNS
    from errors import InvalidParameter, IoError, MissingFile, SchemaError, ScoreOutOfRange
    from image_io import GrayImage, save_gray

logger = logging.getLogger(__name__)

LOWER_IS_BETTER = "lower-is-better"
HIGHER_IS_BETTER = "higher-is-better"
POLARITIES = (LOWER_IS_BETTER, HIGHER_IS_BETTER)


@dataclass(frozen=True)
class ManifestRecord:
    image_path: str
    reference_id: str
    distortion: str
    score: float
    score_min: float
    score_max: float
    polarity: str


@dataclass(frozen=True)
class DatasetManifest:
    records: Tuple[ManifestRecord, ...]
    dataset_id: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def paths(self) -> List[str]:
        return [r.image_path for r in self.records]

    def labels(self) -> List[str]:
        return [r.distortion for r in self.records]

    def scores(self) -> np.ndarray:
        return np.array([r.score for r in self.records], dtype=float)

    def reference_ids(self) -> List[str]:
        """Distinct reference ids in first-seen order."""
        return list(dict.fromkeys(r.reference_id for r in self.records))

    @property
    def polarity(self) -> str:
        values = {r.polarity for r in self.records}
        if len(values) > 1:
            raise SchemaError(f"{self.dataset_id}: mixed score polarities {sorted(values)}")
        return values.pop() if values else LOWER_IS_BETTER

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.__dict__ for r in self.records], columns=list(MANIFEST_COLUMNS))


def _row_error(exc_type, path, line: int, message: str):
    return exc_type(f"{path}, line {line}: {message}")


def load_manifest(path, dataset_id: Optional[str] = None, check_files: bool = True) -> DatasetManifest:
    """Read and validate a manifest CSV; relative image paths resolve against
    the manifest's directory."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"manifest not found: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise SchemaError(f"cannot parse manifest {path}: {exc}") from exc

    if tuple(c.strip() for c in df.columns) != MANIFEST_COLUMNS:
        raise SchemaError(f"{path}: header must be {','.join(MANIFEST_COLUMNS)}")
    df.columns = list(MANIFEST_COLUMNS)

    records = []
    for idx, row in df.iterrows():
        line = int(idx) + 2
        distortion = row["distortion"].strip().lower()
        if distortion not in DISTORTIONS:
            raise _row_error(SchemaError, path, line, f"unknown distortion {row['distortion']!r}")
        polarity = row["polarity"].strip().lower()
        if polarity not in POLARITIES:
            raise _row_error(SchemaError, path, line, f"unknown polarity {row['polarity']!r}")
        try:
            score = float(row["score"])
            lo = float(row["score_min"])
            hi = float(row["score_max"])
        except ValueError as exc:
            raise _row_error(SchemaError, path, line, f"non-numeric score field ({exc})") from exc
        if not all(math.isfinite(v) for v in (score, lo, hi)) or lo >= hi:
            raise _row_error(SchemaError, path, line, f"bad score scale [{lo}, {hi}]")
        if not lo <= score <= hi:
            raise _row_error(ScoreOutOfRange, path, line, f"score {score} outside [{lo}, {hi}]")
        reference_id = row["reference_id"].strip()
        if not reference_id:
            raise _row_error(SchemaError, path, line, "empty reference_id")

        image_path = Path(row["image_path"].strip())
        if not image_path.is_absolute():
            image_path = path.parent / image_path
        if check_files and not image_path.is_file():
            raise _row_error(MissingFile, path, line, f"image not found: {image_path}")

        records.append(
            ManifestRecord(
                image_path=str(image_path),
                reference_id=reference_id,
                distortion=distortion,
                score=score,
                score_min=lo,
                score_max=hi,
                polarity=polarity,
            )
        )

    manifest = DatasetManifest(tuple(records), dataset_id or path.stem)
    logger.info("loaded manifest %s: %s", manifest.dataset_id, manifest_counts(manifest))
    return manifest


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    df = manifest.to_frame()
    # Paths below the manifest directory are stored relative to it.
    rel = []
    for p in df["image_path"]:
        try:
            rel.append(str(Path(p).resolve().relative_to(path.parent.resolve())))
        except ValueError:
            rel.append(str(p))
    df["image_path"] = rel
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, float_format="%.17g")
    except OSError as exc:
        raise IoError(f"cannot write manifest {path}: {exc}") from exc


def manifest_counts(manifest: DatasetManifest) -> Dict[str, int]:
    labels = manifest.labels()
    return {d: labels.count(d) for d in DISTORTIONS}


def subset(manifest: DatasetManifest, reference_ids: Iterable[str]) -> DatasetManifest:
    keep = set(reference_ids)
    return DatasetManifest(
        tuple(r for r in manifest.records if r.reference_id in keep), manifest.dataset_id
    )


def by_class(manifest: DatasetManifest, distortion: str) -> DatasetManifest:
    return DatasetManifest(
        tuple(r for r in manifest.records if r.distortion == distortion), manifest.dataset_id
    )


def degrade_wn(img: GrayImage, sigma: float, seed: int) -> GrayImage:
    """Additive white Gaussian noise, rounded and clamped to 8 bits."""
    if sigma <= 0:
        raise InvalidParameter(f"sigma must be positive, got {sigma}")
    rng = np.random.default_rng(seed)
    noisy = img.pixels.astype(float) + rng.normal(0.0, sigma, size=img.pixels.shape)
    return GrayImage.from_array(noisy)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    weights = np.exp(-0.5 * (x / sigma) ** 2)
    return weights / weights.sum()


def degrade_gblur(img: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian blur with reflected borders."""
    if sigma <= 0:
        raise InvalidParameter(f"sigma must be positive, got {sigma}")
    kernel = gaussian_kernel(sigma)
    out = convolve1d(img.pixels.astype(float), kernel, axis=0, mode="reflect")
    out = convolve1d(out, kernel, axis=1, mode="reflect")
    return GrayImage.from_array(out)


def linear_score(level: int, n_levels: int, score_min: float = 0.0, score_max: float = 100.0) -> float:
    """DMOS-like pseudo score: evenly spaced, rising with severity."""
    return score_min + (score_max - score_min) * (level + 1) / (n_levels + 1)


@dataclass(frozen=True)
class SyntheticSpec:
    base_images: Tuple[GrayImage, ...]
    wn_sigmas: Tuple[float, ...] = (5.0, 10.0, 20.0, 40.0)
    gblur_sigmas: Tuple[float, ...] = (0.8, 1.6, 3.2, 6.4)
    score_map: Callable[[int, int], float] = field(default=linear_score)
    seed: int = 0
    score_min: float = 0.0
    score_max: float = 100.0

    def validate(self) -> "SyntheticSpec":
        if not self.base_images:
            raise SchemaError("synthetic spec needs at least one base image")
        for name, levels in (("wn", self.wn_sigmas), ("gblur", self.gblur_sigmas)):
            if len(levels) < 2:
                raise SchemaError(f"{name}: need >= 2 severity levels")
            if any(s <= 0 for s in levels):
                raise SchemaError(f"{name}: sigma values must be positive")
            if list(levels) != sorted(levels):
                raise SchemaError(f"{name}: severity levels must be increasing")
        return self


def build_synthetic_manifest(spec: SyntheticSpec, out_dir) -> DatasetManifest:
    """Write every base image at every wn and gblur severity as PNG, plus
    `manifest.csv`, and return the manifest."""
    spec.validate()
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    try:
        image_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {image_dir}: {exc}") from exc

    records = []
    for b, base in enumerate(spec.base_images):
        reference_id = f"ref{b:02d}"
        ladders = (("wn", spec.wn_sigmas), ("gblur", spec.gblur_sigmas))
        for distortion, sigmas in ladders:
            for level, sigma in enumerate(sigmas):
                if distortion == "wn":
                    # One noise seed per (base, level) keeps images reproducible.
                    img = degrade_wn(base, sigma, seed=spec.seed * 10_000 + b * 100 + level)
                else:
                    img = degrade_gblur(base, sigma)
                target = image_dir / f"{reference_id}_{distortion}_{level}.png"
                try:
                    save_gray(img, target)
                except OSError as exc:
                    raise IoError(f"cannot write {target}: {exc}") from exc
                records.append(
                    ManifestRecord(
                        image_path=str(target),
                        reference_id=reference_id,
                        distortion=distortion,
                        score=float(spec.score_map(level, len(sigmas))),
                        score_min=spec.score_min,
                        score_max=spec.score_max,
                        polarity=LOWER_IS_BETTER,
                    )
                )

    manifest = DatasetManifest(tuple(records), "synthetic")
    write_manifest(manifest, out_dir / "manifest.csv")
    logger.info("synthetic manifest: %d records in %s", len(records), out_dir)
    return manifest


def make_base_images(count: int, size: int = BLOCK_SIZE, seed: int = 0) -> List[GrayImage]:
    """Clean test images: 1/f random fields with a few step edges."""
    rng = np.random.default_rng(seed)
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    radius = np.sqrt(fx**2 + fy**2)
    radius[0, 0] = 1.0
    amplitude = 1.0 / radius
    amplitude[0, 0] = 0.0

    images = []
    for _ in range(count):
        phase = np.fft.fft2(rng.normal(size=(size, size)))
        field_ = np.fft.ifft2(phase * amplitude).real
        field_ = (field_ - field_.mean()) / (field_.std() + 1e-12)

        rows, cols = np.mgrid[0:size, 0:size]
        for _ in range(3):
            angle = rng.uniform(0, np.pi)
            offset = rng.uniform(-0.3, 0.3) * size
            side = (cols - size / 2) * np.cos(angle) + (rows - size / 2) * np.sin(angle) > offset
            field_ = field_ + rng.uniform(-1.0, 1.0) * side

        field_ = (field_ - field_.min()) / (field_.max() - field_.min() + 1e-12)
        images.append(GrayImage.from_array(30.0 + 190.0 * field_))
    return images


def records_for(manifest: DatasetManifest, indices: Sequence[int]) -> DatasetManifest:
    return DatasetManifest(tuple(manifest.records[i] for i in indices), manifest.dataset_id)

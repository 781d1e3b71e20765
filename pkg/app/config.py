"""Central configuration for the curvelet IQA project."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

from dotenv import dotenv_values, load_dotenv

try:
    from .errors import ConfigError
except ImportError:
    from errors import ConfigError

load_dotenv()

BLOCK_SIZE = 256
BLOCK_POLICY = "flush"

CURVELET_SCALES = 5
CURVELET_ANGLES = (1, 32, 64, 64, 1)
CURVELET_FINEST_IS_WAVELET = True
LOG_FLOOR = 1e-30

DISTORTIONS = ("jp2k", "jpeg", "wn", "gblur")
FEATURE_NAMES = (
    "d1",
    "d2",
    "d3",
    "qcd4",
    "rmad4",
    "area4",
    "med5",
    "iqr5",
    "mad5",
    "skew5",
    "kurt5",
)

GRID_C = tuple(2.0 ** e for e in (-1, 1, 3, 5, 7, 9, 11, 13))
GRID_GAMMA = tuple(2.0 ** e for e in (-8, -6, -4, -2, 0))
GRID_NU = (0.5,)
GRID_CV_FOLDS = 5
GRID_CV_REPEATS = 5

SPLIT_REPEATS = 40
SPLIT_FOLDS = 5
DEFAULT_SEED = 2019

SVM_TOLERANCE = 1e-3
SVM_MAX_ITER = 200_000
PLATT_FOLDS = 5

WILCOXON_ALPHA = 0.05
WILCOXON_EXACT_MAX_N = 25

MANIFEST_COLUMNS = (
    "image_path",
    "reference_id",
    "distortion",
    "score",
    "score_min",
    "score_max",
    "polarity",
)
RESULTS_PATH = "runs/results.csv"
MODELS_DIR = "runs/models"
FEATURE_CACHE_PATH = "runs/features_cache.csv"

WORKERS = max(1, int(os.getenv("CURVIQA_WORKERS", "1") or 1))
DEBUG = os.getenv("CURVIQA_DEBUG", "0") in {"1", "true", "True"}


def _parse_floats(raw: str) -> Tuple[float, ...]:
    values = []
    for token in str(raw).replace(";", ",").split(","):
        token = token.strip()
        if not token:
            continue
        # Accept "2^-3" as well as plain numbers.
        if "^" in token:
            base, exp = token.split("^", 1)
            values.append(float(base) ** float(exp))
        else:
            values.append(float(token))
    return tuple(values)


def _parse_bool(raw: str) -> bool:
    return str(raw).strip().lower() in {"1", "true", "yes", "on"}


@dataclass(frozen=True)
class RunConfig:
    """Settings of one protocol run (seed, rounds, grids, workers, paths)."""

    seed: int = DEFAULT_SEED
    rounds: int = SPLIT_REPEATS * SPLIT_FOLDS
    repeats: int = SPLIT_REPEATS
    folds: int = SPLIT_FOLDS
    c_grid: Tuple[float, ...] = GRID_C
    gamma_grid: Tuple[float, ...] = GRID_GAMMA
    nu_grid: Tuple[float, ...] = GRID_NU
    cv_folds: int = GRID_CV_FOLDS
    cv_repeats: int = GRID_CV_REPEATS
    block_policy: str = BLOCK_POLICY
    workers: int = WORKERS
    save_models: bool = False
    results_path: str = RESULTS_PATH
    models_dir: str = MODELS_DIR
    extra: Dict[str, str] = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if not 1 <= self.rounds <= 200:
            raise ConfigError(f"rounds must be in [1, 200], got {self.rounds}")
        if self.rounds > self.repeats * self.folds:
            raise ConfigError(
                f"rounds={self.rounds} exceeds repeats*folds={self.repeats * self.folds}"
            )
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        for name in ("c_grid", "gamma_grid", "nu_grid"):
            grid = getattr(self, name)
            if not grid or any(v <= 0 for v in grid):
                raise ConfigError(f"{name} must be non-empty and positive")
        if any(v >= 1 for v in self.nu_grid):
            raise ConfigError("nu values must lie in (0, 1)")
        if self.block_policy != BLOCK_POLICY:
            raise ConfigError(f"unsupported block policy: {self.block_policy}")
        if self.cv_folds < 2 or self.cv_repeats < 1:
            raise ConfigError("cv_folds must be >= 2 and cv_repeats >= 1")
        return self


_CONFIG_KEYS = {
    "SEED": ("seed", int),
    "ROUNDS": ("rounds", int),
    "REPEATS": ("repeats", int),
    "FOLDS": ("folds", int),
    "C_GRID": ("c_grid", _parse_floats),
    "GAMMA_GRID": ("gamma_grid", _parse_floats),
    "NU_GRID": ("nu_grid", _parse_floats),
    "CV_FOLDS": ("cv_folds", int),
    "CV_REPEATS": ("cv_repeats", int),
    "WORKERS": ("workers", int),
    "BLOCK_POLICY": ("block_policy", str),
    "SAVE_MODELS": ("save_models", _parse_bool),
    "RESULTS_PATH": ("results_path", str),
    "MODELS_DIR": ("models_dir", str),
}


def read_config_file(path: str) -> Dict[str, object]:
    """Parse a KEY=VALUE run configuration file into RunConfig field overrides."""
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"config file not found: {path}")

    overrides: Dict[str, object] = {}
    extra: Dict[str, str] = {}
    for key, raw in dotenv_values(config_path).items():
        if raw is None:
            continue
        spec = _CONFIG_KEYS.get(key.strip().upper())
        if spec is None:
            extra[key] = raw
            continue
        name, parse = spec
        try:
            overrides[name] = parse(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    if extra:
        overrides["extra"] = extra
    return overrides


def build_run_config(
    flags: Optional[Dict[str, object]] = None,
    config_path: Optional[str] = None,
) -> RunConfig:
    """Defaults < environment < flags < config file."""
    cfg = RunConfig()
    if flags:
        cfg = replace(cfg, **{k: v for k, v in flags.items() if v is not None})
    if config_path:
        cfg = replace(cfg, **read_config_file(config_path))
    return cfg.validate()


"""Fast discrete curvelet transform of a square block by frequency wrapping.

The block spectrum is cut into scales by nested separable low-pass windows on
square coronae, each corona is cut into orientations by windows over a
continuous pseudo-angle (the slope inside each of the four cones), and every
windowed wedge is wrapped onto a small rectangle before an inverse FFT.

All windows are built so that their squares sum to one at every frequency,
so the transform is a tight frame: forward preserves energy and the adjoint
(`inverse`) reconstructs the block.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Protocol, Sequence, Tuple

import numpy as np

try:
    from .config import (
        BLOCK_SIZE,
        CURVELET_ANGLES,
        CURVELET_FINEST_IS_WAVELET,
        CURVELET_SCALES,
    )
    from .errors import ConfigError, IoError, NonFinite, ScaleOutOfRange, ShapeError
except ImportError:
    from config import (
        BLOCK_SIZE,
        CURVELET_ANGLES,
        CURVELET_FINEST_IS_WAVELET,
        CURVELET_SCALES,
    )
    from errors import ConfigError, IoError, NonFinite, ScaleOutOfRange, ShapeError

logger = logging.getLogger(__name__)

PYRAMID_MAGIC = b"CVPY"
PYRAMID_VERSION = 1

# Length of the pseudo-angle circle: four cones, each two slope units wide.
_ANGLE_PERIOD = 8.0


class FFTBackend(Protocol):
    """Orthonormal 2-D complex FFT pair."""

    def fft2(self, a: np.ndarray) -> np.ndarray: ...

    def ifft2(self, a: np.ndarray) -> np.ndarray: ...


class NumpyFFT:
    def fft2(self, a: np.ndarray) -> np.ndarray:
        return np.fft.fft2(a, norm="ortho")

    def ifft2(self, a: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(a, norm="ortho")


class ScipyFFT:
    def __init__(self, workers: Optional[int] = None):
        self.workers = workers

    def fft2(self, a: np.ndarray) -> np.ndarray:
        from scipy import fft as sfft

        return sfft.fft2(a, norm="ortho", workers=self.workers)

    def ifft2(self, a: np.ndarray) -> np.ndarray:
        from scipy import fft as sfft

        return sfft.ifft2(a, norm="ortho", workers=self.workers)


DEFAULT_BACKEND: FFTBackend = NumpyFFT()


@dataclass(frozen=True)
class CurveletConfig:
    n_scales: int = CURVELET_SCALES
    angles_per_scale: Tuple[int, ...] = CURVELET_ANGLES
    finest_is_wavelet: bool = CURVELET_FINEST_IS_WAVELET
    size: int = BLOCK_SIZE

    def __post_init__(self):
        object.__setattr__(self, "angles_per_scale", tuple(int(a) for a in self.angles_per_scale))

    @classmethod
    def from_coarse_angles(
        cls,
        n_scales: int = CURVELET_SCALES,
        coarse_angles: int = 32,
        finest_is_wavelet: bool = True,
        size: int = BLOCK_SIZE,
    ) -> "CurveletConfig":
        """Double the second-scale angle count every second scale toward the fine end."""
        if n_scales < 1:
            raise ConfigError(f"n_scales must be >= 1, got {n_scales}")
        angles = [1]
        for j in range(1, n_scales):
            angles.append(coarse_angles * 2 ** (j // 2))
        if finest_is_wavelet and n_scales > 1:
            angles[-1] = 1
        return cls(n_scales, tuple(angles), finest_is_wavelet, size).validate()

    def angled(self, j: int) -> bool:
        """True when 0-based scale j is split into orientations."""
        if j == 0:
            return False
        if j == self.n_scales - 1:
            return not self.finest_is_wavelet
        return True

    def lowpass_radius(self, i: int) -> float:
        """Inner radius of the i-th nested low-pass (it vanishes beyond twice this)."""
        return (self.size / 3.0) / 2.0 ** (self.n_scales - 2 - i)

    def validate(self) -> "CurveletConfig":
        if self.n_scales < 1:
            raise ConfigError(f"n_scales must be >= 1, got {self.n_scales}")
        if self.size < 8 or self.size % 2:
            raise ConfigError(f"block size must be even and >= 8, got {self.size}")
        if len(self.angles_per_scale) != self.n_scales:
            raise ConfigError(
                f"{len(self.angles_per_scale)} angle counts given for {self.n_scales} scales"
            )
        if self.angles_per_scale[0] != 1:
            raise ConfigError("the coarsest scale has exactly one orientation")
        for j, count in enumerate(self.angles_per_scale):
            if not self.angled(j):
                if count != 1:
                    raise ConfigError(f"scale {j + 1} is isotropic, got {count} angles")
                continue
            if count < 4 or count % 4:
                raise ConfigError(f"scale {j + 1}: angle count {count} is not a multiple of 4")
            outer = self.size / 2.0 if j == self.n_scales - 1 else 2.0 * self.lowpass_radius(j)
            if (_ANGLE_PERIOD / count) * outer < 1.0:
                raise ConfigError(
                    f"scale {j + 1}: {count} angles are narrower than one frequency sample"
                )
        return self


@dataclass(frozen=True)
class Wedge:
    """One frequency window: where it reads the spectrum and where it wraps to."""

    scale: int
    angle: int
    shape: Tuple[int, int]
    spectrum_index: np.ndarray
    panel_index: np.ndarray
    weight: np.ndarray

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]


@dataclass(frozen=True)
class CurveletPlan:
    config: CurveletConfig
    wedges: Tuple[Tuple[Wedge, ...], ...]

    def shapes(self) -> Tuple[Tuple[Tuple[int, int], ...], ...]:
        return tuple(tuple(w.shape for w in scale) for scale in self.wedges)


@dataclass(frozen=True)
class CoefficientPyramid:
    """Complex coefficients by scale, then orientation, then position."""

    scales: Tuple[Tuple[np.ndarray, ...], ...]

    @property
    def n_scales(self) -> int:
        return len(self.scales)

    def panels(self, j: int) -> Tuple[np.ndarray, ...]:
        """Orientation panels of scale j, counted from 1 (coarsest)."""
        if not 1 <= j <= self.n_scales:
            raise ScaleOutOfRange(f"scale {j} outside 1..{self.n_scales}")
        return self.scales[j - 1]

    def magnitudes(self, j: int) -> np.ndarray:
        return np.concatenate([np.abs(p).ravel() for p in self.panels(j)])

    def count(self, j: int) -> int:
        return sum(p.size for p in self.panels(j))

    def energy(self) -> float:
        return float(sum(np.vdot(p, p).real for scale in self.scales for p in scale))


def _meyer(x: np.ndarray) -> np.ndarray:
    """Polynomial ramp from 0 to 1 on [0, 1] with v(x) + v(1 - x) = 1."""
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (35.0 - 84.0 * x + 70.0 * x**2 - 20.0 * x**3)


def _lowpass_sq(k1: np.ndarray, k2: np.ndarray, radius: float) -> np.ndarray:
    """Squared separable low-pass: 1 inside the radius box, 0 beyond twice it."""
    f1 = 1.0 - _meyer(np.abs(k1) / radius - 1.0)
    f2 = 1.0 - _meyer(np.abs(k2) / radius - 1.0)
    return f1 * f2


def _pseudo_angle(k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
    """Continuous angle surrogate on [0, 8): slope inside each cone, cones chained."""
    a1, a2 = np.abs(k1), np.abs(k2)
    east = (k1 > 0) & (a2 <= a1)
    west = (k1 < 0) & (a2 <= a1)
    north = (k2 > 0) & (a1 < a2)
    south = (k2 < 0) & (a1 < a2)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.select(
            [east, north, west, south],
            [1.0 + k2 / k1, 3.0 - k1 / k2, 5.0 + k2 / k1, 7.0 - k1 / k2],
            default=0.0,
        )
    return np.mod(u, _ANGLE_PERIOD)


def _angular_sq(u: np.ndarray, center: float, spacing: float) -> np.ndarray:
    # Ramp width of two spacings: each direction is shared by three windows.
    width = 2.0 * spacing
    d = np.mod(u - center + _ANGLE_PERIOD / 2, _ANGLE_PERIOD) - _ANGLE_PERIOD / 2
    upper = _meyer((d + spacing / 2 + width / 2) / width)
    lower = _meyer((d - spacing / 2 + width / 2) / width)
    return np.maximum(upper - lower, 0.0)


def _line_span(lines: np.ndarray, values: np.ndarray) -> int:
    """Largest extent of `values` among points sharing the same `lines` key."""
    order = np.lexsort((values, lines))
    key, val = lines[order], values[order]
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    lo = np.minimum.reduceat(val, starts)
    hi = np.maximum.reduceat(val, starts)
    return int((hi - lo).max()) + 1


def _make_wedge(
    scale: int,
    angle: int,
    weight_sq: np.ndarray,
    k1: np.ndarray,
    k2: np.ndarray,
    along_k1: bool,
) -> Wedge:
    rows, cols = np.nonzero(weight_sq > 0.0)
    n = weight_sq.shape[1]
    f1 = k1[rows, cols].astype(np.int64)
    f2 = k2[rows, cols].astype(np.int64)

    # The rectangle is long enough along the dominant axis to hold the whole
    # wedge and wide enough across it to hold every line of the wedge, so the
    # modular wrap never folds two support points onto one cell.
    if along_k1:
        n1 = int(f1.max() - f1.min()) + 1
        n2 = _line_span(f1, f2)
    else:
        n2 = int(f2.max() - f2.min()) + 1
        n1 = _line_span(f2, f1)
    panel_index = np.mod(f1, n1) * n2 + np.mod(f2, n2)

    wedge = Wedge(
        scale=scale,
        angle=angle,
        shape=(n1, n2),
        spectrum_index=rows.astype(np.int64) * n + cols,
        panel_index=panel_index,
        weight=np.sqrt(weight_sq[rows, cols]),
    )
    for arr in (wedge.spectrum_index, wedge.panel_index, wedge.weight):
        arr.setflags(write=False)
    return wedge


def build_plan(cfg: CurveletConfig) -> CurveletPlan:
    """Window tables of a configuration (cached, shared read-only)."""
    return _cached_plan(cfg.validate())


@lru_cache(maxsize=8)
def _cached_plan(cfg: CurveletConfig) -> CurveletPlan:
    n = cfg.size
    freqs = np.fft.fftfreq(n, d=1.0 / n)
    k1, k2 = np.meshgrid(freqs, freqs, indexing="ij")
    u = _pseudo_angle(k1, k2)

    lowpass = [_lowpass_sq(k1, k2, cfg.lowpass_radius(i)) for i in range(cfg.n_scales - 1)]
    scales = []
    for j in range(cfg.n_scales):
        outer = lowpass[j] if j < cfg.n_scales - 1 else np.ones_like(k1)
        inner = lowpass[j - 1] if j > 0 else np.zeros_like(k1)
        radial_sq = np.maximum(outer - inner, 0.0)

        if not cfg.angled(j):
            scales.append((_make_wedge(j, 0, radial_sq, k1, k2, along_k1=True),))
            continue

        count = cfg.angles_per_scale[j]
        spacing = _ANGLE_PERIOD / count
        wedges = []
        for ell in range(count):
            center = (ell + 0.5) * spacing
            # East/west cones are read along k1, north/south cones along k2.
            along_k1 = (center % 4.0) < 2.0
            weight_sq = radial_sq * _angular_sq(u, center, spacing)
            wedges.append(_make_wedge(j, ell, weight_sq, k1, k2, along_k1))
        scales.append(tuple(wedges))

    plan = CurveletPlan(config=cfg, wedges=tuple(scales))
    logger.debug(
        "curvelet plan %s: coefficients per scale %s",
        cfg.angles_per_scale,
        [sum(w.size for w in s) for s in plan.wedges],
    )
    return plan


def forward(
    block,
    cfg: Optional[CurveletConfig] = None,
    backend: Optional[FFTBackend] = None,
    plan: Optional[CurveletPlan] = None,
) -> CoefficientPyramid:
    """Curvelet coefficients of a real square block."""
    cfg = cfg or CurveletConfig()
    plan = plan or build_plan(cfg)
    backend = backend or DEFAULT_BACKEND

    x = np.asarray(block, dtype=float)
    if x.shape != (cfg.size, cfg.size):
        raise ShapeError(f"expected a {cfg.size}x{cfg.size} block, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFinite("block contains non-finite values")

    spectrum = backend.fft2(x).ravel()
    scales = []
    for scale_wedges in plan.wedges:
        panels = []
        for wedge in scale_wedges:
            wrapped = np.zeros(wedge.size, dtype=complex)
            wrapped[wedge.panel_index] = spectrum[wedge.spectrum_index] * wedge.weight
            panels.append(backend.ifft2(wrapped.reshape(wedge.shape)))
        scales.append(tuple(panels))
    return CoefficientPyramid(tuple(scales))


def inverse(
    pyr: CoefficientPyramid,
    cfg: Optional[CurveletConfig] = None,
    backend: Optional[FFTBackend] = None,
    plan: Optional[CurveletPlan] = None,
) -> np.ndarray:
    """Adjoint of `forward`; reconstructs the block for a tight frame."""
    cfg = cfg or CurveletConfig()
    plan = plan or build_plan(cfg)
    backend = backend or DEFAULT_BACKEND

    if len(pyr.scales) != len(plan.wedges):
        raise ShapeError(f"pyramid has {len(pyr.scales)} scales, expected {len(plan.wedges)}")

    spectrum = np.zeros(cfg.size * cfg.size, dtype=complex)
    for j, (panels, scale_wedges) in enumerate(zip(pyr.scales, plan.wedges)):
        if len(panels) != len(scale_wedges):
            raise ShapeError(
                f"scale {j + 1} has {len(panels)} panels, expected {len(scale_wedges)}"
            )
        for panel, wedge in zip(panels, scale_wedges):
            panel = np.asarray(panel)
            if panel.shape != wedge.shape:
                raise ShapeError(
                    f"scale {j + 1} angle {wedge.angle}: panel {panel.shape}, expected {wedge.shape}"
                )
            wrapped = backend.fft2(panel).ravel()
            # Indices are unique inside one wedge, so plain fancy-index adds are safe.
            spectrum[wedge.spectrum_index] += wrapped[wedge.panel_index] * wedge.weight

    return backend.ifft2(spectrum.reshape(cfg.size, cfg.size)).real


def window_partition_check(
    cfg: Optional[CurveletConfig] = None,
    plan: Optional[CurveletPlan] = None,
) -> float:
    """Max over the frequency grid of |sum of squared windows - 1|."""
    cfg = cfg or CurveletConfig()
    plan = plan or build_plan(cfg)
    total = np.zeros(cfg.size * cfg.size)
    for scale_wedges in plan.wedges:
        for wedge in scale_wedges:
            total[wedge.spectrum_index] += wedge.weight**2
    return float(np.max(np.abs(total - 1.0)))


def coefficient_counts(cfg: Optional[CurveletConfig] = None) -> Tuple[int, ...]:
    plan = build_plan(cfg or CurveletConfig())
    return tuple(sum(w.size for w in scale) for scale in plan.wedges)


def zero_pyramid(cfg: Optional[CurveletConfig] = None) -> CoefficientPyramid:
    plan = build_plan(cfg or CurveletConfig())
    return CoefficientPyramid(
        tuple(tuple(np.zeros(w.shape, dtype=complex) for w in scale) for scale in plan.wedges)
    )


def dump_pyramid(pyr: CoefficientPyramid, path) -> None:
    """Write a pyramid as: magic, version, scale count, per-scale panel counts,
    per-panel rows/cols, then little-endian float64 (real, imag) pairs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = [PYRAMID_MAGIC, struct.pack("<II", PYRAMID_VERSION, pyr.n_scales)]
    for panels in pyr.scales:
        header.append(struct.pack("<I", len(panels)))
        for panel in panels:
            header.append(struct.pack("<II", *panel.shape))
    with open(path, "wb") as f:
        f.write(b"".join(header))
        for panels in pyr.scales:
            for panel in panels:
                f.write(np.ascontiguousarray(panel, dtype="<c16").tobytes())


def load_pyramid(path) -> CoefficientPyramid:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read pyramid {path}: {exc}") from exc
    if data[:4] != PYRAMID_MAGIC:
        raise IoError(f"{path} is not a pyramid dump")

    offset = 4
    version, n_scales = struct.unpack_from("<II", data, offset)
    offset += 8
    if version != PYRAMID_VERSION:
        raise IoError(f"unsupported pyramid version {version}")
    shapes = []
    for _ in range(n_scales):
        (count,) = struct.unpack_from("<I", data, offset)
        offset += 4
        scale_shapes = []
        for _ in range(count):
            scale_shapes.append(struct.unpack_from("<II", data, offset))
            offset += 8
        shapes.append(scale_shapes)

    scales = []
    for scale_shapes in shapes:
        panels = []
        for rows, cols in scale_shapes:
            nbytes = rows * cols * 16
            panel = np.frombuffer(data, dtype="<c16", count=rows * cols, offset=offset)
            panels.append(panel.reshape(rows, cols).astype(complex))
            offset += nbytes
        scales.append(tuple(panels))
    return CoefficientPyramid(tuple(scales))


def structure(pyr: CoefficientPyramid) -> Sequence[int]:
    """Panel count per scale."""
    return [len(panels) for panels in pyr.scales]

"""Quantile-based robust descriptors: octiles, QCD, relative MAD, Bowley skewness
and Moors kurtosis.

Percentiles use linear interpolation between order statistics at the
fractional index (n - 1) * p, which is numpy's default "linear" method.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

try:
    from .errors import DegenerateScale, EmptyInput, InvalidParameter, NonFinite
except ImportError:
    from errors import DegenerateScale, EmptyInput, InvalidParameter, NonFinite


def _as_sample(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float).ravel()
    if arr.size == 0:
        raise EmptyInput("statistic of an empty sample")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("sample contains non-finite values")
    return arr


def percentile(data: Sequence[float], p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise InvalidParameter(f"p must lie in [0, 1], got {p}")
    return float(np.quantile(_as_sample(data), p))


@dataclass(frozen=True)
class OctileSet:
    oc: Tuple[float, ...]

    def __getitem__(self, k: int) -> float:
        """Oc_k for k = 1..7."""
        return self.oc[k - 1]

    @property
    def q1(self) -> float:
        return self.oc[1]

    @property
    def median(self) -> float:
        return self.oc[3]

    @property
    def q3(self) -> float:
        return self.oc[5]

    @property
    def iqr(self) -> float:
        return self.oc[5] - self.oc[1]


def octiles(data: Sequence[float]) -> OctileSet:
    values = np.quantile(_as_sample(data), np.arange(1, 8) / 8.0)
    # Interpolation rounding must not break the ordering.
    values = np.maximum.accumulate(values)
    return OctileSet(tuple(float(v) for v in values))


def median(data: Sequence[float]) -> float:
    return float(np.median(_as_sample(data)))


def mad(data: Sequence[float]) -> float:
    """Median absolute deviation from the median."""
    arr = _as_sample(data)
    return float(np.median(np.abs(arr - np.median(arr))))


def qcd(data: Sequence[float]) -> float:
    """Quartile coefficient of dispersion (Q3 - Q1) / (Q3 + Q1)."""
    q1, q3 = np.quantile(_as_sample(data), [0.25, 0.75])
    if q3 + q1 == 0:
        raise DegenerateScale("Q3 + Q1 is zero")
    return float((q3 - q1) / (q3 + q1))


def rmad(data: Sequence[float]) -> float:
    """MAD divided by the median."""
    arr = _as_sample(data)
    med = np.median(arr)
    if med == 0:
        raise DegenerateScale("median is zero")
    return float(np.median(np.abs(arr - med)) / med)


def bowley_skew(oc: OctileSet) -> float:
    spread = oc[6] - oc[2]
    if spread == 0:
        raise DegenerateScale("interquartile range is zero")
    value = (oc[6] + oc[2] - 2.0 * oc[4]) / spread
    return float(np.clip(value, -1.0, 1.0))


def moors_kurt(oc: OctileSet) -> float:
    spread = oc[6] - oc[2]
    if spread == 0:
        raise DegenerateScale("interquartile range is zero")
    return float(((oc[7] - oc[5]) + (oc[3] - oc[1])) / spread)

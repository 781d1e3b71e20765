"""Embedded property suite run by `selftest`: each group checks one family of
invariants against an independent oracle and reports pass/fail."""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

try:
    from .errors import SelfTestFailed
    from .evaluation import _exact_p, _normal_p, krocc, krocc_brute, srocc, wilcoxon_paired
    from .fdct import CurveletConfig, CurveletPlan, build_plan, forward, inverse, window_partition_check
    from .robust_stats import bowley_skew, mad, moors_kurt, octiles, qcd, rmad
except ImportError:
    from errors import SelfTestFailed
    from evaluation import _exact_p, _normal_p, krocc, krocc_brute, srocc, wilcoxon_paired
    from fdct import CurveletConfig, CurveletPlan, build_plan, forward, inverse, window_partition_check
    from robust_stats import bowley_skew, mad, moors_kurt, octiles, qcd, rmad

logger = logging.getLogger(__name__)

SEED = 7


@dataclass(frozen=True)
class GroupResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def perturb_plan(plan: CurveletPlan, scale: int = 2, angle: int = 0, factor: float = 1.01) -> CurveletPlan:
    """Copy of `plan` with one window scaled; breaks the partition of unity."""
    wedges = [list(s) for s in plan.wedges]
    w = wedges[scale][angle]
    wedges[scale][angle] = replace(w, weight=w.weight * factor)
    return replace(plan, wedges=tuple(tuple(s) for s in wedges))


def _rel_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def check_roundtrip(plan: CurveletPlan, blocks: int = 3) -> str:
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(blocks):
        x = rng.uniform(0, 255, size=(plan.config.size,) * 2)
        worst = max(worst, _rel_error(inverse(forward(x, plan.config, plan=plan), plan.config, plan=plan), x))
    if worst > 1e-6:
        raise AssertionError(f"round-trip relative error {worst:.3g} > 1e-6")
    return f"max relative error {worst:.2e} over {blocks} blocks"


def check_tight_frame(plan: CurveletPlan) -> str:
    deviation = window_partition_check(plan.config, plan)
    if deviation > 1e-10:
        raise AssertionError(f"window partition deviation {deviation:.3g} > 1e-10")
    rng = np.random.default_rng(SEED + 1)
    x = rng.normal(size=(plan.config.size,) * 2)
    ratio = forward(x, plan.config, plan=plan).energy() / float(np.sum(x**2))
    if abs(ratio - 1.0) > 1e-9:
        raise AssertionError(f"energy ratio {ratio:.12f} differs from 1")
    return f"partition deviation {deviation:.2e}, energy ratio {ratio:.12f}"


def _brute_percentile(values: List[float], p: float) -> float:
    ordered = sorted(values)
    pos = (len(ordered) - 1) * p
    lo = math.floor(pos)
    hi = min(lo + 1, len(ordered) - 1)
    return ordered[lo] + (pos - lo) * (ordered[hi] - ordered[lo])


def _close(a: float, b: float, tol: float = 1e-12) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(b))


def check_robust_stats(trials: int = 200) -> str:
    rng = np.random.default_rng(SEED + 2)
    for t in range(trials):
        values = rng.uniform(0.5, 10.0, size=int(rng.integers(5, 200))).tolist()
        med = _brute_percentile(values, 0.5)
        dev = _brute_percentile([abs(v - med) for v in values], 0.5)
        q1, q3 = _brute_percentile(values, 0.25), _brute_percentile(values, 0.75)
        oc = [_brute_percentile(values, k / 8) for k in range(1, 8)]
        expected = {
            "mad": dev,
            "rmad": dev / med,
            "qcd": (q3 - q1) / (q3 + q1),
            "bowley": (oc[5] + oc[1] - 2 * oc[3]) / (oc[5] - oc[1]),
            "moors": ((oc[6] - oc[4]) + (oc[2] - oc[0])) / (oc[5] - oc[1]),
        }
        got = {
            "mad": mad(values),
            "rmad": rmad(values),
            "qcd": qcd(values),
            "bowley": bowley_skew(octiles(values)),
            "moors": moors_kurt(octiles(values)),
        }
        for name, value in expected.items():
            if not _close(got[name], value, 1e-9):
                raise AssertionError(f"{name} trial {t}: {got[name]!r} != {value!r}")
    return f"{trials} random samples match the sorted-list oracle"


def _brute_srocc(x: Sequence[float], y: Sequence[float]) -> float:
    def ranks(v):
        order = sorted(range(len(v)), key=lambda i: v[i])
        out = [0.0] * len(v)
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and v[order[j + 1]] == v[order[i]]:
                j += 1
            for k in range(i, j + 1):
                out[order[k]] = (i + j) / 2.0 + 1.0
            i = j + 1
        return out

    rx, ry = ranks(list(x)), ranks(list(y))
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    sxy = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    sxx = sum((a - mx) ** 2 for a in rx)
    syy = sum((b - my) ** 2 for b in ry)
    return sxy / math.sqrt(sxx * syy)


def check_correlations(trials: int = 200) -> str:
    rng = np.random.default_rng(SEED + 3)
    for t in range(trials):
        n = int(rng.integers(3, 80))
        x = rng.integers(0, 20, size=n).astype(float)
        y = x + rng.integers(-5, 6, size=n)
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            continue
        if not _close(srocc(x, y), _brute_srocc(x, y), 1e-9):
            raise AssertionError(f"srocc trial {t} differs from oracle")
        if not _close(krocc(x, y), krocc_brute(x, y), 1e-12):
            raise AssertionError(f"krocc trial {t} differs from all-pairs oracle")
    return f"{trials} tied random instances match rank and all-pairs oracles"


def _enumerated_p(d: np.ndarray) -> float:
    """Two-sided p by listing every sign assignment."""
    ranks = rankdata(np.abs(d))
    observed = float(ranks[d > 0].sum())
    totals = [sum(r for r, s in zip(ranks, signs) if s) for signs in itertools.product((0, 1), repeat=d.size)]
    totals = np.array(totals)
    lower = np.mean(totals <= observed + 1e-9)
    upper = np.mean(totals >= observed - 1e-9)
    return float(min(1.0, 2.0 * min(lower, upper)))


def check_wilcoxon() -> str:
    rng = np.random.default_rng(SEED + 4)
    for n in (5, 8, 10):
        a = rng.normal(size=n)
        b = a + rng.normal(0.3, 1.0, size=n)
        got = wilcoxon_paired(a, b).p_value
        want = _enumerated_p(a - b)
        if abs(got - want) > 1e-12:
            raise AssertionError(f"exact p at n={n}: {got!r} != enumeration {want!r}")

    worst = 0.0
    for _ in range(20):
        d = rng.normal(0.2, 1.0, size=25)
        ranks = rankdata(np.abs(d))
        w = float(ranks[d > 0].sum())
        worst = max(worst, abs(_exact_p(ranks, w) - _normal_p(ranks, w)))
    if worst > 0.01:
        raise AssertionError(f"exact and normal p differ by {worst:.4f} at n=25")
    return f"enumeration matches; exact vs normal at n=25 within {worst:.4f}"


def run_selftest(
    cfg: Optional[CurveletConfig] = None,
    plan: Optional[CurveletPlan] = None,
    groups: Optional[Sequence[str]] = None,
) -> List[GroupResult]:
    """Run the property groups; `plan` replaces the transform plan under test."""
    cfg = cfg or CurveletConfig()
    plan = plan or build_plan(cfg)
    suite: Dict[str, Callable[[], str]] = {
        "fdct-roundtrip": lambda: check_roundtrip(plan),
        "tight-frame": lambda: check_tight_frame(plan),
        "robust-stats": check_robust_stats,
        "correlations": check_correlations,
        "wilcoxon": check_wilcoxon,
    }
    results = []
    for name, check in suite.items():
        if groups and name not in groups:
            continue
        start = time.perf_counter()
        try:
            detail, passed = check(), True
        except AssertionError as exc:
            detail, passed = str(exc), False
        results.append(GroupResult(name, passed, detail, time.perf_counter() - start))
        logger.info("selftest %s: %s (%s)", name, "pass" if passed else "FAIL", detail)
    return results


def require_pass(results: Sequence[GroupResult]) -> None:
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise SelfTestFailed(f"self-test groups failed: {', '.join(failed)}")

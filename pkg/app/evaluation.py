"""Prediction-quality statistics: rank correlations, accuracy, the paired
Wilcoxon signed-rank test and the model comparison tables built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import norm, rankdata

try:
    from .config import DISTORTIONS, WILCOXON_ALPHA, WILCOXON_EXACT_MAX_N
    from .errors import (
        AllZeroDifferences,
        DegenerateVariance,
        IoError,
        LengthMismatch,
        SchemaError,
        TooFewSamples,
        UnpairedRounds,
    )
except ImportError:
    from config import DISTORTIONS, WILCOXON_ALPHA, WILCOXON_EXACT_MAX_N
    from errors import (
        AllZeroDifferences,
        DegenerateVariance,
        IoError,
        LengthMismatch,
        SchemaError,
        TooFewSamples,
        UnpairedRounds,
    )

METRICS = ("srocc", "krocc", "accuracy")
BASE_COLUMNS = ("round", "test_set", "srocc", "krocc", "accuracy")


def results_columns(classes: Sequence[str] = DISTORTIONS) -> List[str]:
    cols = list(BASE_COLUMNS)
    for cls in classes:
        cols += [f"{cls}_srocc", f"{cls}_krocc"]
    return cols


@dataclass(frozen=True)
class RoundResult:
    round_id: int
    test_set: str
    srocc: float
    krocc: float
    accuracy: float
    per_class: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    def metric(self, name: str) -> float:
        """`srocc`, `krocc`, `accuracy` or a per-class `<class>_srocc` / `<class>_krocc`."""
        if name in METRICS:
            return getattr(self, name)
        cls, _, kind = name.rpartition("_")
        pair = self.per_class.get(cls)
        if pair is None or kind not in ("srocc", "krocc"):
            return float("nan")
        return pair[0] if kind == "srocc" else pair[1]

    def as_row(self, classes: Sequence[str] = DISTORTIONS) -> Dict[str, object]:
        row: Dict[str, object] = {
            "round": self.round_id,
            "test_set": self.test_set,
            "srocc": self.srocc,
            "krocc": self.krocc,
            "accuracy": self.accuracy,
        }
        for cls in classes:
            s, k = self.per_class.get(cls, (float("nan"), float("nan")))
            row[f"{cls}_srocc"] = s
            row[f"{cls}_krocc"] = k
        return row


def _paired(x, y, minimum: int) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise LengthMismatch(f"{x.size} vs {y.size} values")
    if x.size < minimum:
        raise TooFewSamples(f"need at least {minimum} pairs, got {x.size}")
    return x, y


def srocc(x, y) -> float:
    """Spearman's rho: Pearson correlation of average ranks."""
    x, y = _paired(x, y, 3)
    rx = rankdata(x) - (x.size + 1) / 2.0
    ry = rankdata(y) - (y.size + 1) / 2.0
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        raise DegenerateVariance("constant input has no rank variance")
    return float(np.clip((rx @ ry) / denom, -1.0, 1.0))


def _tie_pairs(sorted_values: np.ndarray) -> int:
    _, counts = np.unique(sorted_values, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def _count_inversions(values: List[float]) -> int:
    """Strict inversions by bottom-up merge sort; equal values are not swapped."""
    n = len(values)
    buf = list(values)
    tmp = [0.0] * n
    swaps = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if buf[j] < buf[i]:
                    tmp[k] = buf[j]
                    swaps += mid - i
                    j += 1
                else:
                    tmp[k] = buf[i]
                    i += 1
                k += 1
            tmp[k:hi] = buf[i:mid] + buf[j:hi]
        buf, tmp = tmp, buf
        width *= 2
    return swaps


def krocc(x, y) -> float:
    """Kendall's tau-b in O(n log n)."""
    x, y = _paired(x, y, 2)
    n = x.size
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]

    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(xs)
    n2 = _tie_pairs(ys)
    # Pairs tied in both coordinates.
    joint = pd.Series(list(zip(xs.tolist(), ys.tolist()))).value_counts().to_numpy()
    n3 = int(np.sum(joint * (joint - 1) // 2))
    discordant = _count_inversions(ys.tolist())

    denom = math.sqrt(float(n0 - n1) * float(n0 - n2))
    if denom == 0.0:
        raise DegenerateVariance("constant input has no rank variance")
    s = n0 - n1 - n2 + n3 - 2 * discordant
    return float(np.clip(s / denom, -1.0, 1.0))


def krocc_brute(x, y) -> float:
    """All-pairs tau-b, quadratic."""
    x, y = _paired(x, y, 2)
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(x.size, 1)
    s = float(np.sum(dx[iu] * dy[iu]))
    tx = float(np.sum(dx[iu] != 0))
    ty = float(np.sum(dy[iu] != 0))
    if tx == 0.0 or ty == 0.0:
        raise DegenerateVariance("constant input has no rank variance")
    return s / math.sqrt(tx * ty)


def accuracy(predicted: Sequence[str], truth: Sequence[str]) -> float:
    if len(predicted) != len(truth):
        raise LengthMismatch(f"{len(predicted)} predictions vs {len(truth)} labels")
    if not truth:
        raise TooFewSamples("accuracy needs at least one label")
    return sum(p == t for p, t in zip(predicted, truth)) / len(truth)


@dataclass(frozen=True)
class WilcoxonOutcome:
    statistic: float
    p_value: float
    n_effective: int
    reject: bool
    direction: Optional[str]  # "a", "b" or None when not rejected
    exact: bool


def _exact_p(ranks: np.ndarray, w_plus: float) -> float:
    """Two-sided p from the null distribution of W+ over all 2^n sign patterns."""
    # Average ranks are multiples of 1/2, so doubled ranks are integers.
    doubled = np.rint(2.0 * ranks).astype(int)
    total = int(doubled.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    probs = counts / counts.sum()
    w = int(round(2.0 * w_plus))
    lower = probs[: w + 1].sum()
    upper = probs[w:].sum()
    return float(min(1.0, 2.0 * min(lower, upper)))


def _normal_p(ranks: np.ndarray, w_plus: float) -> float:
    n = ranks.size
    mean = n * (n + 1) / 4.0
    _, ties = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(ties**3 - ties)) / 48.0
    if var <= 0:
        return 1.0
    diff = w_plus - mean
    corrected = max(abs(diff) - 0.5, 0.0)
    return float(min(1.0, 2.0 * norm.sf(corrected / math.sqrt(var))))


def wilcoxon_paired(a, b, alpha: float = WILCOXON_ALPHA) -> WilcoxonOutcome:
    """Two-sided signed-rank test of a - b; zero differences are dropped."""
    a, b = _paired(a, b, 1)
    d = a - b
    d = d[d != 0.0]
    if d.size == 0:
        raise AllZeroDifferences("all paired differences are zero")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    exact = d.size <= WILCOXON_EXACT_MAX_N
    p = _exact_p(ranks, w_plus) if exact else _normal_p(ranks, w_plus)

    reject = p < alpha
    direction = None
    if reject:
        shift = float(np.mean(d))
        if shift == 0.0:
            shift = w_plus - d.size * (d.size + 1) / 4.0
        direction = "a" if shift > 0 else "b"
    return WilcoxonOutcome(w_plus, p, int(d.size), reject, direction, exact)


@dataclass(frozen=True)
class ComparisonRow:
    test_set: str
    metric: str
    mean_a: float
    mean_b: float
    outcome: Optional[WilcoxonOutcome]

    @property
    def winner(self) -> Optional[str]:
        return self.outcome.direction if self.outcome is not None else None


def _index(results: Iterable[RoundResult]) -> Dict[Tuple[int, str], RoundResult]:
    return {(r.round_id, r.test_set): r for r in results}


def compare_models(
    results_a: Sequence[RoundResult],
    results_b: Sequence[RoundResult],
    metrics: Sequence[str] = METRICS,
    alpha: float = WILCOXON_ALPHA,
) -> List[ComparisonRow]:
    """One row per (test set, metric), paired by round id."""
    ia, ib = _index(results_a), _index(results_b)
    if set(ia) != set(ib):
        missing = sorted(set(ia) ^ set(ib))[:5]
        raise UnpairedRounds(f"result sets are not paired, e.g. {missing}")

    test_sets = list(dict.fromkeys(key[1] for key in ia))
    rows = []
    for test_set in test_sets:
        keys = sorted(k for k in ia if k[1] == test_set)
        for metric in metrics:
            va = np.array([ia[k].metric(metric) for k in keys])
            vb = np.array([ib[k].metric(metric) for k in keys])
            keep = np.isfinite(va) & np.isfinite(vb)
            va, vb = va[keep], vb[keep]
            mean_a = float(va.mean()) if va.size else float("nan")
            mean_b = float(vb.mean()) if vb.size else float("nan")
            try:
                outcome = wilcoxon_paired(va, vb, alpha) if va.size else None
            except AllZeroDifferences:
                outcome = None
            rows.append(ComparisonRow(test_set, metric, mean_a, mean_b, outcome))
    return rows


def results_frame(results: Sequence[RoundResult], classes: Sequence[str] = DISTORTIONS) -> pd.DataFrame:
    return pd.DataFrame([r.as_row(classes) for r in results], columns=results_columns(classes))


def summarize_results(results: Sequence[RoundResult], classes: Sequence[str] = DISTORTIONS) -> pd.DataFrame:
    """Mean of every metric column per test set, in first-seen test-set order."""
    df = results_frame(results, classes)
    order = list(dict.fromkeys(df["test_set"]))
    summary = df.drop(columns=["round"]).groupby("test_set", sort=False).mean()
    summary.insert(0, "rounds", df.groupby("test_set", sort=False).size())
    return summary.loc[order]


def cross_dataset_variation(
    results: Sequence[RoundResult],
    metric: str = "srocc",
    distortion: Optional[str] = None,
) -> float:
    """Spread (max - min) of the per-test-set means, in percentage points."""
    column = f"{distortion}_{metric}" if distortion else metric
    means = summarize_results(results)[column].dropna()
    if means.empty:
        return float("nan")
    return float(100.0 * (means.max() - means.min()))


def tally_outcomes(table: Sequence[ComparisonRow]) -> Dict[str, object]:
    """Favourable / indifferent / unfavourable counts from model A's side, plus
    the metrics rejected in A's favour on two or more test sets and never against it."""
    favorable = sum(1 for row in table if row.winner == "a")
    unfavorable = sum(1 for row in table if row.winner == "b")
    indifferent = len(table) - favorable - unfavorable

    persistent = []
    for metric in dict.fromkeys(row.metric for row in table):
        winners = [row.winner for row in table if row.metric == metric]
        if winners.count("a") >= 2 and "b" not in winners:
            persistent.append(metric)
    return {
        "favorable": favorable,
        "indifferent": indifferent,
        "unfavorable": unfavorable,
        "persistent": persistent,
    }


def format_table(table: Sequence[ComparisonRow], name_a: str = "A", name_b: str = "B") -> str:
    """Test sets as row groups, one line per model, metrics as columns; `*`
    marks a mean whose model won the Wilcoxon test."""
    metrics = list(dict.fromkeys(row.metric for row in table))
    test_sets = list(dict.fromkeys(row.test_set for row in table))
    cell = {(row.test_set, row.metric): row for row in table}
    label_w = max(len("test set"), *(len(t) for t in test_sets)) if test_sets else 8
    model_w = max(len(name_a), len(name_b), len("model"))
    col_w = max(10, *(len(m) for m in metrics)) if metrics else 10

    header = f"{'test set':<{label_w}}  {'model':<{model_w}}" + "".join(f"  {m:>{col_w}}" for m in metrics)
    lines = [header, "-" * len(header)]
    for test_set in test_sets:
        for side, name in (("a", name_a), ("b", name_b)):
            label = test_set if side == "a" else ""
            parts = [f"{label:<{label_w}}  {name:<{model_w}}"]
            for metric in metrics:
                row = cell[(test_set, metric)]
                value = row.mean_a if side == "a" else row.mean_b
                text = "nan" if math.isnan(value) else f"{value:.4f}"
                if row.winner == side:
                    text += "*"
                parts.append(f"  {text:>{col_w}}")
            lines.append("".join(parts))
    return "\n".join(lines)


def comparison_frame(table: Sequence[ComparisonRow]) -> pd.DataFrame:
    rows = []
    for row in table:
        out = row.outcome
        rows.append(
            {
                "test_set": row.test_set,
                "metric": row.metric,
                "mean_a": row.mean_a,
                "mean_b": row.mean_b,
                "statistic": out.statistic if out else float("nan"),
                "p_value": out.p_value if out else float("nan"),
                "n_effective": out.n_effective if out else 0,
                "reject": bool(out.reject) if out else False,
                "winner": row.winner or "",
            }
        )
    return pd.DataFrame(rows)


def read_results(path) -> List[RoundResult]:
    """Round results from a results CSV; per-class columns are optional."""
    path = Path(path)
    if not path.exists():
        raise IoError(f"results file not found: {path}")
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise IoError(f"cannot read results {path}: {exc}") from exc
    missing = [c for c in BASE_COLUMNS if c not in df.columns]
    if missing:
        raise SchemaError(f"{path}: missing result columns {missing}")

    classes = [c[: -len("_srocc")] for c in df.columns if c.endswith("_srocc")]
    out = []
    for row in df.to_dict("records"):
        per_class = {}
        for cls in classes:
            s, k = row.get(f"{cls}_srocc"), row.get(f"{cls}_krocc", float("nan"))
            if s is not None and not pd.isna(s):
                per_class[cls] = (float(s), float(k))
        out.append(
            RoundResult(
                int(row["round"]),
                str(row["test_set"]),
                float(row["srocc"]),
                float(row["krocc"]),
                float(row["accuracy"]),
                per_class,
            )
        )
    return out


def append_results(results: Sequence[RoundResult], path, classes: Sequence[str] = DISTORTIONS) -> None:
    """Append rows, writing the header only when the file is new."""
    path = Path(path)
    df = results_frame(results, classes)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        new = not path.exists() or path.stat().st_size == 0
        df.to_csv(path, mode="w" if new else "a", header=new, index=False, float_format="%.17g")
    except OSError as exc:
        raise IoError(f"cannot write results {path}: {exc}") from exc


def write_results(results: Sequence[RoundResult], path, classes: Sequence[str] = DISTORTIONS) -> None:
    """Replace the results file with exactly `results`."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        results_frame(results, classes).to_csv(path, index=False, float_format="%.17g")
    except OSError as exc:
        raise IoError(f"cannot write results {path}: {exc}") from exc

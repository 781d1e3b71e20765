"""Kernel SVMs solved in-repo: RBF C-SVC with calibrated one-vs-one probabilities
and nu-SVR.

Both duals are written in the common form

    min 0.5 a'Qa + p'a   s.t.  y'a = const,  0 <= a_i <= u_i

and solved by SMO with maximal-violating-pair working sets. Training rows are
put in a canonical order first, so the result does not depend on the order the
caller passes them in.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

try:
    from .config import PLATT_FOLDS, SVM_MAX_ITER, SVM_TOLERANCE
    from .errors import (
        DimensionMismatch,
        EmptyInput,
        InsufficientSamples,
        InvalidParameter,
        NonFinite,
        SingleClass,
        UntrainedModel,
    )
except ImportError:
    from config import PLATT_FOLDS, SVM_MAX_ITER, SVM_TOLERANCE
    from errors import (
        DimensionMismatch,
        EmptyInput,
        InsufficientSamples,
        InvalidParameter,
        NonFinite,
        SingleClass,
        UntrainedModel,
    )

logger = logging.getLogger(__name__)

# Seed of the internal cross-validation that produces calibration scores.
PLATT_SEED = 0
_TAU = 1e-12


def _as_matrix(X, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFinite(f"{name} contains non-finite values")
    return X


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.means.size:
            raise DimensionMismatch(f"expected {self.means.size} columns, got {X.shape[1]}")
        return (X - self.means) / self.stds

    def unapply(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.stds + self.means


def fit_standardizer(X) -> Standardizer:
    X = _as_matrix(X)
    if X.shape[0] < 2:
        raise EmptyInput(f"standardizer needs >= 2 rows, got {X.shape[0]}")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    # Constant columns map to zero.
    stds = np.where(stds > 0, stds, 1.0)
    return Standardizer(means, stds)


def rbf_kernel(x, y, gamma: float) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DimensionMismatch(f"kernel arguments differ in length: {x.size} vs {y.size}")
    if gamma <= 0:
        raise InvalidParameter("gamma must be positive")
    return float(np.exp(-gamma * np.sum((x - y) ** 2)))


def rbf_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"kernel arguments differ in width: {A.shape[1]} vs {B.shape[1]}")
    return np.exp(-gamma * cdist(A, B, "sqeuclidean"))


def _canonical_order(X: np.ndarray, extra: Optional[np.ndarray] = None) -> np.ndarray:
    keys = [X[:, k] for k in range(X.shape[1] - 1, -1, -1)]
    if extra is not None:
        keys.insert(0, extra)
    return np.lexsort(keys)


class SmoSolver:
    """SMO for the box- and equality-constrained quadratic dual.

    With `per_sign` the working pair is always drawn from one sign group, which
    keeps the sum of each group fixed (the nu formulations need this).
    """

    def __init__(
        self,
        Q: np.ndarray,
        p: np.ndarray,
        y: np.ndarray,
        upper: np.ndarray,
        alpha: np.ndarray,
        tol: float = SVM_TOLERANCE,
        max_iter: int = SVM_MAX_ITER,
        per_sign: bool = False,
    ):
        self.Q = Q
        self.p = p
        self.y = y
        self.upper = upper
        self.alpha = alpha.astype(float).copy()
        self.tol = tol
        self.max_iter = max_iter
        self.per_sign = per_sign
        self.G = p + Q @ self.alpha
        self.gap = np.inf
        self.iterations = 0

    def _violating_pair(self, group: np.ndarray) -> Tuple[float, int, int]:
        a, y, u = self.alpha, self.y, self.upper
        up = group & (((y > 0) & (a < u)) | ((y < 0) & (a > 0)))
        low = group & (((y > 0) & (a > 0)) | ((y < 0) & (a < u)))
        if not up.any() or not low.any():
            return 0.0, -1, -1
        v = -y * self.G
        # argmax/argmin return the lowest index among ties.
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        return float(v[i] - v[j]), i, j

    def working_set_select(self) -> Tuple[float, int, int]:
        if not self.per_sign:
            return self._violating_pair(np.ones_like(self.y, dtype=bool))
        best = (0.0, -1, -1)
        for sign in (1.0, -1.0):
            candidate = self._violating_pair(self.y == sign)
            if candidate[1] >= 0 and (best[1] < 0 or candidate[0] > best[0]):
                best = candidate
        return best

    def update(self, i: int, j: int) -> None:
        a, y, G, Q = self.alpha, self.y, self.G, self.Q
        Ci, Cj = self.upper[i], self.upper[j]
        old_i, old_j = a[i], a[j]

        if y[i] != y[j]:
            quad = max(Q[i, i] + Q[j, j] + 2.0 * Q[i, j], _TAU)
            delta = (-G[i] - G[j]) / quad
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = -diff
            if diff > Ci - Cj:
                if a[i] > Ci:
                    a[i] = Ci
                    a[j] = Ci - diff
            elif a[j] > Cj:
                a[j] = Cj
                a[i] = Cj + diff
        else:
            quad = max(Q[i, i] + Q[j, j] - 2.0 * Q[i, j], _TAU)
            delta = (G[i] - G[j]) / quad
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > Ci:
                if a[i] > Ci:
                    a[i] = Ci
                    a[j] = total - Ci
            elif a[j] < 0:
                a[j] = 0.0
                a[i] = total
            if total > Cj:
                if a[j] > Cj:
                    a[j] = Cj
                    a[i] = total - Cj
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = total

        G += Q[:, i] * (a[i] - old_i) + Q[:, j] * (a[j] - old_j)

    def solve(self) -> "SmoSolver":
        for it in range(self.max_iter):
            gap, i, j = self.working_set_select()
            self.gap = gap
            if i < 0 or gap < self.tol:
                self.iterations = it
                return self
            self.update(i, j)
        self.iterations = self.max_iter
        self.gap = self.working_set_select()[0]
        logger.warning("SMO stopped at max_iter=%d with gap %.3g", self.max_iter, self.gap)
        return self

    def _offset(self, values: np.ndarray, mask: np.ndarray, upper_bounds_below: np.ndarray) -> float:
        """Offset from free variables, or the midpoint of the feasible interval.

        `upper_bounds_below` marks rows whose value bounds the offset from below
        when the variable sits at its upper bound.
        """
        at_upper = self.alpha >= self.upper
        at_lower = self.alpha <= 0
        free = mask & ~at_upper & ~at_lower
        if free.any():
            return float(values[free].mean())
        lb_mask = mask & ((at_upper & upper_bounds_below) | (at_lower & ~upper_bounds_below))
        ub_mask = mask & ((at_upper & ~upper_bounds_below) | (at_lower & upper_bounds_below))
        ub = values[ub_mask].min() if ub_mask.any() else np.inf
        lb = values[lb_mask].max() if lb_mask.any() else -np.inf
        if np.isinf(ub) and np.isinf(lb):
            return 0.0
        if np.isinf(ub):
            return float(lb)
        if np.isinf(lb):
            return float(ub)
        return float((ub + lb) / 2.0)

    def rho(self) -> float:
        everything = np.ones_like(self.y, dtype=bool)
        return self._offset(self.y * self.G, everything, self.y > 0)

    def nu_rho(self) -> Tuple[float, float]:
        """(rho, r) of the two-group formulation."""
        everything = np.ones_like(self.y, dtype=bool)
        r1 = self._offset(self.G, self.y > 0, everything)
        r2 = self._offset(self.G, self.y < 0, everything)
        return (r1 - r2) / 2.0, (r1 + r2) / 2.0


@dataclass(frozen=True)
class _BinarySolution:
    coef: np.ndarray  # y_i * alpha_i over the pair's training rows
    rho: float
    gap: float


def _solve_binary(K: np.ndarray, y: np.ndarray, C: float, tol: float) -> _BinarySolution:
    n = y.size
    Q = (y[:, None] * y[None, :]) * K
    solver = SmoSolver(Q, -np.ones(n), y, np.full(n, float(C)), np.zeros(n), tol=tol).solve()
    return _BinarySolution(coef=y * solver.alpha, rho=solver.rho(), gap=solver.gap)


def _sigmoid(decision: np.ndarray, A: float, B: float) -> np.ndarray:
    """1 / (1 + exp(A f + B)) evaluated without overflow."""
    z = A * np.asarray(decision, dtype=float) + B
    out = np.empty_like(z)
    pos = z >= 0
    ez = np.exp(-z[pos])
    out[pos] = ez / (1.0 + ez)
    out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
    return out


def fit_sigmoid(decision, positive, max_iter: int = 100) -> Tuple[float, float]:
    """Platt sigmoid (A, B) by Newton's method with backtracking on the
    regularized targets (N+ + 1)/(N+ + 2) and 1/(N- + 2)."""
    f = np.asarray(decision, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    prior1 = float(positive.sum())
    prior0 = float(positive.size - prior1)
    hi = (prior1 + 1.0) / (prior1 + 2.0)
    lo = 1.0 / (prior0 + 2.0)
    t = np.where(positive, hi, lo)

    min_step, sigma, eps = 1e-10, 1e-12, 1e-5

    def objective(A: float, B: float) -> float:
        z = f * A + B
        return float(
            np.sum(np.where(z >= 0, t * z, (t - 1.0) * z) + np.log1p(np.exp(-np.abs(z))))
        )

    A, B = 0.0, float(np.log((prior0 + 1.0) / (prior1 + 1.0)))
    fval = objective(A, B)
    for _ in range(max_iter):
        p = _sigmoid(f, A, B)
        q = 1.0 - p
        d2 = p * q
        h11 = sigma + np.sum(f * f * d2)
        h22 = sigma + np.sum(d2)
        h21 = np.sum(f * d2)
        d1 = t - p
        g1 = np.sum(f * d1)
        g2 = np.sum(d1)
        if abs(g1) < eps and abs(g2) < eps:
            break

        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB

        step = 1.0
        while step >= min_step:
            newA, newB = A + step * dA, B + step * dB
            newf = objective(newA, newB)
            if newf < fval + 1e-4 * step * gd:
                A, B, fval = newA, newB, newf
                break
            step /= 2.0
        if step < min_step:
            logger.debug("sigmoid line search failed")
            break
    return float(A), float(B)


def couple_pairwise(r: np.ndarray, max_iter: int = 100) -> np.ndarray:
    """Class probabilities from pairwise estimates r[i, j] = P(i | i or j)
    (second coupling method of Wu, Lin and Weng)."""
    k = r.shape[0]
    if k == 2:
        return np.array([r[0, 1], r[1, 0]])
    r = np.array(r, dtype=float)
    np.fill_diagonal(r, 0.0)
    Q = -r.T * r
    np.fill_diagonal(Q, np.sum(r**2, axis=0))
    p = np.full(k, 1.0 / k)
    eps = 0.005 / k
    for _ in range(max(max_iter, k)):
        Qp = Q @ p
        pQp = float(p @ Qp)
        if np.max(np.abs(Qp - pQp)) < eps:
            break
        for t in range(k):
            diff = (-Qp[t] + pQp) / Q[t, t]
            p[t] += diff
            pQp = (pQp + diff * (diff * Q[t, t] + 2.0 * Qp[t])) / (1.0 + diff) ** 2
            Qp = (Qp + diff * Q[t, :]) / (1.0 + diff)
            p /= 1.0 + diff
    p = np.clip(p, 0.0, None)
    return p / p.sum()


@dataclass(frozen=True)
class SvcModel:
    classes: Tuple[str, ...]
    support_vectors: np.ndarray
    pair_coef: np.ndarray  # one row per class pair, over support_vectors
    rho: np.ndarray
    prob_a: np.ndarray
    prob_b: np.ndarray
    gamma: float
    C: float
    kkt_gaps: Tuple[float, ...] = ()
    probability: bool = True

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        return list(combinations(range(len(self.classes)), 2))

    def decision_values(self, X) -> np.ndarray:
        """Pairwise decisions, one column per class pair; positive favours the first class."""
        X = _as_matrix(X)
        K = rbf_matrix(X, self.support_vectors, self.gamma)
        return K @ self.pair_coef.T - self.rho


def _pairwise_probabilities(model: SvcModel, dec: np.ndarray) -> np.ndarray:
    k = len(model.classes)
    out = np.empty((dec.shape[0], k))
    for row in range(dec.shape[0]):
        r = np.zeros((k, k))
        for col, (a, b) in enumerate(model.pairs):
            pa = _sigmoid(dec[row, col : col + 1], model.prob_a[col], model.prob_b[col])[0]
            pa = min(max(pa, 1e-7), 1.0 - 1e-7)
            r[a, b], r[b, a] = pa, 1.0 - pa
        out[row] = couple_pairwise(r)
    return out


def predict_proba(model: Optional[SvcModel], X) -> np.ndarray:
    """Class probabilities in model.classes order, one row per sample."""
    if model is None:
        raise UntrainedModel("classifier has not been trained")
    if not model.probability:
        raise UntrainedModel("classifier was trained without probability calibration")
    single = np.asarray(X).ndim == 1
    probs = _pairwise_probabilities(model, model.decision_values(X))
    return probs[0] if single else probs


def predict_class(model: Optional[SvcModel], X) -> List[str]:
    """Hard labels: argmax probability, or one-vs-one voting when uncalibrated."""
    if model is None:
        raise UntrainedModel("classifier has not been trained")
    if model.probability:
        idx = np.argmax(np.atleast_2d(predict_proba(model, X)), axis=1)
    else:
        dec = model.decision_values(X)
        votes = np.zeros((dec.shape[0], len(model.classes)), dtype=int)
        for col, (a, b) in enumerate(model.pairs):
            wins_a = dec[:, col] > 0
            votes[wins_a, a] += 1
            votes[~wins_a, b] += 1
        idx = np.argmax(votes, axis=1)
    return [model.classes[i] for i in idx]


def _platt_scores(K: np.ndarray, y: np.ndarray, C: float, tol: float) -> np.ndarray:
    """Out-of-fold decision values of a binary problem."""
    n = y.size
    folds = min(PLATT_FOLDS, n)
    order = np.random.default_rng(PLATT_SEED).permutation(n)
    assignment = np.empty(n, dtype=int)
    assignment[order] = np.arange(n) % folds

    scores = np.zeros(n)
    for fold in range(folds):
        test = assignment == fold
        train = ~test
        y_train = y[train]
        if np.all(y_train > 0):
            scores[test] = 1.0
            continue
        if np.all(y_train < 0):
            scores[test] = -1.0
            continue
        sol = _solve_binary(K[np.ix_(train, train)], y_train, C, tol)
        scores[test] = K[np.ix_(test, train)] @ sol.coef - sol.rho
    return scores


def train_svc(
    X,
    labels: Sequence[str],
    C: float,
    gamma: float,
    classes: Optional[Sequence[str]] = None,
    probability: bool = True,
    tol: float = SVM_TOLERANCE,
) -> SvcModel:
    """One-vs-one RBF C-SVC; with `probability` each pair gets a sigmoid fitted
    on internal cross-validation scores."""
    X = _as_matrix(X)
    labels = np.asarray([str(v) for v in labels])
    if labels.size != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} rows but {labels.size} labels")
    if C <= 0 or gamma <= 0:
        raise InvalidParameter("C and gamma must be positive")
    classes = tuple(classes) if classes is not None else tuple(sorted(set(labels.tolist())))
    present = [c for c in classes if np.any(labels == c)]
    if len(present) < 2:
        raise SingleClass(f"need at least two classes, got {present}")
    if len(present) < len(classes):
        raise SingleClass(f"classes without samples: {sorted(set(classes) - set(present))}")

    order = _canonical_order(X)
    X, labels = X[order], labels[order]
    K_full = rbf_matrix(X, X, gamma)

    n_pairs = len(classes) * (len(classes) - 1) // 2
    coef_full = np.zeros((n_pairs, X.shape[0]))
    rho = np.zeros(n_pairs)
    prob_a = np.zeros(n_pairs)
    prob_b = np.zeros(n_pairs)
    gaps = []
    for col, (a, b) in enumerate(combinations(range(len(classes)), 2)):
        rows = np.flatnonzero((labels == classes[a]) | (labels == classes[b]))
        y = np.where(labels[rows] == classes[a], 1.0, -1.0)
        K = K_full[np.ix_(rows, rows)]
        sol = _solve_binary(K, y, C, tol)
        coef_full[col, rows] = sol.coef
        rho[col] = sol.rho
        gaps.append(sol.gap)
        if probability:
            scores = _platt_scores(K, y, C, tol)
            prob_a[col], prob_b[col] = fit_sigmoid(scores, y > 0)

    used = np.flatnonzero(np.any(coef_full != 0, axis=0))
    logger.debug("svc: %d support vectors of %d rows, C=%g gamma=%g", used.size, X.shape[0], C, gamma)
    return SvcModel(
        classes=classes,
        support_vectors=X[used],
        pair_coef=coef_full[:, used],
        rho=rho,
        prob_a=prob_a,
        prob_b=prob_b,
        gamma=float(gamma),
        C=float(C),
        kkt_gaps=tuple(gaps),
        probability=probability,
    )


@dataclass(frozen=True)
class SvrModel:
    support_vectors: np.ndarray
    coef: np.ndarray
    bias: float
    gamma: float
    C: float
    nu: float
    epsilon: float = 0.0
    n_train: int = 0
    kkt_gap: float = 0.0
    margin_errors: int = 0

    @property
    def n_support(self) -> int:
        return int(self.coef.size)


def train_svr(
    X,
    targets,
    C: float,
    gamma: float,
    nu: float = 0.5,
    tol: float = SVM_TOLERANCE,
) -> SvrModel:
    """nu-SVR with box C/n per dual variable and sum(alpha + alpha*) = C nu."""
    X = _as_matrix(X)
    y = np.asarray(targets, dtype=float).ravel()
    if y.size != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} rows but {y.size} targets")
    if not np.all(np.isfinite(y)):
        raise NonFinite("targets contain non-finite values")
    n = y.size
    if n < 2:
        raise InsufficientSamples(f"regression needs >= 2 samples, got {n}")
    if not 0.0 < nu < 1.0:
        raise InvalidParameter(f"nu must lie in (0, 1), got {nu}")
    if C <= 0 or gamma <= 0:
        raise InvalidParameter("C and gamma must be positive")

    order = _canonical_order(X, y)
    X, y = X[order], y[order]
    K = rbf_matrix(X, X, gamma)

    box = C / n
    remaining = C * nu / 2.0
    alpha = np.zeros(2 * n)
    for i in range(n):
        alpha[i] = alpha[i + n] = min(remaining, box)
        remaining -= alpha[i]

    sign = np.r_[np.ones(n), -np.ones(n)]
    Q = np.block([[K, -K], [-K, K]])
    p = np.r_[-y, y]
    solver = SmoSolver(Q, p, sign, np.full(2 * n, box), alpha, tol=tol, per_sign=True).solve()
    rho, r = solver.nu_rho()

    beta = solver.alpha[:n] - solver.alpha[n:]
    used = np.flatnonzero(beta != 0)
    at_bound = int(np.sum(solver.alpha >= box))
    logger.debug("svr: %d support vectors of %d rows, epsilon=%.4g", used.size, n, -r)
    return SvrModel(
        support_vectors=X[used],
        coef=beta[used],
        bias=-rho,
        gamma=float(gamma),
        C=float(C),
        nu=float(nu),
        epsilon=float(-r),
        n_train=n,
        kkt_gap=float(solver.gap),
        margin_errors=at_bound,
    )


def predict(model: Optional[SvrModel], X) -> np.ndarray:
    """sum_i coef_i K(x_i, x) + bias for each row of X."""
    if model is None:
        raise UntrainedModel("regressor has not been trained")
    X = _as_matrix(X)
    if model.coef.size == 0:
        return np.full(X.shape[0], model.bias)
    return rbf_matrix(X, model.support_vectors, model.gamma) @ model.coef + model.bias

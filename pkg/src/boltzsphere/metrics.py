"""Distances and information functionals used to quantify chaos.

Transport distances are exact: sorted-quantile coupling in dimension one,
assignment (uniform weights, equal sizes) or a transportation LP solved by
HiGHS otherwise.  Entropy against the Gaussian uses a k-nearest-neighbor
differential entropy estimate with jackknife error bars; relative Fisher
information is a plug-in Monte Carlo average of |score(v) + v|^2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from scipy.special import digamma, gammaln
from scipy.sparse import coo_matrix

from .densities import BaseDensity
from .errors import CapacityError, ParameterError

__all__ = [
    "EmpiricalMeasure",
    "Estimate",
    "InterpolationResult",
    "w1",
    "w2",
    "relative_entropy_vs_gaussian",
    "relative_fisher",
    "interpolation_check",
]

MAX_TRANSPORT_PAIRS = 4_000_000


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted point cloud in R^D with normalized weights."""

    points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if not np.all(np.isfinite(pts)):
            raise ParameterError("points must be finite")
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (pts.shape[0],) or np.any(w < 0):
                raise ParameterError("weights must be nonnegative, one per point")
            total = float(w.sum())
            if abs(total - 1.0) > 1e-12:
                raise ParameterError(f"weights must sum to 1 (got {total!r})")
            w = w / total
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def uniform(self) -> bool:
        return bool(np.allclose(self.weights, 1.0 / self.n, rtol=0.0, atol=1e-12 / self.n))

    def moment(self, k: int) -> float:
        return float(self.weights @ np.linalg.norm(self.points, axis=1) ** k)


@dataclass(frozen=True)
class Estimate:
    """Value with a standard error; unpacks as (value, stderr)."""

    value: float
    stderr: float
    excluded: int = 0
    jittered: bool = False

    def __iter__(self):
        return iter((self.value, self.stderr))


def _quantile_cost_1d(a: EmpiricalMeasure, b: EmpiricalMeasure, p: int) -> float:
    # exact coupling of sorted quantile functions
    ia = np.argsort(a.points[:, 0], kind="stable")
    ib = np.argsort(b.points[:, 0], kind="stable")
    xa, wa = a.points[ia, 0], a.weights[ia]
    xb, wb = b.points[ib, 0], b.weights[ib]
    ca = np.cumsum(wa)
    cb = np.cumsum(wb)
    qs = np.union1d(ca, cb)
    qs = qs[qs <= 1.0 + 1e-15]
    seg = np.diff(np.concatenate(([0.0], qs)))
    pa = np.searchsorted(ca, qs - 1e-15, side="left")
    pb = np.searchsorted(cb, qs - 1e-15, side="left")
    pa = np.clip(pa, 0, xa.size - 1)
    pb = np.clip(pb, 0, xb.size - 1)
    diffs = np.abs(xa[pa] - xb[pb])
    return float(np.sum(seg * diffs**p))


def _cost_matrix(a: EmpiricalMeasure, b: EmpiricalMeasure, p: int) -> np.ndarray:
    # cdist keeps exact zeros for coincident points, unlike the expanded
    # |x|^2 + |y|^2 - 2 x.y form
    metric = "sqeuclidean" if p == 2 else "euclidean"
    return cdist(a.points, b.points, metric=metric)


def _transport_lp(cost: np.ndarray, wa: np.ndarray, wb: np.ndarray) -> float:
    n, m = cost.shape
    rows_a = np.repeat(np.arange(n), m)
    rows_b = n + np.tile(np.arange(m), n)
    cols = np.arange(n * m)
    data = np.ones(n * m)
    A_eq = coo_matrix(
        (np.concatenate([data, data]), (np.concatenate([rows_a, rows_b]), np.concatenate([cols, cols]))),
        shape=(n + m, n * m),
    )
    res = linprog(
        cost.reshape(-1),
        A_eq=A_eq.tocsr(),
        b_eq=np.concatenate([wa, wb]),
        bounds=(0, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if not res.success:
        raise CapacityError(f"transportation LP failed: {res.message}")
    return float(res.fun)


def _min_cost(a: EmpiricalMeasure, b: EmpiricalMeasure, p: int) -> float:
    if a.dim != b.dim:
        raise ParameterError("measures live in different dimensions")
    if a.dim == 1:
        return _quantile_cost_1d(a, b, p)
    if a.n * b.n > MAX_TRANSPORT_PAIRS:
        raise CapacityError(
            f"{a.n} x {b.n} pairs exceeds the exact-transport limit {MAX_TRANSPORT_PAIRS}"
        )
    cost = _cost_matrix(a, b, p)
    if a.n == b.n and a.uniform and b.uniform:
        ri, ci = linear_sum_assignment(cost)
        return float(cost[ri, ci].mean())
    return _transport_lp(cost, a.weights, b.weights)


def w1(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """Exact 1-transport distance with Euclidean ground cost."""
    return _min_cost(a, b, p=1)


def w2(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """Exact 2-transport distance (square root of the minimal squared cost)."""
    return math.sqrt(max(_min_cost(a, b, p=2), 0.0))


def _knn_entropy(points: np.ndarray, k: int) -> float:
    n, d = points.shape
    tree = cKDTree(points)
    dist, _ = tree.query(points, k=k + 1, workers=-1)
    eps = dist[:, k]
    log_ball = 0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0)
    return float(
        digamma(n) - digamma(k) + log_ball + d * np.mean(np.log(np.maximum(eps, 1e-300)))
    )


def relative_entropy_vs_gaussian(
    samples: EmpiricalMeasure, k_nn: int = 4, n_folds: int = 10, rng: Optional[np.random.Generator] = None
) -> Estimate:
    """H(mu | gamma) from samples of mu.

    Uses H(mu|gamma) = -h(mu) + (d/2) log(2 pi) + mean|x|^2 / 2 with h the
    k-nearest-neighbor differential entropy; the standard error comes from a
    delete-one-fold jackknife over `n_folds` folds.  Exact duplicate points
    are jittered by 1e-12 (flagged in the result).
    """
    if k_nn < 1:
        raise ParameterError("k_nn must be >= 1")
    if not samples.uniform:
        raise ParameterError("entropy estimation expects unweighted samples")
    pts = np.array(samples.points, dtype=float)
    n, d = pts.shape
    if n <= max(k_nn + 1, n_folds):
        raise ParameterError("not enough samples")

    jittered = False
    order = np.lexsort(pts.T)
    dup = np.nonzero(np.all(np.diff(pts[order], axis=0) == 0.0, axis=1))[0]
    if dup.size:
        jittered = True
        gen = rng if rng is not None else np.random.default_rng(0)
        pts[order[dup + 1]] += gen.uniform(-1e-12, 1e-12, size=(dup.size, d))
        warnings.warn(f"jittered {dup.size} duplicate points by 1e-12", stacklevel=2)

    def h_rel(block: np.ndarray) -> float:
        return (
            -_knn_entropy(block, k_nn)
            + 0.5 * d * math.log(2.0 * math.pi)
            + 0.5 * float(np.mean(np.sum(block * block, axis=1)))
        )

    full = h_rel(pts)
    folds = np.array_split(np.arange(n), n_folds)
    loo = np.empty(n_folds)
    for i, fold in enumerate(folds):
        mask = np.ones(n, dtype=bool)
        mask[fold] = False
        loo[i] = h_rel(pts[mask])
    m = float(n_folds)
    stderr = math.sqrt((m - 1.0) / m * float(np.sum((loo - loo.mean()) ** 2)))
    return Estimate(value=full, stderr=stderr, jittered=jittered)


def relative_fisher(density: BaseDensity, samples: EmpiricalMeasure) -> Estimate:
    """Plug-in estimate of I(mu | gamma) = E |score(v) + v|^2.

    Points where the score is undefined (support boundary) are excluded and
    counted in the result.
    """
    pts = density.points(samples.points)
    if not samples.uniform:
        raise ParameterError("Fisher estimation expects unweighted samples")
    sc = np.asarray(density.score(pts), dtype=float)
    vals = np.sum((sc + pts) ** 2, axis=1)
    good = np.isfinite(vals)
    excluded = int(np.size(vals) - np.count_nonzero(good))
    vals = vals[good]
    if vals.size == 0:
        raise ParameterError("score undefined at every sample point")
    value = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return Estimate(value=value, stderr=stderr, excluded=excluded)


@dataclass(frozen=True)
class InterpolationResult:
    """Both sides of the W2 <= 2^{3/2} M_k^{1/(2(k-1))} W1^{(k-2)/(2(k-1))} check.

    `bound_alt` evaluates the same right-hand side with the constant 2^{2/3}
    that appears in some later uses; the check itself uses 2^{3/2}.
    """

    passed: bool
    w2: float
    bound: float
    bound_alt: float
    w1: float
    m_k: float

    def __bool__(self):
        return self.passed


def interpolation_check(a: EmpiricalMeasure, b: EmpiricalMeasure, k: int) -> InterpolationResult:
    """Moment-interpolation inequality between W2 and W1 on samples."""
    if k < 2:
        raise ParameterError("need k >= 2")
    mk = a.moment(k) + b.moment(k)
    d1 = w1(a, b)
    d2 = w2(a, b)
    expo_m = 1.0 / (2.0 * (k - 1.0))
    expo_w = (k - 2.0) / (2.0 * (k - 1.0))
    bound = 2.0**1.5 * mk**expo_m * d1**expo_w
    bound_alt = 2.0 ** (2.0 / 3.0) * mk**expo_m * d1**expo_w
    return InterpolationResult(
        passed=bool(d2 <= bound + 1e-12),
        w2=d2,
        bound=bound,
        bound_alt=bound_alt,
        w1=d1,
        m_k=mk,
    )

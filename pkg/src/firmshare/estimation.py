"""Estimators that recover distribution and technology parameters from firm samples.

Tail indices come from the rank-1/2 Zipf regression and the Hill estimator;
factor elasticities and the scale-share gradient come from log-log OLS, with
an alternating-projection demeaner for fixed-effect specifications.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InsufficientSampleError(ValueError):
    """Too few observations for the requested estimator."""


class InsufficientTailError(InsufficientSampleError):
    """Too few upper order statistics for a tail estimate."""


class DegenerateRegressorError(ValueError):
    """The regressor has no variance (possibly after demeaning)."""


class ConvergenceError(RuntimeError):
    """Alternating-projection demeaning failed to converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class RegressionFit:
    """OLS fit summary: slope, intercept, R**2, classical slope stderr, sample size."""

    slope: float
    intercept: float
    r_squared: float
    stderr_slope: float
    n: int


@dataclass(frozen=True)
class TailFit:
    """Tail-index estimate.

    ``stderr`` is the estimator's own asymptotic standard error
    (alpha*sqrt(2/n) for the rank regression, alpha/sqrt(k) for Hill);
    the rank method additionally reports the classical OLS slope stderr.
    """

    alpha_hat: float
    stderr: float
    n_used: int
    method: str
    k: int | None = None
    stderr_ols: float | None = None


def _ols(x: np.ndarray, y: np.ndarray) -> RegressionFit:
    n = x.size
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    # constant regressors center to rounding noise (~1 ulp), so the cutoff is
    # relative to the regressor's own scale, not literal zero
    scale = max(1.0, abs(float(x.mean())))
    if not math.isfinite(sxx) or math.sqrt(sxx / n) <= 1e-12 * scale:
        raise DegenerateRegressorError("regressor has (numerically) zero variance")
    slope = float(xc @ yc) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = yc - slope * xc
    ssr = float(resid @ resid)
    sst = float(yc @ yc)
    r_squared = 1.0 if sst == 0.0 else min(1.0, max(0.0, 1.0 - ssr / sst))
    stderr = math.sqrt(ssr / (n - 2) / sxx) if n > 2 else math.nan
    return RegressionFit(slope=slope, intercept=intercept, r_squared=r_squared,
                         stderr_slope=stderr, n=n)


def _validated_positive(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        arr = arr.ravel()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if np.any(arr <= 0.0):
        raise ValueError(f"{name} must be strictly positive")
    return arr


def rank_regression_tail(outputs, top_fraction: float | None = None) -> TailFit:
    """Tail index by the bias-corrected Zipf regression ln(rank - 0.5) = C - alpha*ln(y).

    Firms are ranked by output from largest to smallest and the full cell is
    fit by OLS; ``top_fraction`` optionally restricts to the largest fraction
    of the sample as a diagnostic variant.  Ties keep their sorted order,
    which does not affect the fit.
    """
    arr = _validated_positive(outputs, "outputs")
    if top_fraction is not None:
        if not 0.0 < top_fraction <= 1.0:
            raise ValueError(f"top_fraction must lie in (0, 1], got {top_fraction}")
        m = int(math.ceil(top_fraction * arr.size))
        arr = np.sort(arr)[arr.size - m:]
    if arr.size < 10:
        raise InsufficientSampleError(
            f"rank regression needs at least 10 observations, got {arr.size}"
        )
    desc = np.sort(arr)[::-1]
    ranks = np.arange(1, desc.size + 1, dtype=float)
    fit = _ols(np.log(desc), np.log(ranks - 0.5))
    alpha = -fit.slope
    return TailFit(
        alpha_hat=alpha,
        stderr=abs(alpha) * math.sqrt(2.0 / desc.size),
        n_used=desc.size,
        method="rank_regression",
        stderr_ols=fit.stderr_slope,
    )


def hill_tail(outputs, k_fraction: float = 0.10) -> TailFit:
    """Hill estimator on the k largest order statistics, k = floor(k_fraction * n).

    alpha_hat = 1 / mean(ln y_(i) - ln y_(k+1), i = 1..k).  Observations tied
    with y_(k+1) contribute zero spacing, which is the correct limit.
    """
    arr = _validated_positive(outputs, "outputs")
    if not 0.0 < k_fraction <= 0.5:
        raise ValueError(f"k_fraction must lie in (0, 0.5], got {k_fraction}")
    k = int(math.floor(k_fraction * arr.size))
    if k < 5:
        raise InsufficientTailError(f"Hill estimator needs k >= 5 tail points, got k={k}")
    desc = np.sort(arr)[::-1]
    log_top = np.log(desc[:k])
    mean_spacing = float(np.mean(log_top - math.log(desc[k])))
    if mean_spacing <= 0.0:
        raise ValueError("degenerate tail: log-spacings sum to zero (all values equal?)")
    alpha = 1.0 / mean_spacing
    return TailFit(
        alpha_hat=alpha,
        stderr=alpha / math.sqrt(k),
        n_used=arr.size,
        method="hill",
        k=k,
    )


def ols_loglog(x, y) -> RegressionFit:
    """OLS of ln(y) on ln(x); the workhorse for factor-elasticity estimation."""
    x_arr = _validated_positive(x, "x")
    y_arr = _validated_positive(y, "y")
    if x_arr.size != y_arr.size:
        raise ValueError(f"length mismatch: {x_arr.size} vs {y_arr.size}")
    if x_arr.size < 3:
        raise InsufficientSampleError(f"need at least 3 observations, got {x_arr.size}")
    return _ols(np.log(x_arr), np.log(y_arr))


def estimate_scale_share_gradient(ls, outputs, groups=None) -> RegressionFit:
    """Slope of labor share on log output, optionally within groups (one-way FE).

    With ``groups`` both sides are demeaned inside each group before the OLS,
    absorbing group intercepts; every group must have at least 2 members.
    """
    ls_arr = np.asarray(ls, dtype=float)
    x_arr = np.log(_validated_positive(outputs, "outputs"))
    if ls_arr.size != x_arr.size:
        raise ValueError(f"length mismatch: {ls_arr.size} vs {x_arr.size}")
    if not np.all(np.isfinite(ls_arr)):
        raise ValueError("labor shares must be finite")
    if ls_arr.size < 3:
        raise InsufficientSampleError(f"need at least 3 observations, got {ls_arr.size}")
    if groups is not None:
        labels = np.asarray(groups)
        if labels.size != ls_arr.size:
            raise ValueError("groups must match the observation count")
        _, counts = np.unique(labels, return_counts=True)
        if np.any(counts < 2):
            raise ValueError("every group needs at least 2 members")
        ls_arr = demean(ls_arr, labels)
        x_arr = demean(x_arr, labels)
    return _ols(x_arr, ls_arr)


def demean(values, *factors, tol: float = 1e-10, max_sweeps: int = 100) -> np.ndarray:
    """Remove factor means by alternating projections.

    Sweeps over the factors subtracting cell means until every cell mean is
    below ``tol`` in magnitude.  One factor converges in a single sweep;
    orthogonal (balanced) designs converge in one sweep as well.
    """
    out = np.array(values, dtype=float)
    if not factors:
        raise ValueError("at least one factor is required")
    encoded = []
    for factor in factors:
        labels = np.asarray(factor)
        if labels.size != out.size:
            raise ValueError("factor length must match the value count")
        _, inverse = np.unique(labels, return_inverse=True)
        encoded.append(inverse)

    def max_cell_mean() -> float:
        worst = 0.0
        for inverse in encoded:
            sums = np.bincount(inverse, weights=out)
            counts = np.bincount(inverse)
            worst = max(worst, float(np.max(np.abs(sums / counts))))
        return worst

    for _ in range(max_sweeps):
        for inverse in encoded:
            sums = np.bincount(inverse, weights=out)
            counts = np.bincount(inverse)
            out -= (sums / counts)[inverse]
        if max_cell_mean() < tol:
            return out
    residual = max_cell_mean()
    raise ConvergenceError(
        f"demeaning did not converge in {max_sweeps} sweeps (residual {residual:.3e})",
        residual=residual,
    )

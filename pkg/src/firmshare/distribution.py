"""Truncated Pareto distribution of firm output: exact algebra and sampling.

Everything downstream (aggregation theorem, weighting factor, synthetic
populations) is built on the closed-form moments implemented here, so the
formulas keep their numerically stable ``expm1`` form near the removable
singularity at moment order ``a == xi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

#: Half-width of the branch switch around the removable singularity a == xi.
EPS_SING = 1e-9


class SingularityError(ValueError):
    """Closed form is singular at this parameter point; use the quadrature fallback."""


def _power_ratio(u: float, log_r: float) -> float:
    """(r**u - 1) / u with the u -> 0 limit log(r).

    Evaluated through expm1 so that the band |u| < 1e-6 keeps full precision
    instead of losing it to cancellation in r**u - 1.
    """
    if abs(u) <= EPS_SING:
        return log_r
    return math.expm1(u * log_r) / u


@dataclass(frozen=True)
class TruncatedPareto:
    """Pareto law with shape ``xi`` restricted to the support [y_min, y_max].

    The density is ``xi * y_min**xi * y**-(xi+1) / z`` with normalization
    ``z = 1 - r**-xi`` and range ratio ``r = y_max / y_min``.  Both derived
    constants are computed once at construction; invalid parameters are
    rejected immediately.
    """

    xi: float
    y_min: float
    y_max: float
    r: float = field(init=False, repr=False)
    z: float = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.xi) and self.xi > 0):
            raise ValueError(f"xi must be a positive finite real, got {self.xi}")
        if not (math.isfinite(self.y_min) and self.y_min > 0):
            raise ValueError(f"y_min must be a positive finite real, got {self.y_min}")
        if not (math.isfinite(self.y_max) and self.y_max > self.y_min):
            raise ValueError(
                f"y_max must be finite and exceed y_min, got y_max={self.y_max} y_min={self.y_min}"
            )
        r = self.y_max / self.y_min
        # 1 - r**-xi via expm1 so that moment(0) == 1 holds exactly
        z = -math.expm1(-self.xi * math.log(r))
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "z", z)

    @property
    def log_r(self) -> float:
        return math.log(self.r)

    def pdf(self, y):
        """Density at ``y`` (scalar or array); zero outside the support."""
        y_arr = np.asarray(y, dtype=float)
        inside = (y_arr >= self.y_min) & (y_arr <= self.y_max)
        coef = self.xi * self.y_min**self.xi / self.z
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = np.where(inside, coef * np.power(y_arr, -self.xi - 1.0, where=inside), 0.0)
        return float(vals) if np.isscalar(y) or y_arr.ndim == 0 else vals

    def cdf(self, y):
        """P(Y <= y), clamped to [0, 1] outside the support."""
        y_arr = np.asarray(y, dtype=float)
        below = y_arr < self.y_min
        above = y_arr > self.y_max
        safe = np.where(below | above, self.y_min, y_arr)
        # (1 - (y_min/y)**xi) / z, kept stable near y = y_min
        core = -np.expm1(-self.xi * np.log(safe / self.y_min)) / self.z
        vals = np.where(below, 0.0, np.where(above, 1.0, core))
        return float(vals) if np.isscalar(y) or y_arr.ndim == 0 else vals

    def moment(self, a: float) -> float:
        """E[y**a] in closed form.

        For a != xi this is ``xi * y_min**a / z * (r**(a-xi) - 1)/(a - xi)``;
        at a == xi the ratio degenerates to ``log r``.  The branch switch and
        the expm1 evaluation keep the two sides continuous to ~1e-14.
        """
        if not math.isfinite(a):
            raise ValueError(f"moment order must be finite, got {a}")
        if a == 0.0:
            return 1.0
        ratio = _power_ratio(a - self.xi, self.log_r)
        return self.xi * self.y_min**a / self.z * ratio

    def mean_log_weighted(self) -> float:
        """E[y * ln y] in closed form.

        Valid away from xi == 1 where the expression has a removable
        singularity; callers hitting that point should integrate
        ``y * ln(y) * pdf(y)`` instead (see :func:`mean_log_weighted_quad`).
        """
        if abs(self.xi - 1.0) <= EPS_SING:
            raise SingularityError(
                "mean_log_weighted is singular at xi == 1; use mean_log_weighted_quad"
            )
        u1 = 1.0 - self.xi
        log_r = self.log_r
        b1 = _power_ratio(u1, log_r)  # (r**(1-xi) - 1)/(1 - xi)
        bracket = math.log(self.y_min) * b1 + (self.r**u1 * log_r - b1) / u1
        return self.xi * self.y_min / self.z * bracket

    def quantile(self, u):
        """Inverse CDF: y = y_min * (1 - u*z)**(-1/xi) for u in [0, 1]."""
        u_arr = np.asarray(u, dtype=float)
        if np.any((u_arr < 0.0) | (u_arr > 1.0)) or not np.all(np.isfinite(u_arr)):
            raise ValueError("quantile argument must lie in [0, 1]")
        vals = self.y_min * np.power(1.0 - u_arr * self.z, -1.0 / self.xi)
        return float(vals) if np.isscalar(u) or u_arr.ndim == 0 else vals

    def sample(self, n: int, rng) -> np.ndarray:
        """Draw ``n`` i.i.d. values by inverse-CDF sampling.

        ``rng`` is either an integer seed or a ``numpy.random.Generator``;
        integer seeds construct the default PCG64 generator, so runs are
        reproducible bit-for-bit from (parameters, seed).  Parallel callers
        should pass independently seeded generators.
        """
        if n < 0:
            raise ValueError(f"sample size must be nonnegative, got {n}")
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        return self.quantile(gen.random(n))


def moment_quad(dist: TruncatedPareto, a: float) -> float:
    """E[y**a] by adaptive quadrature; the independent check on :meth:`moment`."""
    val, _ = integrate.quad(
        lambda y: y**a * dist.pdf(y),
        dist.y_min,
        dist.y_max,
        epsabs=0.0,
        epsrel=1e-12,
        limit=200,
    )
    return val


def mean_log_weighted_quad(dist: TruncatedPareto) -> float:
    """E[y * ln y] by adaptive quadrature; fallback for xi near 1."""
    val, _ = integrate.quad(
        lambda y: y * math.log(y) * dist.pdf(y),
        dist.y_min,
        dist.y_max,
        epsabs=0.0,
        epsrel=1e-12,
        limit=200,
    )
    return val

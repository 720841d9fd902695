"""Micro-to-macro aggregation: Cobb-Douglas theorem, scale gradients, weighting factor.

Power-law factor demands ``l = l0 * y**beta`` and ``k = k0 * y**gamma`` over a
truncated-Pareto output distribution aggregate exactly into
``Y = A * L**(1-theta) * K**theta`` with ``theta = (1-beta)/(gamma-beta)``.
When the elasticities themselves drift with scale, the output-weighted labor
share picks up a distribution-shape term ``delta * phi(xi, r)``; both the
weighting factor ``phi`` and the exact-expectation route it summarizes are
implemented here.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .distribution import SingularityError, TruncatedPareto, _power_ratio

#: Two technologies closer than this in (gamma - beta) are treated as degenerate.
DEGENERACY_TOL = 1e-12

#: Switch to the series evaluation of phi when |1 - xi| * log(r) drops below this.
PHI_SERIES_BAND = 1e-4


class DegenerateTechnologyError(ValueError):
    """gamma == beta: factor demands are indistinguishable and shares are undefined."""


class Regularity(enum.Enum):
    """Classification of a technology against the aggregation theorem's conditions."""

    REGULAR = "regular"  # gamma > 1 > beta > 0
    CAPITAL_DEEPENING_ONLY = "capital_deepening_only"  # gamma > beta but not regular
    DEGENERATE = "degenerate"  # gamma <= beta


@dataclass(frozen=True)
class MicroTechnology:
    """Power-law factor demand parameters: l = l0 * y**beta, k = k0 * y**gamma."""

    beta: float
    gamma: float
    l0: float = 1.0
    k0: float = 1.0

    def __post_init__(self) -> None:
        for name in ("beta", "gamma", "l0", "k0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.l0 <= 0 or self.k0 <= 0:
            raise ValueError("efficiency parameters l0 and k0 must be positive")


@dataclass(frozen=True)
class TechGradient:
    """Scale drift of the elasticities: beta(y) = beta + b*u, gamma(y) = gamma + g*u."""

    b: float = 0.0
    g: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.b) and math.isfinite(self.g)):
            raise ValueError("gradient coefficients must be finite")


@dataclass(frozen=True)
class AggregateTechnology:
    """Derived macro objects for one (technology, gradient, distribution) triple."""

    theta: float
    tfp: float
    base_ls: float
    delta: float
    phi: float
    macro_ls: float


def derive_theta(beta: float, gamma: float) -> float:
    """Aggregate capital share theta = (1 - beta) / (gamma - beta)."""
    if abs(gamma - beta) <= DEGENERACY_TOL:
        raise DegenerateTechnologyError(f"gamma == beta == {beta}: capital share undefined")
    return (1.0 - beta) / (gamma - beta)


def derive_labor_share(beta: float, gamma: float) -> float:
    """Aggregate labor share (gamma - 1) / (gamma - beta); equals 1 - derive_theta."""
    if abs(gamma - beta) <= DEGENERACY_TOL:
        raise DegenerateTechnologyError(f"gamma == beta == {beta}: labor share undefined")
    return (gamma - 1.0) / (gamma - beta)


def validate_regularity(tech: MicroTechnology) -> Regularity:
    """Classify a technology so callers can gate the aggregation theorem."""
    if tech.gamma <= tech.beta:
        return Regularity.DEGENERATE
    if tech.gamma > 1.0 > tech.beta > 0.0:
        return Regularity.REGULAR
    return Regularity.CAPITAL_DEEPENING_ONLY


def aux_b(a: float, dist: TruncatedPareto) -> float:
    """Auxiliary moment kernel B(a) = (r**(a-xi) - 1)/(a - xi), log r at a == xi."""
    return _power_ratio(a - dist.xi, dist.log_r)


def derive_constants(tech: MicroTechnology, dist: TruncatedPareto) -> tuple[float, float, float]:
    """Aggregation constants (C_Y, C_L, C_K) so that Y = C_Y*N*y_min etc."""
    if validate_regularity(tech) is Regularity.DEGENERATE:
        raise DegenerateTechnologyError("aggregation constants require gamma > beta")
    scale = dist.xi / dist.z
    c_y = scale * aux_b(1.0, dist)
    c_l = scale * tech.l0 * aux_b(tech.beta, dist)
    c_k = scale * tech.k0 * aux_b(tech.gamma, dist)
    return c_y, c_l, c_k


def derive_tfp(tech: MicroTechnology, dist: TruncatedPareto) -> float:
    """Total factor productivity A = C_Y / (C_L**(1-theta) * C_K**theta)."""
    c_y, c_l, c_k = derive_constants(tech, dist)
    theta = derive_theta(tech.beta, tech.gamma)
    return c_y / (c_l ** (1.0 - theta) * c_k**theta)


def aggregate_exact(
    tech: MicroTechnology, dist: TruncatedPareto, n_firms: float
) -> tuple[float, float, float]:
    """Exact-moment aggregates (Y, L, K) for a population of ``n_firms`` firms."""
    if n_firms <= 0:
        raise ValueError(f"n_firms must be positive, got {n_firms}")
    y = n_firms * dist.moment(1.0)
    labor = n_firms * tech.l0 * dist.moment(tech.beta)
    capital = n_firms * tech.k0 * dist.moment(tech.gamma)
    return y, labor, capital


def physical_elasticity_correction(raw_elasticity: float, sigma: float) -> float:
    """Convert a revenue elasticity to a physical one: raw * sigma / (sigma - 1).

    ``sigma`` is the CES demand elasticity of substitution; the correction
    factor tends to 1 as sigma grows.
    """
    if not (math.isfinite(sigma) and sigma > 1.0):
        raise ValueError(f"sigma must exceed 1, got {sigma}")
    return raw_elasticity * sigma / (sigma - 1.0)


def scale_share_gradient(tech: MicroTechnology, grad: TechGradient) -> float:
    """Scale-share gradient delta = [g*(1-beta) + b*(gamma-1)] / (gamma-beta)**2.

    The slope of the firm labor share in log relative size; negative values
    mean large firms run lower labor shares.
    """
    span = tech.gamma - tech.beta
    if abs(span) <= DEGENERACY_TOL:
        raise DegenerateTechnologyError("scale-share gradient requires gamma != beta")
    return (grad.g * (1.0 - tech.beta) + grad.b * (tech.gamma - 1.0)) / span**2


def gradient_validity_bound(tech: MicroTechnology, grad: TechGradient) -> float:
    """Log-size u* at which the exact share quotient's denominator crosses zero.

    The gradient model LS(u) = ((gamma-1) + g*u)/((gamma-beta) + (g-b)*u) is
    only meaningful for 0 <= u < u*; returns +inf when the denominator never
    crosses (b == g).
    """
    db = grad.b - grad.g
    if db == 0.0:
        return math.inf
    return (tech.gamma - tech.beta) / db


def firm_labor_share(
    tech: MicroTechnology,
    grad: TechGradient,
    y,
    y_min: float,
    exact: bool = False,
):
    """Firm labor share at output ``y``.

    Default is the first-order form LS + delta * ln(y/y_min).  With
    ``exact=True`` the untruncated quotient
    ((gamma-1) + g*u) / ((gamma-beta) + (g-b)*u) is evaluated instead, which
    oracle tests use to bound the linearization error.
    """
    if y_min <= 0:
        raise ValueError("y_min must be positive")
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < y_min):
        raise ValueError("y must not fall below y_min")
    u = np.log(y_arr / y_min)
    if exact:
        vals = ((tech.gamma - 1.0) + grad.g * u) / (
            (tech.gamma - tech.beta) + (grad.g - grad.b) * u
        )
    else:
        base = derive_labor_share(tech.beta, tech.gamma)
        vals = base + scale_share_gradient(tech, grad) * u
    return float(vals) if np.isscalar(y) or y_arr.ndim == 0 else vals


def _phi_series(u: float, log_r: float) -> float:
    # phi = log(r) * (1/2 + u/12 - u**3/720 + u**5/30240 + O(u**7)),
    # u = (1 - xi) * log(r); coefficients checked against a 50-digit oracle.
    return log_r * (0.5 + u / 12.0 - u**3 / 720.0 + u**5 / 30240.0)


def weighting_factor(xi: float, r: float, method: str = "auto") -> float:
    """Weighting factor phi(xi, r) = E[y * ln(y/y_min)] / E[y] for the truncated Pareto.

    Strictly positive, increasing in r and decreasing in xi.  Evaluation paths:

    - ``direct``:  r**(1-xi)*ln(r)/(r**(1-xi) - 1) + 1/(xi - 1), the raw form;
    - ``compact``: (1 - h(s))/(xi - 1) with h(s) = s*ln(s)/(s - 1), s = r**(1-xi),
      evaluated through expm1;
    - ``series``:  expansion in u = (1-xi)*ln(r) around xi == 1, where both the
      compact numerator and denominator vanish;
    - ``auto``:    series inside |u| < 1e-4, compact elsewhere.
    """
    if not (math.isfinite(xi) and xi > 0.0):
        raise ValueError(f"xi must be positive, got {xi}")
    if not (math.isfinite(r) and r > 1.0):
        raise ValueError(f"r must exceed 1, got {r}")
    log_r = math.log(r)
    u = (1.0 - xi) * log_r

    if method == "direct":
        if xi == 1.0:
            raise SingularityError(
                "direct evaluation is 0/0 at xi == 1; use the series or auto method"
            )
        s = r ** (1.0 - xi)
        return s * log_r / (s - 1.0) + 1.0 / (xi - 1.0)
    if method == "series":
        return _phi_series(u, log_r)
    if method == "compact":
        if xi == 1.0:
            raise SingularityError(
                "compact evaluation is 0/0 at xi == 1; use the series or auto method"
            )
        h = math.exp(u) * u / math.expm1(u)  # h(s) = s*ln(s)/(s-1) at s = e**u
        return (1.0 - h) / (xi - 1.0)
    if method == "auto":
        if abs(u) < PHI_SERIES_BAND:
            return _phi_series(u, log_r)
        h = math.exp(u) * u / math.expm1(u)
        return (1.0 - h) / (xi - 1.0)
    raise ValueError(f"unknown method {method!r}")


def macro_labor_share(
    tech: MicroTechnology,
    grad: TechGradient,
    dist: TruncatedPareto,
    mode: str = "phi",
) -> float:
    """Aggregate (output-weighted) labor share LS + delta * phi(xi, r).

    ``mode="phi"`` uses the weighting factor; ``mode="exact"`` recomputes the
    same quantity as LS + delta * (E[y ln y]/E[y] - ln y_min) from distribution
    moments.  The two are algebraically identical and agree to ~1e-10.
    """
    base = derive_labor_share(tech.beta, tech.gamma)
    delta = scale_share_gradient(tech, grad)
    if mode == "phi":
        return base + delta * weighting_factor(dist.xi, dist.r)
    if mode == "exact":
        mean_log = dist.mean_log_weighted() / dist.moment(1.0) - math.log(dist.y_min)
        return base + delta * mean_log
    raise ValueError(f"unknown mode {mode!r}")


def derive_aggregate(
    tech: MicroTechnology, grad: TechGradient, dist: TruncatedPareto
) -> AggregateTechnology:
    """Bundle every derived macro object for one configuration."""
    theta = derive_theta(tech.beta, tech.gamma)
    base = derive_labor_share(tech.beta, tech.gamma)
    delta = scale_share_gradient(tech, grad)
    phi = weighting_factor(dist.xi, dist.r)
    return AggregateTechnology(
        theta=theta,
        tfp=derive_tfp(tech, dist),
        base_ls=base,
        delta=delta,
        phi=phi,
        macro_ls=base + delta * phi,
    )

"""Self-contained oracle suite: closed forms against quadrature, identities, fuzz.

Each check recomputes a library result through an independent route (adaptive
quadrature, brute-force double sums, Monte Carlo, finite differences) and
reports the observed discrepancy against a fixed tolerance.  The CLI `verify`
command runs all of them and fails on any miss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .aggregation import (
    MicroTechnology,
    TechGradient,
    aggregate_exact,
    derive_tfp,
    derive_theta,
    macro_labor_share,
    weighting_factor,
)
from .decomposition import melitz_polanec
from .distribution import TruncatedPareto, moment_quad
from .market_structure import gini
from .simulation import SyntheticSpec, gradient_for_delta, mc_verify_weighting

XI_GRID = (0.5, 0.892, 1.0, 1.2, 2.0, 3.0)
R_GRID = (2.0, 10.0, 100.0, 1e4)
MOMENT_ORDERS = (0.25, 0.469, 0.886, 1.0, 0.703, 1.329)
TECH_GRID = (
    MicroTechnology(0.703, 1.329),
    MicroTechnology(0.625, 1.181),
    MicroTechnology(0.781, 1.477),
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: str = ""


def _check(name, worst, tol, detail="") -> CheckResult:
    return CheckResult(name=name, passed=worst <= tol, worst=worst, tolerance=tol, detail=detail)


def check_pdf_normalization() -> CheckResult:
    worst = 0.0
    for xi in XI_GRID:
        for r in R_GRID:
            d = TruncatedPareto(xi, 1.0, r)
            total, _ = integrate.quad(d.pdf, d.y_min, d.y_max, epsabs=0.0, epsrel=1e-12, limit=200)
            worst = max(worst, abs(total - 1.0))
    return _check("pdf_normalization", worst, 1e-10)


def check_moments_vs_quadrature() -> CheckResult:
    worst = 0.0
    for xi in XI_GRID:
        for r in R_GRID:
            d = TruncatedPareto(xi, 1.0, r)
            for a in MOMENT_ORDERS + (xi + 5e-7, xi - 5e-7):
                reference = moment_quad(d, a)
                worst = max(worst, abs(d.moment(a) - reference) / reference)
    return _check("moments_vs_quadrature", worst, 1e-8)


def check_aggregation_identity() -> CheckResult:
    worst = 0.0
    for tech in TECH_GRID:
        theta = derive_theta(tech.beta, tech.gamma)
        for xi in XI_GRID:
            for r in R_GRID:
                d = TruncatedPareto(xi, 1.0, r)
                tfp = derive_tfp(tech, d)
                y, labor, capital = aggregate_exact(tech, d, 1000.0)
                err = abs(y - tfp * labor ** (1.0 - theta) * capital**theta) / y
                worst = max(worst, err)
    return _check("aggregation_identity_exact", worst, 1e-12)


def check_phi_properties() -> CheckResult:
    xi_grid = (0.3, 0.5, 0.892, 0.999, 1.001, 1.2, 2.0, 3.0)
    r_grid = (1.5, 2.0, 10.0, 100.0, 1e4)
    worst = 0.0  # worst violation margin; stays 0 when all properties hold
    h = 1e-6
    for xi in xi_grid:
        for r in r_grid:
            phi = weighting_factor(xi, r)
            worst = max(worst, -phi)  # positivity
            d_r = (weighting_factor(xi, r * (1 + h)) - weighting_factor(xi, r * (1 - h))) / (
                2 * r * h
            )
            worst = max(worst, -d_r)  # increasing in r
            d_xi = (weighting_factor(xi + h, r) - weighting_factor(xi - h, r)) / (2 * h)
            worst = max(worst, d_xi)  # decreasing in xi
    return _check("phi_positive_monotone", worst, 0.0)


def check_phi_paths() -> CheckResult:
    worst = 0.0
    for xi in (0.3, 0.5, 0.892, 1.2, 2.0, 3.0):
        for r in (1.5, 2.0, 10.0, 100.0, 1e4):
            direct = weighting_factor(xi, r, method="direct")
            compact = weighting_factor(xi, r, method="compact")
            worst = max(worst, abs(direct - compact) / abs(direct))
    return _check("phi_direct_vs_compact", worst, 1e-10)


def check_macro_share_routes() -> CheckResult:
    tech = MicroTechnology(0.703, 1.329)
    grad = gradient_for_delta(tech, -0.066)
    worst = 0.0
    for xi in (0.5, 0.892, 1.2, 2.0, 3.0):
        for r in (2.0, 10.0, 100.0, 1e4):
            d = TruncatedPareto(xi, 1.0, r)
            phi_form = macro_labor_share(tech, grad, d, mode="phi")
            exact_form = macro_labor_share(tech, grad, d, mode="exact")
            worst = max(worst, abs(phi_form - exact_form))
    return _check("macro_share_phi_vs_exact", worst, 1e-10)


def check_mp_fuzz(seed: int, trials: int = 200) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n1 = int(rng.integers(2, 20))
        n2 = int(rng.integers(2, 20))
        overlap = int(rng.integers(1, min(n1, n2) + 1))
        ids1 = [f"s{i}" for i in range(overlap)] + [f"x{i}" for i in range(n1 - overlap)]
        ids2 = [f"s{i}" for i in range(overlap)] + [f"e{i}" for i in range(n2 - overlap)]
        p1 = [(i, float(rng.uniform(0.1, 5.0)), float(rng.uniform(0.0, 1.0))) for i in ids1]
        p2 = [(i, float(rng.uniform(0.1, 5.0)), float(rng.uniform(0.0, 1.0))) for i in ids2]
        comp = melitz_polanec(p1, p2)
        gap = abs(comp.total_change - (comp.within + comp.between + comp.exit + comp.entry))
        worst = max(worst, gap)
    return _check("melitz_polanec_identity_fuzz", worst, 1e-12, detail=f"{trials} panels")


def check_gini_brute_force(seed: int, n: int = 300) -> CheckResult:
    rng = np.random.default_rng(seed)
    x = rng.pareto(1.5, n) + 0.01
    fast = gini(x)
    brute = float(np.abs(x[:, None] - x[None, :]).sum() / (2 * n * n * x.mean()))
    return _check("gini_sorted_vs_brute", abs(fast - brute), 1e-10)


def check_sampling_mean(seed: int, n: int = 100_000) -> CheckResult:
    d = TruncatedPareto(1.2, 1.0, 1e4)
    y = d.sample(n, np.random.default_rng(seed))
    mean = d.moment(1.0)
    se = math.sqrt((d.moment(2.0) - mean**2) / n)
    z = abs(float(y.mean()) - mean) / se
    return _check("sampling_mean_vs_moment", z, 4.0, detail=f"n={n}, z-score vs 4 SE")


def check_mc_weighting(seed: int, n: int = 200_000) -> CheckResult:
    tech = MicroTechnology(0.703, 1.329)
    spec = SyntheticSpec(
        dist=TruncatedPareto(2.0, 1.0, math.e),
        tech=tech,
        grad=gradient_for_delta(tech, -0.066),
        n_firms=n,
        seed=seed,
    )
    res = mc_verify_weighting(spec)
    return _check("mc_weighted_share_vs_phi", abs(res.z_score), 4.0, detail=f"n={n}")


def run_all_checks(seed: int = 0) -> list[CheckResult]:
    """Run every verification check; deterministic given the seed."""
    return [
        check_pdf_normalization(),
        check_moments_vs_quadrature(),
        check_aggregation_identity(),
        check_phi_properties(),
        check_phi_paths(),
        check_macro_share_routes(),
        check_mp_fuzz(seed),
        check_gini_brute_force(seed),
        check_sampling_mean(seed),
        check_mc_weighting(seed),
    ]

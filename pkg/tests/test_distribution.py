import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from firmshare.distribution import (
    SingularityError,
    TruncatedPareto,
    mean_log_weighted_quad,
    moment_quad,
)

XI_GRID = [0.5, 0.892, 1.0, 1.2, 2.0, 3.0]
R_GRID = [2.0, 10.0, 100.0, 1e4]


def quad_pdf_mass(d):
    total, _ = integrate.quad(d.pdf, d.y_min, d.y_max, epsabs=0.0, epsrel=1e-12, limit=200)
    return total


class TestConstruction:
    def test_derived_constants(self):
        d = TruncatedPareto(1.0, 1.0, 2.0)
        assert d.r == 2.0
        assert d.z == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize(
        "xi,y_min,y_max",
        [(0.0, 1.0, 2.0), (-1.0, 1.0, 2.0), (1.0, 0.0, 2.0), (1.0, 2.0, 2.0),
         (1.0, 2.0, 1.0), (math.nan, 1.0, 2.0), (1.0, 1.0, math.inf)],
    )
    def test_rejects_invalid_parameters(self, xi, y_min, y_max):
        with pytest.raises(ValueError):
            TruncatedPareto(xi, y_min, y_max)

    def test_z_in_unit_interval(self):
        for xi in XI_GRID:
            for r in R_GRID:
                d = TruncatedPareto(xi, 1.0, r)
                assert 0.0 < d.z < 1.0


class TestPdf:
    def test_hand_value_at_lower_edge(self):
        # Z = 1 - 1/2 = 0.5 by hand, so pdf(1) = 1 * 1 * 1 / 0.5
        assert TruncatedPareto(1.0, 1.0, 2.0).pdf(1.0) == pytest.approx(2.0, rel=1e-14)

    def test_zero_outside_support(self):
        d = TruncatedPareto(2.0, 1.0, 4.0)
        assert d.pdf(5.0) == 0.0
        assert d.pdf(0.5) == 0.0

    def test_array_input(self):
        d = TruncatedPareto(2.0, 1.0, 4.0)
        vals = d.pdf(np.array([0.5, 1.0, 2.0, 5.0]))
        assert vals.shape == (4,)
        assert vals[0] == 0.0 and vals[3] == 0.0
        assert vals[1] > vals[2] > 0.0

    @pytest.mark.parametrize("xi", XI_GRID)
    @pytest.mark.parametrize("r", R_GRID)
    def test_normalization(self, xi, r):
        d = TruncatedPareto(xi, 1.0, r)
        assert quad_pdf_mass(d) == pytest.approx(1.0, abs=1e-10)

    def test_normalization_with_scaled_support(self):
        d = TruncatedPareto(1.2, 3.7, 3.7 * 50.0)
        assert quad_pdf_mass(d) == pytest.approx(1.0, abs=1e-10)


class TestMoment:
    def test_mean_matches_quadrature_hand_case(self):
        d = TruncatedPareto(2.0, 1.0, 2.0)
        oracle = moment_quad(d, 1.0)
        assert oracle == pytest.approx(4.0 / 3.0, abs=1e-10)
        assert d.moment(1.0) == pytest.approx(oracle, rel=1e-10)

    def test_zeroth_moment_is_exactly_one(self):
        for xi in XI_GRID:
            assert TruncatedPareto(xi, 0.5, 700.0).moment(0.0) == 1.0

    def test_log_branch_at_a_equal_xi(self):
        d = TruncatedPareto(1.0, 1.0, math.e)
        expected = 1.0 / (1.0 - math.exp(-1.0))
        assert d.moment(1.0) == pytest.approx(expected, rel=1e-12)
        assert d.moment(1.0) == pytest.approx(moment_quad(d, 1.0), rel=1e-10)

    def test_nonfinite_order_rejected(self):
        d = TruncatedPareto(1.0, 1.0, 2.0)
        for bad in (math.nan, math.inf, -math.inf):
            with pytest.raises(ValueError):
                d.moment(bad)

    @pytest.mark.parametrize("xi", XI_GRID)
    @pytest.mark.parametrize("r", R_GRID)
    def test_agreement_with_quadrature_on_grid(self, xi, r):
        d = TruncatedPareto(xi, 1.0, r)
        orders = [0.25, 0.469, 0.886, 1.0, 0.703, 1.329, xi + 5e-7, xi - 5e-7]
        for a in orders:
            reference = moment_quad(d, a)
            assert abs(d.moment(a) - reference) / reference < 1e-8

    def test_continuity_across_singular_branch(self):
        # the a == xi branch and the expm1 path must join smoothly: the gap
        # can only be the true derivative (~ln r per unit of a), not blow-up
        d = TruncatedPareto(1.2, 1.0, 100.0)
        at_branch = d.moment(1.2)
        for eps in (1e-10, 1e-9, 1e-8, 1e-7, 1e-6):
            bound = 10.0 * math.log(d.r) * eps + 1e-12
            assert abs(d.moment(1.2 + eps) / at_branch - 1.0) < bound
            assert abs(d.moment(1.2 - eps) / at_branch - 1.0) < bound

    def test_y_min_scaling(self):
        # E[(c*y)**a] = c**a E[y**a] when the support scales by c
        base = TruncatedPareto(1.5, 1.0, 30.0)
        scaled = TruncatedPareto(1.5, 7.0, 210.0)
        for a in (0.3, 1.0, 2.0):
            assert scaled.moment(a) == pytest.approx(7.0**a * base.moment(a), rel=1e-13)


class TestMeanLogWeighted:
    def test_matches_quadrature(self):
        d = TruncatedPareto(2.0, 1.0, 2.0)
        assert d.mean_log_weighted() == pytest.approx(mean_log_weighted_quad(d), abs=1e-10)

    @pytest.mark.parametrize("xi", [0.5, 0.892, 1.2, 2.0, 3.0])
    @pytest.mark.parametrize("r", R_GRID)
    def test_matches_quadrature_on_grid(self, xi, r):
        d = TruncatedPareto(xi, 1.0, r)
        reference = mean_log_weighted_quad(d)
        assert d.mean_log_weighted() == pytest.approx(reference, rel=1e-9)

    def test_nonunit_y_min(self):
        d = TruncatedPareto(1.7, 3.0, 90.0)
        assert d.mean_log_weighted() == pytest.approx(mean_log_weighted_quad(d), rel=1e-9)

    def test_degenerate_support_collapses_to_zero(self):
        d = TruncatedPareto(2.0, 1.0, 1.0 + 1e-9)
        assert abs(d.mean_log_weighted()) < 1e-8

    def test_singularity_at_xi_one(self):
        d = TruncatedPareto(1.0, 1.0, 10.0)
        with pytest.raises(SingularityError):
            d.mean_log_weighted()
        # quadrature fallback stays available and consistent with nearby shapes
        near = TruncatedPareto(1.0 + 1e-7, 1.0, 10.0)
        assert mean_log_weighted_quad(d) == pytest.approx(near.mean_log_weighted(), rel=1e-5)

    @pytest.mark.parametrize("xi", [0.5, 0.892, 1.2, 2.0])
    @pytest.mark.parametrize("r", [2.0, 100.0])
    def test_log_ratio_nonnegative(self, xi, r):
        # E[y ln(y/y_min)] >= 0 because ln(y/y_min) >= 0 on the support
        for y_min in (0.5, 1.0, 4.0):
            d = TruncatedPareto(xi, y_min, y_min * r)
            ratio = d.mean_log_weighted() / d.moment(1.0) - math.log(y_min)
            assert ratio >= 0.0


def bisect_cdf(d, target, lo, hi, tol=1e-13):
    # independent inverse of the CDF for checking quantile()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if d.cdf(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, lo):
            break
    return 0.5 * (lo + hi)


class TestQuantileAndCdf:
    def test_support_edges(self):
        d = TruncatedPareto(1.0, 1.0, 2.0)
        assert d.quantile(0.0) == pytest.approx(1.0, rel=1e-12)
        assert d.quantile(1.0) == pytest.approx(2.0, rel=1e-12)

    def test_median_hand_value_against_bisection(self):
        d = TruncatedPareto(1.0, 1.0, 2.0)
        oracle = bisect_cdf(d, 0.5, d.y_min, d.y_max)
        assert oracle == pytest.approx(4.0 / 3.0, rel=1e-10)
        assert d.quantile(0.5) == pytest.approx(oracle, rel=1e-10)

    def test_domain_errors(self):
        d = TruncatedPareto(1.0, 1.0, 2.0)
        for bad in (-0.1, 1.1, math.nan):
            with pytest.raises(ValueError):
                d.quantile(bad)

    def test_cdf_clamps_outside_support(self):
        d = TruncatedPareto(1.3, 1.0, 9.0)
        assert d.cdf(0.5) == 0.0
        assert d.cdf(20.0) == 1.0

    @pytest.mark.parametrize("xi", XI_GRID)
    def test_roundtrip_on_interior(self, xi):
        # interior = probability mass representably away from u == 1, where
        # the roundtrip stops being information-preserving in any float64 code
        d = TruncatedPareto(xi, 1.0, 1e3)
        ys = np.geomspace(1.0 + 1e-6, d.quantile(1.0 - 1e-6), 25)
        back = d.quantile(d.cdf(ys))
        np.testing.assert_allclose(back, ys, rtol=1e-10)

    @given(
        xi=st.floats(0.1, 5.0),
        log_r=st.floats(0.01, 12.0),
        u=st.floats(1e-6, 1.0 - 1e-6),
    )
    @settings(max_examples=60, deadline=None)
    def test_roundtrip_property(self, xi, log_r, u):
        d = TruncatedPareto(xi, 1.0, math.exp(log_r))
        y = d.quantile(u)
        assert d.y_min <= y <= d.y_max
        assert d.cdf(y) == pytest.approx(u, abs=1e-9)


class TestSampling:
    def test_values_inside_support(self):
        d = TruncatedPareto(0.892, 1.0, 1e4)
        y = d.sample(10_000, 7)
        assert y.min() >= d.y_min and y.max() <= d.y_max

    def test_deterministic_given_seed(self):
        d = TruncatedPareto(1.2, 1.0, 100.0)
        a = d.sample(1000, 42)
        b = d.sample(1000, 42)
        assert a.tobytes() == b.tobytes()

    def test_generator_state_is_respected(self):
        d = TruncatedPareto(1.2, 1.0, 100.0)
        gen = np.random.default_rng(5)
        first = d.sample(10, gen)
        second = d.sample(10, gen)
        assert not np.array_equal(first, second)

    def test_mean_within_four_standard_errors(self):
        d = TruncatedPareto(1.2, 1.0, 1e4)
        n = 1_000_000
        y = d.sample(n, 2024)
        mean = d.moment(1.0)
        se = math.sqrt((d.moment(2.0) - mean**2) / n)
        assert abs(y.mean() - mean) < 4 * se

    def test_negative_size_rejected(self):
        with pytest.raises(ValueError):
            TruncatedPareto(1.0, 1.0, 2.0).sample(-1, 0)

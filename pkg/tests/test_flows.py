"""Flow layer tests against independent numerical oracles.

Oracles: scipy's erf-based normal CDF for the mixture CDF, trapezoid
quadrature for density normalization, and central finite differences for
the pdf/cdf consistency of the composed map.
"""

import math

import numpy as np
import pytest
from scipy.special import erf

from nfdrl import flows
from nfdrl.flows import (
    ConvergenceError,
    MixtureFlowParams,
    OutOfSupportError,
)


def random_params(rng, n_components=None):
    # scales are kept >= 0.3 so the mixture pdf stays above the float64
    # underflow threshold everywhere the tests evaluate it
    n = n_components or int(rng.integers(1, 6))
    w = rng.dirichlet(np.ones(n))
    mu = rng.uniform(-2.0, 2.0, size=n)
    sig = rng.uniform(0.3, 2.0, size=n)
    g = float(rng.uniform(0.5, 6.0))
    return MixtureFlowParams(weights=w / w.sum(), means=mu, scales=sig, g_max=g)


def normal_cdf_oracle(x):
    return 0.5 * (1.0 + erf(np.asarray(x) / math.sqrt(2.0)))


class TestParamsValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            MixtureFlowParams(weights=np.array([0.5, 0.4]),
                              means=np.zeros(2), scales=np.ones(2), g_max=1.0)

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            MixtureFlowParams(weights=np.array([1.5, -0.5]),
                              means=np.zeros(2), scales=np.ones(2), g_max=1.0)

    def test_scale_floor_enforced(self):
        with pytest.raises(ValueError):
            MixtureFlowParams(weights=np.array([1.0]), means=np.zeros(1),
                              scales=np.array([1e-5]), g_max=1.0)

    def test_g_max_must_be_positive(self):
        for bad in (0.0, -1.0, math.inf, math.nan):
            with pytest.raises(ValueError):
                MixtureFlowParams(weights=np.array([1.0]), means=np.zeros(1),
                                  scales=np.ones(1), g_max=bad)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            MixtureFlowParams(weights=np.array([1.0]), means=np.zeros(2),
                              scales=np.ones(2), g_max=1.0)


class TestMixtureCdf:
    def test_matches_erf_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            params = random_params(rng)
            z = rng.uniform(-6.0, 6.0, size=40)
            t = (z[:, None] - params.means) / params.scales
            expected = normal_cdf_oracle(t) @ params.weights
            np.testing.assert_allclose(flows.mixture_cdf(params, z), expected,
                                       rtol=0, atol=1e-13)

    def test_monotone_increasing(self):
        rng = np.random.default_rng(1)
        params = random_params(rng)
        z = np.linspace(-8.0, 8.0, 500)
        assert np.all(np.diff(flows.mixture_cdf(params, z)) > 0)

    def test_limits(self):
        rng = np.random.default_rng(2)
        params = random_params(rng)
        assert flows.mixture_cdf(params, -40.0) == pytest.approx(0.0, abs=1e-12)
        assert flows.mixture_cdf(params, 40.0) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_non_finite_z(self):
        rng = np.random.default_rng(3)
        params = random_params(rng)
        with pytest.raises(ValueError):
            flows.mixture_cdf(params, np.array([0.0, np.nan]))


class TestMixturePdf:
    def test_is_derivative_of_cdf(self):
        rng = np.random.default_rng(4)
        eps = 1e-6
        for _ in range(20):
            params = random_params(rng)
            z = rng.uniform(-4.0, 4.0, size=20)
            fd = (flows.mixture_cdf(params, z + eps)
                  - flows.mixture_cdf(params, z - eps)) / (2 * eps)
            np.testing.assert_allclose(flows.mixture_pdf(params, z), fd,
                                       rtol=1e-6, atol=1e-9)


class TestForwardMap:
    def test_output_inside_open_support(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            params = random_params(rng)
            y, _ = flows.forward_map(params, rng.standard_normal(100))
            assert np.all(np.abs(y) < params.g_max)

    def test_density_normalizes(self):
        # change-of-variables density integrates to 1 over the support;
        # quadrature nodes are the mapped z-grid so they concentrate where
        # the density does
        rng = np.random.default_rng(6)
        for _ in range(20):
            params = random_params(rng)
            z = np.linspace(-6.0, 6.0, 10_000)
            y, ld = flows.forward_map(params, z)
            assert np.trapezoid(np.exp(ld), y) == pytest.approx(1.0, abs=1e-3)

    def test_log_density_matches_change_of_variables_fd(self):
        # p(y(z)) = base(z) / |dy/dz|, with dy/dz by central differences
        rng = np.random.default_rng(7)
        eps = 1e-6
        for _ in range(20):
            params = random_params(rng)
            z = rng.uniform(-3.0, 3.0, size=10)
            _, ld = flows.forward_map(params, z)
            yp = flows.forward_map(params, z + eps)[0]
            ym = flows.forward_map(params, z - eps)[0]
            dydz = (yp - ym) / (2 * eps)
            expected = flows.base_log_density(z) - np.log(dydz)
            np.testing.assert_allclose(ld, expected, rtol=1e-5, atol=1e-8)

    def test_forward_sample_consistency(self):
        rng = np.random.default_rng(8)
        params = random_params(rng)
        s = flows.forward_sample(params, 0.37)
        y, ld = flows.forward_map(params, 0.37)
        assert s.y == pytest.approx(float(y))
        assert s.log_density == pytest.approx(float(ld))

    def test_monte_carlo_mean_matches_quadrature(self):
        rng = np.random.default_rng(9)
        params = random_params(rng, n_components=3)
        z = rng.standard_normal(200_000)
        mc_mean = flows.forward_map(params, z)[0].mean()
        g = params.g_max
        grid = np.linspace(-g * (1 - 1e-9), g * (1 - 1e-9), 20_000)
        quad_mean = np.trapezoid(grid * flows.density_at(params, grid), grid)
        assert mc_mean == pytest.approx(quad_mean, abs=0.02 * g)


class TestInversion:
    def test_round_trip(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            params = random_params(rng)
            z = rng.uniform(-4.0, 4.0)
            y = float(flows.forward_map(params, z)[0])
            z_back = flows.invert_flow(params, y)
            y_back = float(flows.forward_map(params, z_back)[0])
            assert abs(y_back - y) <= 1e-8

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(11)
        params = random_params(rng)
        y = rng.uniform(-0.8 * params.g_max, 0.8 * params.g_max, size=20)
        batch = flows.invert_flow_batch(params, y)
        scalar = np.array([flows.invert_flow(params, float(v)) for v in y])
        yb = flows.forward_map(params, batch)[0]
        ys = flows.forward_map(params, scalar)[0]
        np.testing.assert_allclose(yb, ys, atol=1e-8)

    def test_out_of_support_raises(self):
        rng = np.random.default_rng(12)
        params = random_params(rng)
        for bad in (params.g_max, -params.g_max, params.g_max + 1.0):
            with pytest.raises(OutOfSupportError):
                flows.invert_flow(params, bad)
        with pytest.raises(OutOfSupportError):
            flows.invert_flow_batch(params, np.array([0.0, params.g_max]))

    def test_extreme_quantile_converges_or_raises(self):
        # a y pinned extremely close to the boundary must either resolve or
        # raise ConvergenceError, never loop forever or return garbage
        params = MixtureFlowParams(weights=np.array([1.0]), means=np.zeros(1),
                                   scales=np.ones(1), g_max=1.0)
        y = 1.0 - 1e-15
        try:
            z = flows.invert_flow(params, y)
            assert np.isfinite(z)
        except ConvergenceError:
            pass


class TestDensityAt:
    def test_zero_outside_support(self):
        rng = np.random.default_rng(13)
        params = random_params(rng)
        g = params.g_max
        out = flows.density_at(params, np.array([-2 * g, 2 * g, g, -g]))
        np.testing.assert_array_equal(out, 0.0)

    def test_scalar_shape(self):
        rng = np.random.default_rng(14)
        params = random_params(rng)
        val = flows.density_at(params, 0.0)
        assert isinstance(val, float) and val > 0

    def test_matches_histogram(self):
        rng = np.random.default_rng(15)
        params = random_params(rng, n_components=2)
        y = flows.forward_map(params, rng.standard_normal(400_000))[0]
        hist, edges = np.histogram(y, bins=60, density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])
        dens = flows.density_at(params, centers)
        mask = hist > 0.05
        np.testing.assert_allclose(dens[mask], hist[mask], rtol=0.15, atol=0.02)

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from qbsde.driver import (TruncationPolicy, TruncationWarning, clamp_weights, project_ball, quadratic_driver,
                          stability_diagnostic, truncate_driver, truncation_radius)


class TestRadius:
    def test_simple(self):
        assert truncation_radius(1.0, 3.0) == 1.0

    def test_quadratic_a5(self):
        assert truncation_radius(2.5, 10.0) == 1.5

    def test_degenerate_warns(self):
        with pytest.warns(TruncationWarning):
            assert truncation_radius(2.5, 2.0) == 0.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            truncation_radius(0.0, 1.0)


class TestTruncatedDriver:
    def test_inside_ball_unchanged(self):
        f = truncate_driver(quadratic_driver(5.0), 1.0)
        z = np.array([[0.3, 0.4]])
        assert f(np.zeros((1, 2)), np.zeros(1), z)[0] == pytest.approx(2.5 * 0.25)

    def test_outside_ball_projected(self):
        f = truncate_driver(quadratic_driver(5.0), 1.0)
        z = np.array([[0.0, 4.0]])
        assert f(np.zeros((1, 2)), np.zeros(1), z)[0] == pytest.approx(2.5)

    def test_inherits_constants(self):
        base = quadratic_driver(2.0, c_y=0.5, phi=np.sin, phi_bound=1.0, phi_lipschitz=1.0)
        f = truncate_driver(base, 2.0)
        assert (f.lipschitz_Ky, f.lipschitz_Kx, f.local_lipschitz_L) == (0.5, 1.0, 1.0)
        assert f.z_radius == 2.0 and not f.y_independent

    def test_lipschitz_ratio_sampled(self):
        rng = np.random.default_rng(11)
        L, N = 2.5, 10.0
        r = truncation_radius(L, N)
        f = truncate_driver(quadratic_driver(5.0), r)
        x, y = np.zeros((10_000, 3)), np.zeros(10_000)
        z1 = rng.normal(scale=2.0, size=(10_000, 3))
        z2 = z1 + rng.normal(scale=0.5, size=(10_000, 3))
        ratio = np.abs(f(x, y, z1) - f(x, y, z2)) / np.linalg.norm(z1 - z2, axis=1)
        assert ratio.max() <= L * (1 + 2 * r) + 1e-9
        assert f.z_lipschitz == pytest.approx(N)

    @settings(max_examples=100, deadline=None)
    @given(z=st.lists(st.floats(-5, 5), min_size=3, max_size=3), r=st.floats(0.0, 4.0))
    def test_equal_to_raw_inside_ball(self, z, r):
        raw = quadratic_driver(3.0)
        f = truncate_driver(raw, r)
        z = np.array([z])
        args = (np.zeros((1, 3)), np.zeros(1))
        if np.linalg.norm(z) <= r:
            assert f(*args, z)[0] == raw(*args, z)[0]
        assert np.linalg.norm(project_ball(z, r)) <= r + 1e-12

    def test_growth_and_local_lipschitz_bounds(self):
        rng = np.random.default_rng(5)
        f = quadratic_driver(4.0, c_y=1.0, phi=lambda x: np.cos(x[..., 0]), phi_bound=1.0)
        L = f.local_lipschitz_L
        x, y = rng.normal(size=(5000, 2)), rng.normal(size=5000)
        z, z2 = rng.normal(scale=3, size=(5000, 2)), rng.normal(scale=3, size=(5000, 2))
        nz, nz2 = np.linalg.norm(z, axis=1), np.linalg.norm(z2, axis=1)
        assert np.all(np.abs(f(x, y, z)) <= L * (1 + np.abs(y) + nz**2) + 1e-12)
        diff = np.abs(f(x, y, z) - f(x, y, z2))
        assert np.all(diff <= L * (1 + nz + nz2) * np.linalg.norm(z - z2, axis=1) + 1e-12)


class TestClamp:
    def test_zero(self):
        np.testing.assert_array_equal(clamp_weights(np.zeros(3), 1.0, 0.1), np.zeros(3))

    def test_clamps(self):
        assert clamp_weights(np.array([3.5]), 2.0, 1.0)[0] == 2.0
        assert clamp_weights(np.array([-3.5]), 2.0, 1.0)[0] == -2.0

    @settings(max_examples=100, deadline=None)
    @given(v=st.lists(st.floats(-100, 100), min_size=1, max_size=4), R=st.floats(0.01, 5), h=st.floats(0.001, 1))
    def test_box_properties(self, v, R, h):
        v = np.array(v)
        out = clamp_weights(v, R, h)
        bound = R / math.sqrt(h)
        assert np.all(np.abs(out) <= bound)
        inside = np.abs(v) <= bound
        np.testing.assert_array_equal(out[inside], v[inside])

    def test_tail_expectation_at_two(self):
        # E|clamp(Z) - Z| = 2[phi(R) - R(1 - Phi(R))], R = 2, h = 1
        analytic = 2 * (norm.pdf(2.0) - 2.0 * norm.sf(2.0))
        assert analytic == pytest.approx(0.01698, abs=5e-6)

        def gap(z):
            return abs(clamp_weights(np.array([z]), 2.0, 1.0)[0] - z) * norm.pdf(z)

        numeric = sum(quad(gap, lo, hi, limit=200)[0] for lo, hi in [(-np.inf, -2.0), (-2.0, 2.0), (2.0, np.inf)])
        assert numeric == pytest.approx(analytic, abs=1e-10)


class TestPolicy:
    def test_adaptive_levels(self):
        N, R = TruncationPolicy("adaptive", 0.25).levels(16)
        assert N == pytest.approx(2.0) and R == pytest.approx(math.log(16))

    def test_none(self):
        pol = TruncationPolicy("none")
        assert pol.levels(10) == (math.inf, math.inf) and not pol.truncated
        assert math.isinf(pol.radius(10, 2.5))

    def test_fixed_requires_levels(self):
        with pytest.raises(ValueError):
            TruncationPolicy("fixed")
        assert TruncationPolicy("fixed", N=2.0, R=1.0).levels(7) == (2.0, 1.0)

    def test_radius_rules(self):
        assert TruncationPolicy("adaptive", 0.5).radius(100, 2.5) == pytest.approx(10.0)
        assert TruncationPolicy("adaptive", 0.5, radius_rule="lipschitz").radius(100, 2.5) == pytest.approx(1.5)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            TruncationPolicy("sometimes")

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(1, 10_000), k=st.integers(1, 1000), alpha=st.floats(0.0, 0.5))
    def test_monotone_in_n(self, n, k, alpha):
        pol = TruncationPolicy("adaptive", alpha)
        N1, R1 = pol.levels(n)
        N2, R2 = pol.levels(n + k)
        assert N2 >= N1 and R2 >= R1


class TestStability:
    def test_value_formula(self):
        rep = stability_diagnostic(20, 0.05, 1.0, 1.0, 0.5, 1, radius=1.0)
        assert rep.value == pytest.approx(math.sqrt(0.05) * 1.5)
        assert rep.status == "stable"

    def test_adaptive_quarter_at_250(self):
        # sqrt(h) R N with the radius certifying N: 0.0632 * 5.52 * 3.98
        n = 250
        rep = stability_diagnostic(n, 1 / n, math.log(n), n**0.25, 2.5, 1)
        assert rep.value == pytest.approx(math.sqrt(1 / n) * math.log(n) * n**0.25, rel=1e-12)
        assert rep.status == "violated"

    def test_untruncated_is_unverifiable(self):
        rep = stability_diagnostic(12, 1 / 12, math.inf, math.inf, 2.5, 3)
        assert rep.status == "unverifiable" and not rep.stable

    def test_five_eighths_small_n_violated(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            rep = stability_diagnostic(4, 0.25, math.log(4), 4**0.625, 2.5, 1)
        assert rep.status == "violated"

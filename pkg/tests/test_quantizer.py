import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from qbsde.quantizer import (DegenerateFitError, GridError, QuantizerConvergenceError, build_gaussian_grid_1d,
                             gaussian_grid, grid_distortion_rate, load_grid, nearest_node, product_grid,
                             save_grid, stationarity_residual)


def quad_cells(points):
    """Cell probability, centroid and distortion by adaptive quadrature (independent of cell_moments)."""
    edges = np.concatenate([[-np.inf], 0.5 * (points[1:] + points[:-1]), [np.inf]])
    prob, cent, dist = [], [], 0.0
    for p, lo, hi in zip(points, edges[:-1], edges[1:]):
        m0 = quad(norm.pdf, lo, hi, epsabs=1e-14, epsrel=1e-13)[0]
        m1 = quad(lambda z: z * norm.pdf(z), lo, hi, epsabs=1e-14, epsrel=1e-13)[0]
        dist += quad(lambda z: (z - p) ** 2 * norm.pdf(z), lo, hi, epsabs=1e-14, epsrel=1e-13)[0]
        prob.append(m0)
        cent.append(m1 / m0)
    return np.array(prob), np.array(cent), dist


class TestBuild1D:
    def test_single_point(self):
        g = build_gaussian_grid_1d(1)
        assert g.points.tolist() == [0.0]
        assert g.weights.tolist() == [1.0]
        assert g.distortion == pytest.approx(1.0, abs=1e-14)

    def test_two_points_are_half_normal_means(self):
        g = build_gaussian_grid_1d(2)
        c = math.sqrt(2.0 / math.pi)
        np.testing.assert_allclose(g.points, [-c, c], atol=1e-12)
        np.testing.assert_allclose(g.weights, [0.5, 0.5], atol=1e-15)
        assert g.distortion == pytest.approx(1.0 - 2.0 / math.pi, abs=1e-12)

    @pytest.mark.parametrize("M", [3, 5, 8, 17])
    def test_matches_quadrature_oracle(self, M):
        g = build_gaussian_grid_1d(M)
        prob, cent, dist = quad_cells(g.points)
        np.testing.assert_allclose(g.weights, prob, atol=1e-11)
        np.testing.assert_allclose(g.points, cent, atol=1e-9)
        assert g.distortion == pytest.approx(dist, abs=1e-11)

    def test_three_point_grid_against_published_table(self):
        # classical three-level Gaussian quantizer: levels 0, +-1.2240, distortion 0.1902
        g = build_gaussian_grid_1d(3)
        np.testing.assert_allclose(g.points, [-1.2240, 0.0, 1.2240], atol=5e-5)
        assert g.distortion == pytest.approx(0.1902, abs=5e-5)

    @pytest.mark.parametrize("M", [1, 2, 3, 8, 33, 100, 256, 512])
    def test_invariants(self, M):
        g = build_gaussian_grid_1d(M)
        g.check()
        assert abs(g.weights.sum() - 1.0) <= 1e-12
        assert stationarity_residual(g.points) < 1e-9

    def test_distortion_decreases(self):
        d = [build_gaussian_grid_1d(M).distortion for M in (1, 2, 4, 8, 16, 32)]
        assert all(b < a for a, b in zip(d, d[1:]))

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            build_gaussian_grid_1d(0)
        with pytest.raises(ValueError):
            build_gaussian_grid_1d(4, tol=0.0)

    def test_non_convergence_is_reported(self):
        with pytest.raises(QuantizerConvergenceError, match="max_iters|iterations"):
            build_gaussian_grid_1d(64, tol=1e-12, max_iters=3)


class TestProductGrid:
    def test_dimension_one_is_base(self):
        base = build_gaussian_grid_1d(5)
        g = product_grid(base, 1)
        np.testing.assert_array_equal(g.nodes[:, 0], base.points)
        np.testing.assert_array_equal(g.weights, base.weights)

    def test_two_by_two(self):
        g = product_grid(build_gaussian_grid_1d(2), 2)
        c = math.sqrt(2.0 / math.pi)
        assert sorted(map(tuple, np.round(g.nodes / c, 12))) == [(-1, -1), (-1, 1), (1, -1), (1, 1)]
        np.testing.assert_allclose(g.weights, 0.25, atol=1e-16)

    def test_second_moment_identity(self):
        # E|Zhat|^2 = d (1 - distortion_1D) for a stationary product grid
        base = build_gaussian_grid_1d(2)
        g = product_grid(base, 3)
        m2 = np.sum(g.weights * np.sum(g.nodes**2, axis=1))
        assert m2 == pytest.approx(3.0 * (1.0 - base.distortion), abs=1e-12)
        assert m2 == pytest.approx(3.0 * 2.0 / math.pi, abs=1e-12)
        assert g.distortion == pytest.approx(3.0 * base.distortion)

    def test_node_count_guard(self):
        with pytest.raises(MemoryError, match="nodes"):
            product_grid(build_gaussian_grid_1d(100), 3, max_nodes=1000)

    def test_gaussian_grid_rounds_per_axis(self):
        g = gaussian_grid(100, 3)
        assert g.per_dim_points == 5 and g.size == 125
        assert gaussian_grid(100, 2).per_dim_points == 10

    @settings(max_examples=30, deadline=None)
    @given(m=st.integers(1, 7), d=st.integers(1, 3), flips=st.lists(st.booleans(), min_size=3, max_size=3))
    def test_sign_flip_symmetry_and_centering(self, m, d, flips):
        g = product_grid(build_gaussian_grid_1d(m), d)
        s = np.where(np.array(flips[:d]), -1.0, 1.0)
        lookup = {tuple(np.round(x, 12)): w for x, w in zip(g.nodes, g.weights)}
        for x, w in zip(g.nodes, g.weights):
            assert abs(lookup[tuple(np.round(s * x, 12))] - w) <= 1e-15
        assert np.max(np.abs(g.weights @ g.nodes)) <= 1e-12
        assert abs(g.weights.sum() - 1.0) <= 1e-12


class TestRate:
    def test_one_dimensional_slope(self):
        slope = grid_distortion_rate(1, [8, 16, 32, 64, 128, 256])
        assert -2.3 <= slope <= -1.7

    def test_two_dimensional_slope(self):
        slope = grid_distortion_rate(2, [2, 4, 8, 16])
        assert slope == pytest.approx(-1.0, abs=0.15)

    def test_degenerate(self):
        with pytest.raises(DegenerateFitError):
            grid_distortion_rate(1, [4, 4, 4])

    def test_needs_three_sizes(self):
        with pytest.raises(ValueError):
            grid_distortion_rate(1, [4, 8])


class TestNearestNode:
    def test_maps_to_cell_point(self):
        g = build_gaussian_grid_1d(4)
        z = np.array([-5.0, -0.01, 0.01, 0.5, 5.0])
        out = nearest_node(g.points, z)
        expected = [g.points[np.argmin(np.abs(g.points - v))] for v in z]
        np.testing.assert_array_equal(out, expected)


class TestGridFiles:
    def test_round_trip_is_exact(self, tmp_path):
        g = build_gaussian_grid_1d(2)
        save_grid(g, tmp_path / "g.txt")
        back = load_grid(tmp_path / "g.txt")
        np.testing.assert_array_equal(back.points, g.points)
        np.testing.assert_array_equal(back.weights, g.weights)

    def test_round_trip_product_grid(self, tmp_path):
        g = gaussian_grid(27, 3)
        save_grid(g, tmp_path / "g.txt")
        back = load_grid(tmp_path / "g.txt")
        np.testing.assert_array_equal(back.nodes, g.nodes)
        np.testing.assert_array_equal(back.weights, g.weights)
        assert back.per_dim_points == 3

    def test_header_format(self, tmp_path):
        save_grid(build_gaussian_grid_1d(3), tmp_path / "g.txt")
        lines = (tmp_path / "g.txt").read_text().splitlines()
        assert lines[0] == "3 1" and len(lines) == 4

    def test_truncated_file_names_missing_row(self, tmp_path):
        save_grid(build_gaussian_grid_1d(4), tmp_path / "g.txt")
        lines = (tmp_path / "g.txt").read_text().splitlines()
        (tmp_path / "g.txt").write_text("\n".join(lines[:3]) + "\n")
        with pytest.raises(GridError, match="missing row 3"):
            load_grid(tmp_path / "g.txt")

    def test_bad_weight_sum(self, tmp_path):
        (tmp_path / "g.txt").write_text("2 1\n-0.5 0.45\n0.5 0.45\n")
        with pytest.raises(GridError, match="sum"):
            load_grid(tmp_path / "g.txt")

    def test_wrong_field_count(self, tmp_path):
        (tmp_path / "g.txt").write_text("2 1\n-0.5 0.5 1\n0.5 0.5\n")
        with pytest.raises(GridError, match="row 1"):
            load_grid(tmp_path / "g.txt")

"""Optimal quantization grids for the standard Gaussian.

One-dimensional grids are Lloyd fixed points computed with exact Gaussian
cell moments; d-dimensional grids are Cartesian products of a 1-D grid.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import ndtr, ndtri

log = logging.getLogger(__name__)

_SQRT_2PI = np.sqrt(2.0 * np.pi)


class GridError(ValueError):
    """Raised for malformed grid files or grids violating their invariants."""


class QuantizerConvergenceError(RuntimeError):
    pass


class DegenerateFitError(ValueError):
    pass


def _pdf(x):
    with np.errstate(over="ignore"):
        return np.exp(-0.5 * np.square(x)) / _SQRT_2PI


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class QuantGrid1D:
    points: np.ndarray
    weights: np.ndarray
    distortion: float

    @property
    def size(self) -> int:
        return len(self.points)

    def check(self, atol: float = 1e-10) -> None:
        """Raise GridError if any structural invariant fails."""
        p, w = self.points, self.weights
        if p.ndim != 1 or p.shape != w.shape or p.size == 0:
            raise GridError("points and weights must be equal-length 1-D arrays")
        if abs(w.sum() - 1.0) > 1e-12:
            raise GridError(f"weights sum to {w.sum():.17g}, expected 1")
        if np.any(w <= 0):
            raise GridError("weights must be strictly positive")
        if np.any(np.diff(p) <= 0):
            raise GridError("points must be strictly increasing")
        if np.max(np.abs(p + p[::-1])) > atol or np.max(np.abs(w - w[::-1])) > atol:
            raise GridError("grid is not symmetric about 0")


@dataclass(frozen=True)
class QuantGridD:
    dim: int
    nodes: np.ndarray  # (m**dim, dim), row-major over the 1-D index tuple
    weights: np.ndarray
    per_dim_points: int
    base: QuantGrid1D

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def distortion(self) -> float:
        return self.dim * self.base.distortion

    def check(self) -> None:
        if self.nodes.shape != (self.per_dim_points**self.dim, self.dim):
            raise GridError(f"expected {self.per_dim_points**self.dim} nodes of dim {self.dim}")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise GridError(f"weights sum to {self.weights.sum():.17g}, expected 1")
        if np.any(self.weights <= 0):
            raise GridError("weights must be strictly positive")
        self.base.check()


def cell_moments(points: np.ndarray):
    """Probability, first and second raw moment of N(0,1) on each Voronoi cell."""
    points = np.asarray(points, dtype=float)
    edges = np.concatenate([[-np.inf], 0.5 * (points[1:] + points[:-1]), [np.inf]])
    lo, hi = edges[:-1], edges[1:]
    # difference of survival functions in the upper half keeps tail cells accurate
    upper = lo >= 0
    prob = np.where(upper, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))
    phi_lo, phi_hi = _pdf(lo), _pdf(hi)
    first = phi_lo - phi_hi
    with np.errstate(invalid="ignore"):
        lo_term = np.where(np.isfinite(lo), lo * phi_lo, 0.0)
        hi_term = np.where(np.isfinite(hi), hi * phi_hi, 0.0)
    second = prob + lo_term - hi_term
    return prob, first, second, edges


def stationarity_residual(points: np.ndarray) -> float:
    """max |point - E[Z | Z in its Voronoi cell]|."""
    prob, first, _, _ = cell_moments(points)
    return float(np.max(np.abs(first / prob - points)))


def _distortion(points, prob, first, second) -> float:
    return float(np.sum(second - 2.0 * points * first + points**2 * prob))


def _newton_polish(p: np.ndarray) -> np.ndarray:
    # F(p) = p - centroid(p); the Jacobian is tridiagonal.
    prob, first, _, edges = cell_moments(p)
    c = first / prob
    lo, hi = edges[:-1], edges[1:]
    with np.errstate(invalid="ignore"):
        dc_dlo = np.where(np.isfinite(lo), _pdf(lo) * (c - lo) / prob, 0.0)
        dc_dhi = np.where(np.isfinite(hi), _pdf(hi) * (hi - c) / prob, 0.0)
    m = len(p)
    ab = np.zeros((3, m))
    ab[1] = 1.0 - 0.5 * (dc_dlo + dc_dhi)
    ab[0, 1:] = -0.5 * dc_dhi[:-1]
    ab[2, :-1] = -0.5 * dc_dlo[1:]
    return p - solve_banded((1, 1), ab, p - c)


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p - p[::-1])


@functools.lru_cache(maxsize=64)
def build_gaussian_grid_1d(M: int, tol: float = 1e-12, max_iters: int = 100_000) -> QuantGrid1D:
    """Stationary M-point quantizer of N(0, 1).

    Lloyd iterations start from the equiprobable quantiles; once the point
    movement drops below 1e-3 the fixed point is finished with Newton steps
    on ``p - centroid(p) = 0``. Converged when the movement is below `tol`.

    Raises
    ------
    QuantizerConvergenceError
        If `max_iters` iterations do not reach `tol`.
    """
    if not isinstance(M, (int, np.integer)) or M < 1:
        raise ValueError(f"M must be a positive integer, got {M!r}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = int(M)
    if M == 1:
        p = np.zeros(1)
    else:
        p = _symmetrize(ndtri((np.arange(M) + 0.5) / M))
        move = np.inf
        it = 0
        while it < max_iters:
            it += 1
            if move > 1e-3:
                prob, first, _, _ = cell_moments(p)
                new = first / prob
            else:
                new = _newton_polish(p)
            new = _symmetrize(new)
            move = float(np.max(np.abs(new - p)))
            p = new
            if move < tol:
                break
        else:
            raise QuantizerConvergenceError(
                f"M={M}: point movement {move:.3e} after {max_iters} iterations exceeds tol={tol}"
            )
        # land exactly on a centroid map output so the residual reflects `tol`
        prob, first, _, _ = cell_moments(p)
        p = _symmetrize(first / prob)
        log.debug("M=%d converged in %d iterations", M, it)

    prob, first, second, _ = cell_moments(p)
    half = M // 2
    w = prob.copy()
    w[M - half :] = w[:half][::-1]  # palindromic by construction
    w = w / w.sum()
    grid = QuantGrid1D(_frozen(p), _frozen(w), _distortion(p, prob, first, second))
    return grid


def product_grid(base: QuantGrid1D, d: int, max_nodes: int = 50_000_000) -> QuantGridD:
    """Cartesian product of `base` with itself `d` times (row-major node order)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    m = base.size
    count = m**d
    log.info("product grid: %d^%d = %d nodes", m, d, count)
    if count > max_nodes:
        raise MemoryError(f"product grid would have {count} nodes (limit {max_nodes})")
    axes = np.meshgrid(*([base.points] * d), indexing="ij")
    nodes = np.stack([a.ravel() for a in axes], axis=-1)
    wax = np.meshgrid(*([base.weights] * d), indexing="ij")
    weights = functools.reduce(np.multiply, [a.ravel() for a in wax])
    return QuantGridD(d, _frozen(nodes), _frozen(weights), m, base)


def gaussian_grid(M: int, d: int = 1) -> QuantGridD:
    """Product grid with m = round(M ** (1/d)) points per dimension."""
    if M < 1 or d < 1:
        raise GridError(f"need M >= 1 and d >= 1, got M={M}, d={d}")
    m = max(1, int(round(M ** (1.0 / d))))
    return product_grid(build_gaussian_grid_1d(m), d)


def nearest_node(points: np.ndarray, z) -> np.ndarray:
    """Map each entry of `z` to its nearest point of a sorted 1-D grid (its Voronoi cell)."""
    points = np.asarray(points, dtype=float)
    edges = 0.5 * (points[1:] + points[:-1])
    return points[np.searchsorted(edges, np.asarray(z, dtype=float))]


def grid_distortion_rate(d: int, m_list) -> float:
    """Least-squares slope of log(total distortion) against log(m**d).

    `m_list` holds per-dimension point counts (for d = 1 these are M).
    """
    m_list = [int(m) for m in m_list]
    if len(m_list) < 3:
        raise ValueError("need at least three grid sizes")
    dist = np.array([d * build_gaussian_grid_1d(m).distortion for m in m_list])
    if np.ptp(dist) == 0.0:
        raise DegenerateFitError("all distortions are equal; cannot fit a rate")
    if np.any(np.diff(m_list) <= 0):
        raise ValueError("grid sizes must be strictly increasing")
    total = np.array(m_list, dtype=float) ** d
    slope, _ = np.polyfit(np.log(total), np.log(dist), 1)
    return float(slope)


def save_grid(grid: QuantGrid1D | QuantGridD, path) -> None:
    if isinstance(grid, QuantGrid1D):
        nodes, weights, d = grid.points[:, None], grid.weights, 1
    else:
        nodes, weights, d = grid.nodes, grid.weights, grid.dim
    lines = [f"{len(weights)} {d}"]
    for x, w in zip(nodes, weights):
        lines.append(" ".join(format(v, ".17g") for v in (*x, w)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_grid(path) -> QuantGrid1D | QuantGridD:
    """Read a grid written by `save_grid` and re-validate it."""
    text = Path(path).read_text().splitlines()
    if not text:
        raise GridError(f"{path}: empty grid file")
    try:
        count, d = (int(t) for t in text[0].split())
    except ValueError:
        raise GridError(f"{path}: bad header {text[0]!r}, expected 'M d'") from None
    rows = [ln for ln in text[1:] if ln.strip()]
    if len(rows) < count:
        raise GridError(f"{path}: expected {count} node rows, missing row {len(rows) + 1}")
    if len(rows) > count:
        raise GridError(f"{path}: {len(rows)} node rows but header says {count}")
    data = np.empty((count, d + 1))
    for k, ln in enumerate(rows):
        fields = ln.split()
        if len(fields) != d + 1:
            raise GridError(f"{path}: row {k + 1} has {len(fields)} fields, expected {d + 1}")
        data[k] = [float(f) for f in fields]
    nodes, weights = data[:, :d], data[:, d]
    if abs(weights.sum() - 1.0) > 1e-12:
        raise GridError(f"{path}: weights sum to {weights.sum():.17g}, expected 1")
    if d == 1:
        p = nodes[:, 0]
        prob, first, second, _ = cell_moments(p)
        grid = QuantGrid1D(_frozen(p), _frozen(weights), _distortion(p, prob, first, second))
        grid.check()
        return grid
    m = int(round(count ** (1.0 / d)))
    if m**d != count:
        raise GridError(f"{path}: {count} nodes is not a {d}-fold product")
    p = nodes[:: m ** (d - 1), 0]
    w1 = weights.reshape((m,) * d).sum(axis=tuple(range(1, d)))
    prob, first, second, _ = cell_moments(p)
    base = QuantGrid1D(_frozen(p), _frozen(w1 / w1.sum()), _distortion(p, prob, first, second))
    grid = QuantGridD(d, _frozen(nodes), _frozen(weights), m, base)
    grid.check()
    return grid

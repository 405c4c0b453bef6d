"""Euler scheme for the forward SDE, its lattice version, and path simulation."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtri

from .driver import clamp_weights
from .lattice import Lattice
from .quantizer import QuantGridD


@dataclass(frozen=True)
class SdeCoeffs:
    """Drift b: (..., d) -> (..., d) and diffusion sigma: (..., d) -> (..., d, d).

    ``componentwise`` declares that b^j depends on x^j only and sigma is
    diagonal with sigma^jj depending on x^j only; the backward solver then
    factorises the quantized expectation axis by axis.
    """

    b: Callable
    sigma: Callable
    lipschitz_K: float
    dim: int
    componentwise: bool = False
    name: str = "custom"


def gbm_coeffs(nu: float, d: int) -> SdeCoeffs:
    """dX^l = nu X^l dW^l, l = 1..d."""

    def b(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def sigma(x):
        x = np.asarray(x, dtype=float)
        return nu * x[..., :, None] * np.eye(d)

    return SdeCoeffs(b, sigma, abs(nu), d, componentwise=True, name=f"gbm(nu={nu:g})")


def sampled_lipschitz_ratio(coeffs: SdeCoeffs, x0, *, samples: int = 1000, scale: float = 1.0,
                            seed: int = 0) -> float:
    """Largest observed |b(x) - b(y)| / |x - y| or ||sigma(x) - sigma(y)||_F / |x - y| near x0."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x0, dtype=float) + scale * rng.normal(size=(samples, coeffs.dim))
    y = np.asarray(x0, dtype=float) + scale * rng.normal(size=(samples, coeffs.dim))
    dist = np.linalg.norm(x - y, axis=1)
    rb = np.linalg.norm(coeffs.b(x) - coeffs.b(y), axis=1) / dist
    rs = np.sqrt(np.sum((coeffs.sigma(x) - coeffs.sigma(y)) ** 2, axis=(1, 2))) / dist
    return float(max(rb.max(), rs.max()))


@dataclass(frozen=True)
class TimeGrid:
    n: int
    T: float = 1.0

    def __post_init__(self):
        if self.n < 0 or self.T <= 0:
            raise ValueError("need n >= 0 and T > 0")

    @property
    def h(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)


def euler_step(coeffs: SdeCoeffs, x, h: float, dw) -> np.ndarray:
    """x + h b(x) + sigma(x) dw, batched over leading axes."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    dw = np.asarray(dw, dtype=float)
    return x + h * coeffs.b(x) + np.einsum("...ij,...j->...i", coeffs.sigma(x), dw)


def discrete_euler_step(coeffs: SdeCoeffs, lat: Lattice, x, h: float, dw_hat) -> np.ndarray:
    return lat.project(euler_step(coeffs, x, h, dw_hat))


def transition_support(coeffs: SdeCoeffs, lat: Lattice, grid: QuantGridD, x, h: float,
                       R: float | None = None):
    """Successors of lattice point `x` under the quantized Euler step.

    Returns ``[(successor, weight, H), ...]`` in node order, where H is the
    quantized increment divided by h, clamped at R/sqrt(h) unless R is None.
    """
    x = np.asarray(x, dtype=float)
    sq = math.sqrt(h)
    xs = np.broadcast_to(x, grid.nodes.shape)
    succ = lat.project(euler_step(coeffs, xs, h, sq * grid.nodes))
    H = grid.nodes / sq
    if R is not None:
        H = clamp_weights(H, R, h)
    return [(succ[k], float(grid.weights[k]), H[k]) for k in range(grid.size)]


_BLOCK = 1 << 14


def _gaussians(seed: int, block: int, shape) -> np.ndarray:
    # counter-based Philox keyed by (seed, block); inverse-CDF keeps the
    # number of draws per variate fixed
    bits = np.random.Generator(np.random.Philox(key=[seed, block])).integers(
        0, 1 << 53, size=shape, dtype=np.int64)
    return ndtri((bits + 0.5) / float(1 << 53))


@dataclass(frozen=True)
class PathStats:
    count: int
    terminal_mean: np.ndarray
    terminal_std_error: np.ndarray
    sup_second_moment: float  # E[max_i |X_i|^2]
    sup_abs_mean: float  # E[max_i |X_i|]


def _simulate_block(coeffs, n, h, x0, seed, block, size):
    dW = math.sqrt(h) * _gaussians(seed, block, (n, size, coeffs.dim))
    x = np.broadcast_to(np.asarray(x0, dtype=float), (size, coeffs.dim)).copy()
    sup = np.sqrt(np.sum(x * x, axis=1))
    for i in range(n):
        x = euler_step(coeffs, x, h, dW[i])
        sup = np.maximum(sup, np.sqrt(np.sum(x * x, axis=1)))
    return x, sup


def simulate_paths(coeffs: SdeCoeffs, n: int, T: float, x0, count: int, seed: int,
                   workers: int = 1) -> PathStats:
    """Monte Carlo Euler paths; blocks of 16384 paths each get their own stream.

    Results do not depend on `workers`.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    h = T / n
    sizes = [min(_BLOCK, count - s) for s in range(0, count, _BLOCK)]

    def run(b):
        return _simulate_block(coeffs, n, h, x0, seed, b, sizes[b])

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    xT = np.concatenate([p[0] for p in parts])
    sup = np.concatenate([p[1] for p in parts])
    se = xT.std(axis=0, ddof=1) / math.sqrt(count) if count > 1 else np.full(coeffs.dim, np.inf)
    return PathStats(count, xT.mean(axis=0), se, float(np.mean(sup**2)), float(np.mean(sup)))


def coupled_perturbation_constant(coeffs: SdeCoeffs, n: int, T: float, x0, *, initial_gap,
                                  step_perturbation: Callable[[int, np.ndarray], np.ndarray],
                                  count: int, seed: int) -> float:
    """Empirical constant C in E[max_k |X_k - X~_k|^2] <= C (|X_0 - X~_0|^2 + E[(sum_j |zeta_j|)^2]).

    Both schemes use the same Gaussian increments; the perturbed one starts
    at ``x0 + initial_gap`` and receives ``step_perturbation(j, x_tilde)``
    after step j.
    """
    h = T / n
    d = coeffs.dim
    x = np.broadcast_to(np.asarray(x0, dtype=float), (count, d)).copy()
    xt = x + np.asarray(initial_gap, dtype=float)
    gap0 = float(np.sum(np.asarray(initial_gap, dtype=float) ** 2))
    sup = np.sum((x - xt) ** 2, axis=1)
    zsum = np.zeros(count)
    for j in range(n):
        dw = math.sqrt(h) * _gaussians(seed, j, (count, d))
        zeta = np.broadcast_to(step_perturbation(j, xt), (count, d))
        x = euler_step(coeffs, x, h, dw)
        xt = euler_step(coeffs, xt, h, dw) + zeta
        zsum += np.sqrt(np.sum(zeta * zeta, axis=1))
        sup = np.maximum(sup, np.sum((x - xt) ** 2, axis=1))
    return float(np.mean(sup) / (gap0 + np.mean(zsum**2)))

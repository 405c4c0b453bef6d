"""Backward dynamic programming for the quantized, truncated BTZ scheme.

For every lattice point x and step i the solver computes

    v(t_i, x) = sum_k w_k u(t_{i+1}, s_k(x)) H_k
    u(t_i, x) = sum_k w_k u(t_{i+1}, s_k(x)) + h f_N(x, u(t_i, x), v(t_i, x))

with successors s_k(x) = Pi(x + h b(x) + sqrt(h) sigma(x) g_k) over the
quantizer nodes g_k and weights H_k = clamp(g_k / sqrt(h)).
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .driver import (Driver, StabilityReport, TruncationPolicy, clamp_weights,
                     stability_diagnostic, truncate_driver)
from .forward import SdeCoeffs
from .lattice import Lattice
from .quantizer import QuantGridD, gaussian_grid


class SchemeError(RuntimeError):
    pass


class PicardError(SchemeError):
    pass


class FieldError(SchemeError):
    pass


class TreeTooLargeError(SchemeError):
    pass


@dataclass(frozen=True)
class SchemeParams:
    n: int
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)
    M: int = 100
    delta: float = 0.05
    kappa: int = 80
    picard_tol: float = 1e-12
    picard_max_iters: int = 50
    workers: int = 1
    kernel: str = "auto"  # "auto" | "separable" | "general"
    keep_fields: bool = False

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.M < 1 or self.delta <= 0 or self.kappa < 0:
            raise ValueError("need M >= 1, delta > 0, kappa >= 0")
        if self.kernel not in ("auto", "separable", "general"):
            raise ValueError(f"unknown kernel {self.kernel!r}")

    @property
    def alpha(self) -> float:
        return self.truncation.alpha

    @classmethod
    def from_schedule(cls, n: int, alpha: float, d: int, eta: float = 0.1, **kw) -> "SchemeParams":
        """delta = n^-3/2, kappa = n^(3/2 + eta), M = n^((1 + alpha) d).

        These sizes give the full convergence guarantee but are far too large
        for anything beyond toy n.
        """
        return cls(n=n, truncation=TruncationPolicy("adaptive", alpha), M=math.ceil(n ** ((1 + alpha) * d)),
                   delta=n ** -1.5, kappa=math.ceil(n ** (1.5 + eta)), **kw)


@dataclass
class ValueField:
    u: np.ndarray  # (P,)
    v: np.ndarray  # (P, d)
    time_index: int


def _point_chunks(P: int, workers: int, min_chunk: int = 4096):
    nchunks = max(1, min(workers * 4, P // min_chunk))
    bounds = np.linspace(0, P, nchunks + 1).astype(int)
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _mirror_pairs(count: int):
    """Node k together with its mirror count-1-k, outermost pairs first.

    Grid nodes and weights are exactly symmetric, so adding mirror terms
    first makes the H-weighted sums of a constant field exactly zero.
    """
    return [(k, count - 1 - k) for k in range((count + 1) // 2)]


def _run(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


class TransitionKernel:
    """Quantized conditional expectations E[u(s_k)] and E[u(s_k) H_k] on the lattice.

    The general kernel loops over quantizer nodes for every lattice point.
    The separable kernel applies one 1-D operator per axis, which is exact
    when the coefficients are componentwise and the grid is a product grid.
    Both accumulate each output in a fixed order, so results do not depend
    on the number of workers.
    """

    def __init__(self, coeffs: SdeCoeffs, lat: Lattice, grid: QuantGridD, h: float,
                 R: float | None, kind: str = "auto", workers: int = 1):
        if kind == "auto":
            kind = "separable" if coeffs.componentwise else "general"
        if kind == "separable" and not coeffs.componentwise:
            raise ValueError("separable kernel needs componentwise coefficients")
        self.coeffs, self.lat, self.grid, self.h, self.R = coeffs, lat, grid, h, R
        self.kind = kind
        self.workers = max(1, int(workers))
        sq = math.sqrt(h)
        if kind == "separable":
            g = grid.base.points
            H1 = g / sq if R is None else clamp_weights(g / sq, R, h)
            self.w1 = np.asarray(grid.base.weights)
            self.wH1 = self.w1 * H1
            self.axis_succ = [self._axis_successors(j, g) for j in range(lat.dim)]
        else:
            H = grid.nodes / sq if R is None else clamp_weights(grid.nodes / sq, R, h)
            self.wk = np.asarray(grid.weights)
            self.wHk = self.wk[:, None] * H
            self._points = lat.points()
            self._cache = None
            if grid.size * lat.size <= 20_000_000:
                self._cache = self._successors(slice(0, lat.size))

    def _axis_successors(self, j, g):
        lat = self.lat
        ax = lat.axis(j)
        # evaluate on points that vary along axis j only; valid for componentwise coefficients
        pts = np.tile(lat.center, (lat.side, 1))
        pts[:, j] = ax
        bj = self.coeffs.b(pts)[:, j]
        sj = self.coeffs.sigma(pts)[:, j, j]
        y = ax[:, None] + self.h * bj[:, None] + math.sqrt(self.h) * sj[:, None] * g[None, :]
        # 1-D projection along axis j, same formula as Lattice.offsets
        dev = y - lat.center[j]
        k = np.floor(dev / lat.spacing + 0.5)
        k = np.where(dev > lat.radius, lat.half_width, k)
        k = np.where(dev < -lat.radius, -lat.half_width, k)
        k = np.clip(k, -lat.half_width, lat.half_width)
        return (k + lat.half_width).astype(np.intp)  # (side, m)

    def _successors(self, sl):
        x = self._points[sl]
        sq = math.sqrt(self.h)
        drift = x + self.h * self.coeffs.b(x)
        sig = self.coeffs.sigma(x)
        out = np.empty((self.grid.size, len(x)), dtype=np.intp)
        for k, gk in enumerate(self.grid.nodes):
            y = drift + sq * np.einsum("pij,j->pi", sig, gk)
            out[k] = self.lat.project_index(y)
        return out

    # -- general ---------------------------------------------------------
    def _general_chunk(self, u, sl):
        succ = self._cache[:, sl] if self._cache is not None else self._successors(sl)
        P = succ.shape[1]
        e = np.zeros(P)
        v = np.zeros((P, self.lat.dim))
        for k, j in _mirror_pairs(self.grid.size):
            uk = u[succ[k]]
            if j == k:
                e += self.wk[k] * uk
                v += uk[:, None] * self.wHk[k]
            else:
                uj = u[succ[j]]
                e += self.wk[k] * uk + self.wk[j] * uj
                v += uk[:, None] * self.wHk[k] + uj[:, None] * self.wHk[j]
        return e, v

    # -- separable -------------------------------------------------------
    def _apply_axis(self, arr, axis, wts):
        S = self.axis_succ[axis]
        side = arr.shape[axis]
        out = np.empty_like(arr)

        def job(sl):
            idx = S[sl]
            acc = None
            for k, j in _mirror_pairs(idx.shape[1]):
                term = wts[k] * np.take(arr, idx[:, k], axis=axis)
                if j != k:
                    term = term + wts[j] * np.take(arr, idx[:, j], axis=axis)
                acc = term if acc is None else acc + term
            dst = [slice(None)] * arr.ndim
            dst[axis] = sl
            out[tuple(dst)] = acc

        chunks = _point_chunks(side, self.workers, min_chunk=1)
        _run(job, chunks, self.workers)
        return out

    def _separable(self, u):
        d = self.lat.dim
        shape = self.lat.shape
        # partial[key] = u contracted over the first len(key) axes, key[j] = True
        # where the H-weighted operator was used on axis j
        layer = {(): u.reshape(shape)}
        for axis in range(d):
            nxt = {}
            for key, arr in layer.items():
                nxt[key + (False,)] = self._apply_axis(arr, axis, self.w1)
                if not any(key):
                    nxt[key + (True,)] = self._apply_axis(arr, axis, self.wH1)
            layer = nxt
        e = layer[(False,) * d].reshape(-1)
        v = np.empty((e.size, d))
        for l in range(d):
            key = tuple(j == l for j in range(d))
            v[:, l] = layer[key].reshape(-1)
        return e, v

    def expectations(self, u: np.ndarray):
        """Return (E[u(s)], E[u(s) H]) with shapes (P,) and (P, d)."""
        if self.kind == "separable":
            return self._separable(u)
        chunks = _point_chunks(self.lat.size, self.workers)
        parts = _run(lambda sl: self._general_chunk(u, sl), chunks, self.workers)
        return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


def picard_solve(y_guess, e, x, v, f_N: Driver, h: float, tol: float = 1e-12,
                 max_iters: int = 50, full_output: bool = False):
    """Fixed point of y -> e + h f_N(x, y, v), elementwise over arrays.

    Each entry stops iterating once its update is below tol * (1 + |y|), so
    the result for one entry does not depend on the others. A y-independent
    driver needs a single evaluation.
    """
    scalar = np.ndim(e) == 0
    e = np.atleast_1d(np.asarray(e, dtype=float))
    x = np.asarray(x, dtype=float).reshape(e.shape + (-1,))
    v = np.asarray(v, dtype=float).reshape(e.shape + (-1,))
    y = np.broadcast_to(np.asarray(y_guess, dtype=float), e.shape).copy()
    iters = 1
    with np.errstate(over="ignore", invalid="ignore"):
        y_new = e + h * f_N(x, y, v)
        if not f_N.y_independent:
            # non-finite entries stop iterating; callers decide whether that is an error
            active = ~(np.abs(y_new - y) < tol * (1.0 + np.abs(y_new))) & np.isfinite(y_new)
            y = y_new
            while np.any(active):
                if iters >= max_iters:
                    bad = int(np.flatnonzero(active)[0])
                    raise PicardError(f"Picard iteration did not converge in {max_iters} iterations "
                                      f"(entry {bad}, |dy| = {abs(y_new[bad] - y[bad]):.3e})")
                iters += 1
                ya = e[active] + h * f_N(x[active], y[active], v[active])
                done = (np.abs(ya - y[active]) < tol * (1.0 + np.abs(ya))) | ~np.isfinite(ya)
                y[active] = ya
                idx = np.flatnonzero(active)
                active[idx[done]] = False
            y_new = y
    out = float(y_new[0]) if scalar else y_new
    return (out, iters) if full_output else out


def backward_step(next_field: ValueField, lat: Lattice, grid: QuantGridD, coeffs: SdeCoeffs,
                  f_N: Driver, params: SchemeParams, i: int, *, h: float, R: float | None,
                  kernel: TransitionKernel | None = None, points: np.ndarray | None = None,
                  truncated: bool = True) -> ValueField:
    """One step of the induction, from t_{i+1} to t_i."""
    if kernel is None:
        kernel = TransitionKernel(coeffs, lat, grid, h, R, params.kernel, params.workers)
    if points is None:
        points = lat.points()
    with np.errstate(over="ignore", invalid="ignore"):
        e, v = kernel.expectations(next_field.u)
    try:
        u = picard_solve(e, e, points, v, f_N, h, params.picard_tol, params.picard_max_iters)
    except PicardError as exc:
        raise PicardError(f"step {i}: {exc}") from None
    if truncated:
        bad = ~np.isfinite(u)
        if np.any(bad):
            p = int(np.flatnonzero(bad)[0])
            raise FieldError(f"non-finite value at step {i}, lattice point {lat.decode(p).tolist()}")
    return ValueField(u, v, i)


@dataclass
class SolveResult:
    y0: float
    z0: list
    n: int
    alpha: float
    M: int
    delta: float
    kappa: int
    truncation: str
    diagnostics: dict
    runtime_ms: float
    fields: list | None = None

    @property
    def diverged(self) -> bool:
        return bool(self.diagnostics.get("diverged", False))

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("fields")
        return json.dumps(d, indent=2, allow_nan=True)

    @classmethod
    def from_json(cls, text: str) -> "SolveResult":
        return cls(**json.loads(text))


def solve(problem, params: SchemeParams) -> SolveResult:
    """Run the backward induction from i = n - 1 down to 0 on the lattice centred at x0."""
    t0 = time.perf_counter()
    d = problem.dim
    lat = Lattice(d, params.delta, params.kappa, problem.x0)
    grid = gaussian_grid(params.M, d)
    pol = params.truncation
    n = params.n
    points = lat.points()
    u = np.asarray(problem.g(points), dtype=float)
    field_ = ValueField(u, np.zeros((lat.size, d)), n)
    fields = [field_] if params.keep_fields else None
    sup_u = [float(np.max(np.abs(u)))]
    diag = {"lattice_points": lat.size, "grid_nodes": grid.size, "diverged": False}
    if n > 0:
        h = problem.T / n
        if h * problem.driver.lipschitz_Ky >= 1.0:
            raise SchemeError(f"h * K_y = {h * problem.driver.lipschitz_Ky:g} >= 1: implicit step is not a contraction")
        N, R = pol.levels(n)
        L = problem.driver.local_lipschitz_L
        if pol.truncated:
            r = pol.radius(n, L)
            f_N = truncate_driver(problem.driver, r)
            report = stability_diagnostic(n, h, R, N, L, d, radius=r)
            Rk = R
        else:
            r = math.inf
            f_N = problem.driver
            report = StabilityReport(math.inf, "unverifiable", math.inf)
            Rk = None
        kernel = TransitionKernel(problem.coeffs, lat, grid, h, Rk, params.kernel, params.workers)
        diag.update({"N": N, "R": R, "z_radius": r, "kernel": kernel.kind, "stability": report.as_dict()})
        for i in range(n - 1, -1, -1):
            field_ = backward_step(field_, lat, grid, problem.coeffs, f_N, params, i, h=h, R=Rk,
                                   kernel=kernel, points=points, truncated=pol.truncated)
            with np.errstate(invalid="ignore"):
                sup_u.append(float(np.max(np.abs(field_.u))))
            if fields is not None:
                fields.append(field_)
    c = lat.center_index
    y0 = float(field_.u[c])
    z0 = [float(t) for t in field_.v[c]]
    diag["sup_u"] = sup_u[::-1]  # indexed by time step
    diag["diverged"] = not math.isfinite(y0)
    # untruncated runs can overflow near the boundary while y0 stays finite
    diag["field_overflow"] = not all(math.isfinite(s) for s in sup_u)
    return SolveResult(y0, z0, n, pol.alpha, grid.size, params.delta, params.kappa, pol.label(),
                       diag, 1000.0 * (time.perf_counter() - t0),
                       fields[::-1] if fields is not None else None)


def naive_recursive_oracle(problem, params: SchemeParams, max_nodes: int = 2_000_000) -> float:
    """Same scheme evaluated by explicit recursion over the quantized path tree.

    Uses pointwise projection and scalar driver calls, no lattice tables.
    Only feasible when (number of grid nodes) ** n is small.
    """
    d = problem.dim
    lat = Lattice(d, params.delta, params.kappa, problem.x0)
    grid = gaussian_grid(params.M, d)
    n = params.n
    if grid.size**n > max_nodes:
        raise TreeTooLargeError(f"path tree has {grid.size}^{n} leaves (limit {max_nodes})")
    x0 = lat.project(problem.x0)
    if n == 0:
        return float(np.asarray(problem.g(x0[None, :])).reshape(-1)[0])
    h = problem.T / n
    sq = math.sqrt(h)
    pol = params.truncation
    N, R = pol.levels(n)
    if pol.truncated:
        f_N = truncate_driver(problem.driver, pol.radius(n, problem.driver.local_lipschitz_L))
    else:
        f_N = problem.driver
    b, sigma = problem.coeffs.b, problem.coeffs.sigma

    def value(i, x):
        if i == n:
            return float(np.asarray(problem.g(x[None, :])).reshape(-1)[0])
        drift = x + h * b(x[None, :])[0]
        sig = sigma(x[None, :])[0]
        e = 0.0
        v = np.zeros(d)
        for k in range(grid.size):
            g = grid.nodes[k]
            s = lat.project(drift + sq * (sig @ g))
            uk = value(i + 1, s)
            Hk = g / sq if not pol.truncated else clamp_weights(g / sq, R, h)
            e += grid.weights[k] * uk
            v += grid.weights[k] * Hk * uk
        return picard_solve(e, e, x, v, f_N, h, params.picard_tol, params.picard_max_iters)

    return value(0, x0)

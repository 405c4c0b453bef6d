"""Registry of the experiment problems and a validated constructor for custom ones."""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .driver import Driver, quadratic_driver
from .forward import SdeCoeffs, gbm_coeffs
from .oracle import Reference, ReferenceSpec, reference_y0


class ModelWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Problem:
    """Forward coefficients, driver and terminal function of a Markovian BSDE.

    ``g_bound`` is sup |g| on the region the forward process lives in and
    ``g_lipschitz`` a Lipschitz constant of g. ``a`` and ``nu`` are set for
    the quadratic/GBM family, which has a closed-form reference value.
    """

    name: str
    dim: int
    coeffs: SdeCoeffs
    driver: Driver
    g: Callable
    g_bound: float
    g_lipschitz: float
    x0: np.ndarray
    T: float = 1.0
    a: float | None = None
    nu: float | None = None
    c_y: float = 0.0
    lattice: tuple = (0.05, 80)  # default (delta, kappa)

    def __post_init__(self):
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        if x0.shape != (self.dim,):
            raise ValueError(f"x0 must have {self.dim} coordinates")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not math.isfinite(self.g_bound) or self.g_bound < 0:
            raise ValueError("g must be bounded: g_bound must be finite and non-negative")
        if self.coeffs.dim != self.dim:
            raise ValueError("coefficient dimension does not match dim")

    @property
    def has_reference(self) -> bool:
        return self.a is not None and self.nu is not None and self.c_y == 0.0

    def reference_spec(self, nodes_per_dim: int = 64) -> ReferenceSpec:
        if not self.has_reference:
            raise ValueError(f"{self.name}: no closed-form reference outside the quadratic GBM family")
        return ReferenceSpec(self.a, self.nu, tuple(self.x0), self.g, self.T, nodes_per_dim)

    def reference(self) -> Reference:
        return _cached_reference(self)


@functools.lru_cache(maxsize=None)
def _cached_reference(problem: Problem) -> Reference:
    return reference_y0(problem.reference_spec())


def _sum_sin2(x):
    return 3.0 * np.sum(np.sin(x) ** 2, axis=-1)


def _sin2_sum(x):
    return 3.0 * np.sin(np.sum(x, axis=-1)) ** 2


def _atan_sum(x):
    return 4.0 * np.arctan(np.sum(x, axis=-1))


def _capped_spread(x):
    # (3 min [x1 - x2]_+) + [2 - x3]_+
    return np.minimum(3.0, np.maximum(x[..., 0] - x[..., 1], 0.0)) + np.maximum(2.0 - x[..., 2], 0.0)


def _gbm_problem(name, d, a, nu, g, g_bound, g_lip, lattice, x0=1.0):
    return Problem(name, d, gbm_coeffs(nu, d), quadratic_driver(a), g, g_bound, g_lip,
                   np.full(d, float(x0)), 1.0, a, nu, 0.0, lattice)


_R3 = math.sqrt(3.0)

_BUILTINS = {
    "d1_alpha": lambda: _gbm_problem("d1_alpha", 1, 5.0, 0.4, _sum_sin2, 3.0, 3.0, (0.005, 1200)),
    "d2_fig1": lambda: _gbm_problem("d2_fig1", 2, 1.0, 1.0, _sum_sin2, 6.0, 3.0 * math.sqrt(2.0), (0.05, 120)),
    "d2_fig2": lambda: _gbm_problem("d2_fig2", 2, 3.5, 1.0, _sum_sin2, 6.0, 3.0 * math.sqrt(2.0), (0.05, 120)),
    "model_I": lambda: _gbm_problem("model_I", 3, 5.0, 1.0, _sin2_sum, 3.0, 3.0 * _R3, (0.05, 80)),
    "model_II": lambda: _gbm_problem("model_II", 3, 5.0, 1.0, _sum_sin2, 9.0, 3.0 * _R3, (0.05, 80)),
    "model_III": lambda: _gbm_problem("model_III", 3, 5.0, 1.0, _atan_sum, 2.0 * math.pi, 4.0 * _R3, (0.05, 80)),
    # bounded by 5 on the positive orthant, where GBM lives
    "model_IV": lambda: _gbm_problem("model_IV", 3, 4.0, 1.0, _capped_spread, 5.0, _R3, (0.05, 80)),
}

BUILTIN_NAMES = tuple(_BUILTINS)


@functools.lru_cache(maxsize=None)
def builtin(name: str) -> Problem:
    """One of `BUILTIN_NAMES`; all have T = 1, GBM coordinates and driver (a/2)|z|^2."""
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {', '.join(BUILTIN_NAMES)}") from None


_REQUIRED = ("dim", "g", "g_bound", "g_lipschitz", "x0")


def custom(spec: dict, *, samples: int = 1000, seed: int = 0) -> Problem:
    """Validated Problem from a dict.

    Required keys: dim, g, g_bound, g_lipschitz, x0. Forward dynamics come
    from either ``nu`` (GBM) or ``b``, ``sigma``, ``lipschitz_K`` (plus
    optional ``componentwise``). The driver is either ``driver`` or the
    quadratic family given by ``a`` (optional ``c_y``, ``phi``,
    ``phi_bound``). Sampled checks of the bound and Lipschitz claims on g
    emit ModelWarning rather than failing.
    """
    missing = [k for k in _REQUIRED if k not in spec]
    if "nu" not in spec and not all(k in spec for k in ("b", "sigma", "lipschitz_K")):
        missing.append("nu or (b, sigma, lipschitz_K)")
    if "driver" not in spec and "a" not in spec:
        missing.append("driver or a")
    if missing:
        raise ValueError(f"custom model is missing: {', '.join(missing)}")
    d = int(spec["dim"])
    if "nu" in spec:
        coeffs = gbm_coeffs(float(spec["nu"]), d)
    else:
        coeffs = SdeCoeffs(spec["b"], spec["sigma"], float(spec["lipschitz_K"]), d,
                           bool(spec.get("componentwise", False)))
    c_y = float(spec.get("c_y", 0.0))
    if "driver" in spec:
        driver = spec["driver"]
    else:
        driver = quadratic_driver(float(spec["a"]), c_y, spec.get("phi"), float(spec.get("phi_bound", 0.0)))
    problem = Problem(spec.get("name", "custom"), d, coeffs, driver, spec["g"], float(spec["g_bound"]),
                      float(spec["g_lipschitz"]), spec["x0"], float(spec.get("T", 1.0)),
                      spec.get("a") if "driver" not in spec else None, spec.get("nu"), c_y,
                      tuple(spec.get("lattice", (0.05, 80))))
    _sample_checks(problem, samples, seed)
    return problem


def _sample_checks(p: Problem, samples: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    x = p.x0 + rng.normal(scale=1.0, size=(samples, p.dim))
    y = p.x0 + rng.normal(scale=1.0, size=(samples, p.dim))
    gx, gy = np.asarray(p.g(x), dtype=float), np.asarray(p.g(y), dtype=float)
    if np.max(np.abs(gx)) > p.g_bound * (1 + 1e-12):
        warnings.warn(f"{p.name}: sampled |g| = {np.max(np.abs(gx)):.4g} exceeds g_bound = {p.g_bound:g}",
                      ModelWarning, stacklevel=3)
    ratio = np.max(np.abs(gx - gy) / np.linalg.norm(x - y, axis=1))
    if ratio > p.g_lipschitz * (1 + 1e-12):
        warnings.warn(f"{p.name}: sampled Lipschitz ratio {ratio:.4g} exceeds g_lipschitz = {p.g_lipschitz:g}",
                      ModelWarning, stacklevel=3)

"""BSDE drivers, their z-truncation, and the clamped Brownian weights."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Driver:
    """f(x, y, z), vectorised over leading axes.

    ``eval(x, y, z)`` receives x of shape (..., d), y of shape (...) and z of
    shape (..., d) and returns shape (...).
    """

    eval: Callable
    local_lipschitz_L: float
    lipschitz_Ky: float = 0.0
    lipschitz_Kx: float = 0.0
    y_independent: bool = False
    z_radius: float = math.inf
    name: str = "custom"

    def __call__(self, x, y, z):
        return self.eval(x, y, z)

    @property
    def z_lipschitz(self) -> float:
        """Certified Lipschitz constant in z (infinite when untruncated)."""
        return self.local_lipschitz_L * (1.0 + 2.0 * self.z_radius)


def quadratic_driver(a: float, c_y: float = 0.0, phi: Callable | None = None,
                     phi_bound: float = 0.0, phi_lipschitz: float = 0.0) -> Driver:
    """f(x, y, z) = (a/2)|z|^2 + c_y * y + phi(x)."""
    if a < 0:
        raise ValueError("a must be non-negative")

    def f(x, y, z):
        z = np.asarray(z, dtype=float)
        out = 0.5 * a * np.sum(z * z, axis=-1)
        if c_y:
            out = out + c_y * np.asarray(y)
        if phi is not None:
            out = out + phi(np.asarray(x))
        return out

    L = max(0.5 * a, abs(c_y), phi_bound)
    return Driver(f, L, abs(c_y), phi_lipschitz, y_independent=(c_y == 0.0),
                  name=f"quadratic(a={a:g})")


def truncation_radius(L: float, N: float) -> float:
    """Largest r with L(1 + 2r) <= N, i.e. the radius certifying N-Lipschitz in z."""
    if L <= 0 or N <= 0:
        raise ValueError("L and N must be positive")
    if N <= L:
        warnings.warn(f"N={N:g} <= L={L:g}: degenerate truncation radius 0", TruncationWarning, stacklevel=2)
        return 0.0
    return (N - L) / (2.0 * L)


def project_ball(z, r: float) -> np.ndarray:
    """Euclidean projection of the rows of z onto the centred ball of radius r."""
    z = np.asarray(z, dtype=float)
    if math.isinf(r):
        return z
    norm = np.sqrt(np.sum(z * z, axis=-1, keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norm > r, r / norm, 1.0)
    return z * scale


def truncate_driver(f: Driver, r: float) -> Driver:
    """f_N(x, y, z) = f(x, y, pi_r(z))."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    base = f.eval

    def fN(x, y, z):
        return base(x, y, project_ball(z, r))

    return replace(f, eval=fN, z_radius=min(r, f.z_radius), name=f"{f.name}|r={r:g}")


def clamp_weights(dw_over_h, R: float, h: float) -> np.ndarray:
    """Componentwise clamp to [-R/sqrt(h), R/sqrt(h)]."""
    if R < 0 or h <= 0:
        raise ValueError("need R >= 0 and h > 0")
    bound = R / math.sqrt(h)
    return np.clip(np.asarray(dw_over_h, dtype=float), -bound, bound)


@dataclass(frozen=True)
class TruncationPolicy:
    """How N (z-Lipschitz level) and R (weight clamp) are chosen for n steps.

    mode
        ``"adaptive"``: N = n**alpha, R = log(n); ``"fixed"``: given N, R;
        ``"none"``: raw driver and unclamped weights.
    radius_rule
        ``"level"`` projects z on the ball of radius N; ``"lipschitz"`` uses
        the radius from `truncation_radius`, which certifies N-Lipschitz
        continuity through the local Lipschitz bound.
    """

    mode: str = "adaptive"
    alpha: float = 0.25
    N: float | None = None
    R: float | None = None
    radius_rule: str = "level"

    def __post_init__(self):
        if self.mode not in ("adaptive", "fixed", "none"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if self.radius_rule not in ("level", "lipschitz"):
            raise ValueError(f"unknown radius rule {self.radius_rule!r}")
        if self.mode == "fixed" and (self.N is None or self.R is None):
            raise ValueError("fixed truncation needs N and R")

    @property
    def truncated(self) -> bool:
        return self.mode != "none"

    def levels(self, n: int) -> tuple[float, float]:
        """(N, R) for n time steps; (inf, inf) when untruncated."""
        if self.mode == "adaptive":
            return float(n) ** self.alpha, math.log(n)
        if self.mode == "fixed":
            return float(self.N), float(self.R)
        return math.inf, math.inf

    def radius(self, n: int, L: float) -> float:
        N, _ = self.levels(n)
        if math.isinf(N):
            return math.inf
        if self.radius_rule == "level":
            return N
        return truncation_radius(L, N)

    def label(self) -> str:
        if self.mode == "fixed":
            return f"fixed(N={self.N:g},R={self.R:g})"
        return self.mode


@dataclass(frozen=True)
class StabilityReport:
    value: float
    status: str  # "stable" | "violated" | "unverifiable"
    z_lipschitz: float
    epsilon: float = 0.05

    @property
    def stable(self) -> bool:
        return self.status == "stable"

    def as_dict(self) -> dict:
        return {"value": self.value, "status": self.status, "z_lipschitz": self.z_lipschitz,
                "epsilon": self.epsilon}


def stability_diagnostic(n: int, h: float, R: float, N: float, L: float, d: int, *,
                         radius: float | None = None, epsilon: float = 0.05) -> StabilityReport:
    """Check the sufficient condition sup_i h|H_i| * K_z < 1 - epsilon.

    ``sup h|H|`` is bounded by sqrt(h) * sqrt(d) * R for clamped weights and
    K_z is the certified z-Lipschitz constant L(1 + 2r) of the truncated
    driver (r defaults to ``truncation_radius(L, N)``, for which K_z = N).
    Advisory only.
    """
    if N is None or R is None or math.isinf(N) or math.isinf(R):
        return StabilityReport(math.inf, "unverifiable", math.inf, epsilon)
    if radius is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            radius = truncation_radius(L, N)
    kz = L * (1.0 + 2.0 * radius)
    value = float(math.sqrt(h) * math.sqrt(d) * R * kz)
    status = "stable" if value < 1.0 - epsilon else "violated"
    return StabilityReport(value, status, float(kz), epsilon)

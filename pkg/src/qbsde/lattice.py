"""Bounded spatial lattice centred on the initial point, with projection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class Lattice:
    """Points ``center + spacing * k`` for ``k`` in ``{-half_width, ..., half_width}^dim``.

    Flat indices enumerate the multi-indices ``k + half_width`` in row-major
    (C) order, so for d = 1 index 0 is the lowest point.
    """

    dim: int
    spacing: float
    half_width: int
    center: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.dim < 1:
            raise LatticeError("dim must be >= 1")
        if not self.spacing > 0:
            raise LatticeError("spacing must be positive")
        if int(self.half_width) != self.half_width or self.half_width < 0:
            raise LatticeError("half_width must be a non-negative integer")
        c = np.zeros(self.dim) if self.center is None else np.array(self.center, dtype=float).reshape(-1)
        if c.shape != (self.dim,):
            raise LatticeError(f"center must have {self.dim} coordinates")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_width", int(self.half_width))

    @property
    def side(self) -> int:
        return 2 * self.half_width + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.dim

    @property
    def size(self) -> int:
        return self.side**self.dim

    @property
    def radius(self) -> float:
        return self.half_width * self.spacing

    @property
    def center_index(self) -> int:
        return int(np.ravel_multi_index((self.half_width,) * self.dim, self.shape))

    def axis(self, j: int) -> np.ndarray:
        k = np.arange(-self.half_width, self.half_width + 1)
        return self.spacing * k + self.center[j]

    def points(self) -> np.ndarray:
        """All lattice points, shape (size, dim), in flat-index order."""
        grids = np.meshgrid(*(self.axis(j) for j in range(self.dim)), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def offsets(self, x) -> np.ndarray:
        """Integer offsets ``k`` of the projection of `x` (any leading shape)."""
        x = np.asarray(x, dtype=float)
        u = (x - self.center) / self.spacing
        k = np.floor(u + 0.5)
        # the clamp branches are decided on |x - X0| vs kappa*delta, as written
        dev = x - self.center
        k = np.where(dev > self.radius, self.half_width, k)
        k = np.where(dev < -self.radius, -self.half_width, k)
        # nan stays out of range and is caught by callers that index with it
        k = np.clip(k, -self.half_width, self.half_width)
        return k.astype(np.int64)

    def project(self, x) -> np.ndarray:
        """Nearest lattice point per coordinate, ties rounding up, clamped to the box."""
        return self.spacing * self.offsets(x) + self.center

    def project_index(self, x) -> np.ndarray:
        """Flat index of ``project(x)``; `x` has shape (..., dim)."""
        k = self.offsets(x) + self.half_width
        return np.ravel_multi_index(tuple(np.moveaxis(k, -1, 0)), self.shape)

    def encode(self, point) -> int | np.ndarray:
        """Flat index of a lattice point; raises LatticeError for off-lattice input."""
        p = np.asarray(point, dtype=float)
        u = (p - self.center) / self.spacing
        k = np.rint(u)
        if np.any(np.abs(u - k) > 1e-9) or np.any(np.abs(k) > self.half_width):
            raise LatticeError(f"{point!r} is not a lattice point")
        idx = np.ravel_multi_index(tuple(np.moveaxis(k.astype(np.int64) + self.half_width, -1, 0)), self.shape)
        return int(idx) if np.ndim(idx) == 0 else idx

    def decode(self, index) -> np.ndarray:
        idx = np.asarray(index)
        if np.any(idx < 0) or np.any(idx >= self.size):
            raise LatticeError(f"index {index!r} outside [0, {self.size})")
        k = np.stack(np.unravel_index(idx, self.shape), axis=-1) - self.half_width
        return self.spacing * k + self.center

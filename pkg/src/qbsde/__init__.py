"""Quantized, truncated BTZ scheme for quadratic Markovian BSDEs."""

from .backward import SchemeParams, SolveResult, naive_recursive_oracle, solve
from .driver import TruncationPolicy, quadratic_driver
from .lattice import Lattice
from .models import BUILTIN_NAMES, Problem, builtin, custom
from .oracle import ReferenceSpec, cole_hopf_y0, reference_y0
from .quantizer import build_gaussian_grid_1d, gaussian_grid

__all__ = [
    "BUILTIN_NAMES", "Lattice", "Problem", "ReferenceSpec", "SchemeParams", "SolveResult",
    "TruncationPolicy", "build_gaussian_grid_1d", "builtin", "cole_hopf_y0", "custom",
    "gaussian_grid", "naive_recursive_oracle", "quadratic_driver", "reference_y0", "solve",
]

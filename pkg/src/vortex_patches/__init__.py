"""vortex-patches: steady double vortex patches in bounded planar domains."""

try:
    from vortex_patches.version import __version__
except ImportError:
    __version__ = "0.0.0.dev0"

from vortex_patches.domain import Ball, Domain, Grid, ScalarField, discretize
from vortex_patches.green import (
    DiskGreen,
    GreenBackend,
    GridGreen,
    build_green,
    energy,
    stream,
    velocity,
)
from vortex_patches.kirchhoff_routh import KRMinimum, KRPoint, SearchBox, find_local_min
from vortex_patches.steady import SolverConfig, SteadyPatch, solve_steady

__all__ = [
    "__version__",
    "Ball",
    "Domain",
    "Grid",
    "ScalarField",
    "discretize",
    "DiskGreen",
    "GreenBackend",
    "GridGreen",
    "build_green",
    "energy",
    "stream",
    "velocity",
    "KRMinimum",
    "KRPoint",
    "SearchBox",
    "find_local_min",
    "SolverConfig",
    "SteadyPatch",
    "solve_steady",
]

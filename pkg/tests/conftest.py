"""Shared grids, operators and steady patches (built once per session)."""

import math

import pytest

from vortex_patches.domain import Ball, Domain, Grid, discretize
from vortex_patches.green import DiskGreen, GreenOperator, build_green
from vortex_patches.kirchhoff_routh import KRMinimum, KRPoint, SearchBox, find_local_min
from vortex_patches.steady import SolverConfig, SteadyPatch, solve_steady

# λ giving about 68 cells per patch on the 128-cell disk grid
DESK_LAMBDA = 60.0
# a² = √5 - 2 for the symmetric pair on the unit disk
PAIR_OFFSET = math.sqrt(math.sqrt(5.0) - 2.0)


@pytest.fixture(scope="session")
def disk_grid() -> Grid:
    return discretize(Domain.unit_disk(), 128)


@pytest.fixture(scope="session")
def disk_green(disk_grid: Grid) -> GreenOperator:
    return build_green(disk_grid)


@pytest.fixture(scope="session")
def kr_minimum() -> KRMinimum:
    seed = KRPoint((0.5, 0.0), (-0.5, 0.0), 1.0, -1.0)
    return find_local_min(seed, SearchBox.around(seed, 0.3), DiskGreen())


@pytest.fixture(scope="session")
def solver_config(kr_minimum: KRMinimum, disk_grid: Grid) -> SolverConfig:
    return SolverConfig.from_minimum(kr_minimum, DESK_LAMBDA, disk_grid)


@pytest.fixture(scope="session")
def steady_patch(solver_config: SolverConfig, disk_green: GreenOperator) -> SteadyPatch:
    return solve_steady(solver_config, disk_green)


@pytest.fixture(scope="session")
def square_grid() -> Grid:
    return discretize(Domain.rectangle(1.0, 1.0), 64)


@pytest.fixture(scope="session")
def square_green(square_grid: Grid) -> GreenOperator:
    return build_green(square_grid)


@pytest.fixture(scope="session")
def square_patch(square_grid: Grid, square_green: GreenOperator) -> SteadyPatch:
    """Patch pair on the unit square around hand-placed balls."""
    cfg = SolverConfig(
        kappa1=1.0,
        kappa2=-1.0,
        b1=Ball((0.3, 0.5), 0.15),
        b2=Ball((0.7, 0.5), 0.15),
        lam=100.0,
        grid=square_grid,
    )
    return solve_steady(cfg, square_green)

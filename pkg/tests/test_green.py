"""Tests for the green module."""

import math

import numpy as np
import pytest

from vortex_patches.domain import Domain, ScalarField, discretize, inner
from vortex_patches.errors import CoincidentPoints, GridMismatch, NonDiskDomain, OutsideDomain
from vortex_patches.experiments.green_check import (
    convergence_orders,
    disk_discrepancy,
    manufactured_errors,
    point_source_discrepancy,
    smooth_bump,
)
from vortex_patches.green import (
    DiskGreen,
    GreenBackend,
    GridGreen,
    build_green,
    disk_regular_part,
    energy,
    green_disk,
    robin_disk,
    self_cell_kernel,
    stream,
    velocity,
)


class TestDiskKernel:
    """Tests for the analytic unit-disk Green function."""

    def test_symmetric(self):
        """G(x, y) = G(y, x)."""
        x, y = (0.3, -0.2), (-0.1, 0.5)
        assert green_disk(x, y) == pytest.approx(green_disk(y, x))

    def test_positive_inside(self):
        """G is positive on the open disk."""
        assert green_disk((0.9, 0.0), (-0.9, 0.0)) > 0

    def test_vanishes_at_wall(self):
        """G(x, y) → 0 as x approaches the circle."""
        assert abs(green_disk((1.0 - 1e-9, 0.0), (0.2, 0.3))) < 1e-8

    def test_coincident(self):
        """Equal points are rejected."""
        with pytest.raises(CoincidentPoints):
            green_disk((0.1, 0.1), (0.1, 0.1))

    def test_outside(self):
        """Points must lie in the open disk."""
        with pytest.raises(OutsideDomain):
            green_disk((1.0, 0.0), (0.0, 0.0))

    def test_robin(self):
        """h(x, x) = -(1/2π) ln(1 - |x|²)."""
        assert robin_disk((0.0, 0.0)) == 0.0
        assert robin_disk((0.5, 0.0)) == pytest.approx(-math.log(0.75) / (2 * math.pi))
        x = np.array([0.5, 0.0])
        assert float(disk_regular_part(x, x)) == pytest.approx(robin_disk((0.5, 0.0)))

    def test_self_cell_kernel(self):
        """Cell average of the logarithm grows as the cell shrinks."""
        assert self_cell_kernel(0.01) > self_cell_kernel(0.1)


class TestGreenOperator:
    """Tests for the discrete Green operators."""

    def test_rectangle_backends_agree(self, square_grid):
        """Masked sparse solve and sine transform are the same operator."""
        omega = smooth_bump(square_grid, center=(0.5, 0.5), radius=0.3)
        fast = stream(build_green(square_grid, GreenBackend.FAST_RECTANGLE), omega).psi
        masked = stream(build_green(square_grid, GreenBackend.MASKED_DIRECT), omega).psi
        assert np.max(np.abs(fast.values - masked.values)) <= 1e-8 * fast.max_abs()

    def test_default_backend(self, square_grid, disk_grid):
        """Rectangles get the fast solver, other domains the masked one."""
        assert build_green(square_grid).backend is GreenBackend.FAST_RECTANGLE
        assert build_green(disk_grid).backend is GreenBackend.MASKED_DIRECT

    def test_analytic_needs_disk(self, square_grid):
        """The quadrature backend is disk-only."""
        with pytest.raises(NonDiskDomain):
            build_green(square_grid, GreenBackend.ANALYTIC_DISK)

    def test_manufactured_convergence(self):
        """-Δψ = 2 sin x sin y converges at second order."""
        errors = manufactured_errors([16, 32, 64])
        assert errors[0] > errors[1] > errors[2]
        assert min(convergence_orders(errors)) >= 1.8

    def test_disk_matches_analytic(self, disk_grid):
        """Masked solve against analytic-kernel quadrature on the disk."""
        assert disk_discrepancy(disk_grid) <= 1.5e-2

    def test_point_source(self, disk_grid):
        """A discrete delta reproduces G(·, y) away from y."""
        assert point_source_discrepancy(disk_grid) <= 3e-2

    def test_operator_symmetric(self, disk_green, disk_grid):
        """<ω₁, Gω₂> = <ω₂, Gω₁>."""
        a = smooth_bump(disk_grid, center=(0.3, 0.1), radius=0.3)
        b = smooth_bump(disk_grid, center=(-0.2, -0.3), radius=0.4)
        ab = inner(a, stream(disk_green, b).psi)
        ba = inner(b, stream(disk_green, a).psi)
        assert ab == pytest.approx(ba, rel=1e-9)

    def test_energy_positive(self, disk_green, disk_grid):
        """E(ω) > 0 for nonzero ω."""
        omega = smooth_bump(disk_grid) - smooth_bump(disk_grid, center=(-0.4, 0.0), radius=0.3)
        assert energy(disk_green, omega) > 0

    def test_psi_zero_outside(self, disk_green, disk_grid):
        """ψ is zero on outside cells."""
        psi = stream(disk_green, smooth_bump(disk_grid)).psi
        assert np.all(psi.values[~disk_grid.inside] == 0.0)
        assert psi.values[disk_grid.inside].min() >= 0.0

    def test_grid_mismatch(self, disk_green):
        """Vorticity must live on the operator grid."""
        other = discretize(Domain.unit_disk(), 64)
        with pytest.raises(GridMismatch):
            stream(disk_green, ScalarField.zeros(other))

    def test_velocity_rotates(self, disk_green, disk_grid):
        """A centred positive bump turns counterclockwise."""
        sf = stream(disk_green, smooth_bump(disk_grid, center=(0.0, 0.0), radius=0.5))
        u, v = velocity(sf)
        iy, ix = disk_grid.nearest_cell((0.3, 0.0))
        # on the positive x-axis the flow points in +y
        assert v.values[iy, ix] > 0
        assert abs(u.values[iy, ix]) < 0.05 * abs(v.values[iy, ix])

    def test_maximum_principle(self, disk_green, disk_grid, square_green, square_grid):
        """Nonnegative vorticity gives a stream function positive everywhere inside."""
        for op, grid, center in (
            (disk_green, disk_grid, (0.3, 0.2)),
            (square_green, square_grid, (0.7, 0.4)),
        ):
            psi = stream(op, smooth_bump(grid, center=center, radius=0.2)).psi
            assert np.all(psi.values[grid.inside] > 0.0)


class TestEvaluators:
    """Tests for pointwise Green evaluators."""

    def test_disk_green(self):
        """DiskGreen matches the closed form."""
        g = DiskGreen()
        x, y = (0.2, 0.1), (-0.3, 0.4)
        assert g.green(x, y) == pytest.approx(green_disk(x, y))
        assert g.robin((0.4, 0.0)) == pytest.approx(robin_disk((0.4, 0.0)))

    def test_grid_green_on_disk(self, disk_green):
        """Discrete harmonic extension reproduces the images formula."""
        grid_green = GridGreen(disk_green)
        x, y = (0.3, 0.05), (-0.2, 0.1)
        exact = float(disk_regular_part(np.array(x), np.array(y)))
        assert grid_green.regular(x, y) == pytest.approx(exact, abs=5e-3)
        assert grid_green.robin((0.4, 0.0)) == pytest.approx(robin_disk((0.4, 0.0)), abs=5e-3)

    def test_grid_green_outside(self, disk_green):
        """Points within a cell of the wall are rejected."""
        with pytest.raises(OutsideDomain):
            GridGreen(disk_green).regular((0.999, 0.0), (0.0, 0.0))

    def test_grid_green_cache_is_bounded(self, disk_green):
        """Only the most recently used sources stay cached."""
        grid_green = GridGreen(disk_green, max_entries=3)
        sources = [(0.1 * k, 0.0) for k in range(5)]
        grid_green.prefetch(np.array(sources))
        assert grid_green.cached == 3
        grid_green.regular((0.0, 0.2), sources[2])
        grid_green.prefetch(np.array([(0.0, 0.5)]))
        assert grid_green.cached == 3
        # the source just read survives; the oldest of the batch goes
        assert (0.2, 0.0) in grid_green._cache
        assert (0.3, 0.0) not in grid_green._cache

    def test_grid_green_cache_size(self, disk_green):
        """The cache needs room for at least one source."""
        with pytest.raises(ValueError):
            GridGreen(disk_green, max_entries=0)

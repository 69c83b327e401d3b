"""Tests for the asymptotics module."""

import math
from dataclasses import replace

import numpy as np
import pytest

from vortex_patches import errors
from vortex_patches.asymptotics import (
    AsymptoticsReport,
    centroid,
    core_energy,
    energy_bounds_check,
    energy_slope,
    epsilon_scale,
    evaluate_invariants,
    measure_patch,
    mu_slope,
    patch_diameter,
    perimeter,
    roundness,
    sweep_lambda,
)
from vortex_patches.domain import ScalarField


@pytest.fixture(scope="module")
def sweep(solver_config, disk_green) -> AsymptoticsReport:
    return sweep_lambda(solver_config, [80.0, 60.0], green=disk_green)


class TestScales:
    """Tests for the scalar helpers."""

    def test_epsilon(self):
        """Radius of the disc of area |κ|/λ."""
        assert epsilon_scale(1.0, 60.0) == pytest.approx(math.sqrt(1.0 / (60.0 * math.pi)))
        assert epsilon_scale(-1.0, 60.0) == epsilon_scale(1.0, 60.0)

    def test_epsilon_invalid(self):
        """λ must be positive and κ nonzero."""
        with pytest.raises(ValueError):
            epsilon_scale(1.0, 0.0)
        with pytest.raises(ValueError):
            epsilon_scale(0.0, 60.0)

    def test_slopes(self):
        """Σκ²/(8π) and Σκ²/(4π)."""
        assert energy_slope(1.0, -1.0) == pytest.approx(1.0 / (4.0 * math.pi))
        assert mu_slope(1.0, -1.0) == pytest.approx(2.0 * energy_slope(1.0, -1.0))

    def test_perimeter(self):
        """Cell-edge boundary length."""
        cells = np.zeros((6, 6), dtype=bool)
        cells[2, 2] = True
        assert perimeter(cells, 0.5) == pytest.approx(2.0)
        cells[2:4, 2:4] = True
        assert perimeter(cells, 0.5) == pytest.approx(4.0)


class TestPatchShape:
    """Tests for shape measurements of the desk steady patch."""

    def test_centroid_near_minimum(self, steady_patch, kr_minimum):
        """Each centroid lies within a few cells of its point vortex."""
        h = steady_patch.grid.h
        c1 = centroid(steady_patch.omega1, 1.0)
        c2 = centroid(steady_patch.omega2, -1.0)
        assert math.dist(c1, kr_minimum.point.x1) < 3 * h
        assert math.dist(c2, kr_minimum.point.x2) < 3 * h

    def test_centroid_wrong_circulation(self, steady_patch):
        """The circulation must match κ."""
        with pytest.raises(errors.CirculationMismatch):
            centroid(steady_patch.omega1, 2.0)

    def test_diameter(self, steady_patch):
        """diam/ε sits in the expected window."""
        eps = epsilon_scale(1.0, steady_patch.lam)
        assert 1.5 <= patch_diameter(steady_patch.omega1) / eps <= 4.0
        assert 1.5 <= patch_diameter(steady_patch.omega2) / eps <= 4.0

    def test_empty(self, disk_grid):
        """Empty components have no diameter or roundness."""
        with pytest.raises(errors.EmptySupport):
            patch_diameter(ScalarField.zeros(disk_grid))
        with pytest.raises(errors.EmptySupport):
            roundness(ScalarField.zeros(disk_grid))

    def test_round(self, steady_patch):
        """Patches are close to discs."""
        for component in (steady_patch.omega1, steady_patch.omega2):
            assert 0.8 < roundness(component) < 1.2

    def test_energy_bounds(self, steady_patch, disk_green):
        """The maximizer beats its test function."""
        bounds = energy_bounds_check(steady_patch, disk_green)
        assert bounds.passed
        assert math.isfinite(bounds.mu_bound_lhs)
        assert bounds.mu_bound_rhs > 0

    def test_core_energy(self, steady_patch):
        """The energy above the patch levels is positive."""
        assert 0 < core_energy(steady_patch) < steady_patch.energy

    def test_row(self, steady_patch, disk_green):
        """A measured row carries the CSV columns."""
        row = measure_patch(steady_patch, disk_green)
        data = row.to_dict()
        assert data["lambda"] == 60.0
        assert data["n"] == 128
        assert data["cells1"] == 68
        for key in ("E", "T_core", "E_lower_bound_testfn", "centroid1_x", "centroid2_y"):
            assert key in data
        assert data["dist_centroid_to_KRmin"] == max(row.dist1, row.dist2)
        assert data["failed"] is False
        assert not row.under_resolved


class TestSweep:
    """Tests for sweep_lambda."""

    def test_rows_sorted(self, sweep):
        """Rows come back in increasing λ."""
        assert [row.lam for row in sweep.rows] == [60.0, 80.0]
        assert not any(row.failed for row in sweep.rows)

    def test_invariants(self, sweep):
        """Invariants that hold on any grid."""
        for name in ("energy_above_test_function", "mu_positive", "rows_finite"):
            assert sweep.invariants[name] is True

    def test_energy_grows(self, sweep):
        """E increases with λ."""
        low, high = sweep.rows
        assert high.energy > low.energy
        assert sweep.energy_slope > 0
        assert sweep.summary()["energy_slope_expected"] == energy_slope(1.0, -1.0)

    def test_centroid_and_diameter(self, sweep):
        """The top-λ centroid is within three cells and diameters shrink with λ."""
        assert sweep.invariants["centroid_within_3h"] is True
        assert sweep.invariants["diameter_decreasing"] is True
        lo, hi = sweep.diameter_ratio_range()
        assert 1.5 <= lo <= hi <= 4.0

    def test_growing_diameter_flagged(self, sweep):
        """A diameter that grows with λ fails the check."""
        low, high = sweep.rows
        rows = [low, replace(high, diam1=1.1 * low.diam1)]
        report = AsymptoticsReport(rows)
        evaluate_invariants(report, 1.0, -1.0)
        assert report.invariants["diameter_decreasing"] is False
        assert "diameter_decreasing" in report.failures

    def test_far_centroid_flagged(self, sweep):
        """A top-λ centroid more than 3h from the point vortex fails."""
        low, high = sweep.rows
        rows = [low, replace(high, dist1=3.5 * high.h)]
        report = AsymptoticsReport(rows)
        evaluate_invariants(report, 1.0, -1.0)
        assert report.invariants["centroid_within_3h"] is False

    def test_single_row(self, sweep):
        """One row checks the centroid but cannot compare diameters."""
        report = AsymptoticsReport(sweep.rows[:1])
        evaluate_invariants(report, 1.0, -1.0)
        assert report.invariants["centroid_within_3h"] is not None
        assert report.invariants["diameter_decreasing"] is None

    def test_threads(self, sweep, solver_config, disk_green):
        """Parallel rows give the same numbers."""
        parallel = sweep_lambda(solver_config, [60.0, 80.0], green=disk_green, threads=2)
        assert [row.energy for row in parallel.rows] == [row.energy for row in sweep.rows]

    def test_failed_row(self, solver_config, disk_green):
        """A failing λ is recorded and the sweep continues."""
        report = sweep_lambda(solver_config, [10.0, 60.0], green=disk_green)
        bad, good = report.rows
        assert bad.failed
        assert bad.error.startswith("InfeasibleArea")
        assert not good.failed
        assert report.failures[0].startswith("lambda=10.0: InfeasibleArea")
        assert not report.passed
        assert report.invariants["energy_slope"] is None

    def test_empty(self, solver_config):
        """At least one λ is needed."""
        with pytest.raises(ValueError):
            sweep_lambda(solver_config, [])

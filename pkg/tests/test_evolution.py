"""Tests for the evolution module."""

import math

import numpy as np
import pytest

from vortex_patches.domain import Grid, ScalarField
from vortex_patches.errors import CFLViolation, NonDiskDomain, SupportLeavesDomain
from vortex_patches.evolution import (
    AreaPreservingFlow,
    LocalMaxResult,
    RotatePatchPair,
    TranslatePatch,
    advance,
    bump_flow,
    flow_map,
    initial_state,
    local_max_test,
    parse_perturbation,
    patch_turnover,
    perturb,
    radial_patch,
    random_rearrangement,
    riesz_check,
    same_histogram,
    self_drift,
    stability_probe,
    step,
    tracked_levels,
    turnover_time,
)
from vortex_patches.steady import SteadyPatch, rank_select


def ellipse_candidate(base: SteadyPatch, aspect: float) -> ScalarField:
    """Each component re-packed as an ellipse with the given aspect around its ball centre."""
    grid = base.grid
    xx, yy = grid.mesh
    values = np.zeros(grid.nx * grid.ny)
    for component, _, sign, _, ball in base.components():
        n = int(np.count_nonzero(component.support))
        dx, dy = xx - ball.center[0], yy - ball.center[1]
        score = -((dx / aspect) ** 2 + (dy * aspect) ** 2)
        candidates = np.flatnonzero(grid.ball_mask(ball))
        values[rank_select(score.ravel()[candidates], candidates, n).chosen] = sign * base.lam
    return ScalarField(grid, values.reshape(grid.shape))


def smooth_pair(grid: Grid) -> ScalarField:
    """A smooth positive bump and a smooth negative bump, zero outside the domain."""
    xx, yy = grid.mesh
    bump = 5.0 * np.exp(-((xx - 0.3) ** 2 + yy**2) / 0.02)
    bump -= 5.0 * np.exp(-((xx + 0.3) ** 2 + yy**2) / 0.02)
    return ScalarField(grid, np.where(grid.inside, bump, 0.0))


class TestFlowMap:
    """Tests for RK4 flow maps."""

    def test_rotation(self):
        """dx/ds = (y, -x) turns (1, 0) to (0, -1) in a quarter period."""
        def turn(x):
            return np.stack((x[:, 1], -x[:, 0]), axis=-1)

        out = flow_map(np.array([[1.0, 0.0]]), turn, math.pi / 2)
        assert out[0] == pytest.approx([0.0, -1.0], abs=1e-5)

    def test_zero_time(self):
        """Time zero is the identity."""
        points = np.array([[0.1, 0.2], [0.3, -0.4]])
        assert np.array_equal(flow_map(points, bump_flow((0.0, 0.0), 1.0), 0.0), points)

    def test_bump_flow_keeps_radius(self):
        """A radial stream function moves points on circles."""
        points = np.array([[0.3, 0.0], [0.0, -0.5]])
        out = flow_map(points, bump_flow((0.0, 0.0), 1.0, 2.0), 1.0)
        assert np.hypot(*out.T) == pytest.approx([0.3, 0.5], abs=1e-5)
        assert not np.allclose(out, points)

    def test_bump_flow_support(self):
        """No motion outside the bump."""
        field_ = bump_flow((0.0, 0.0), 0.5)
        assert np.all(field_(np.array([[0.6, 0.0]])) == 0.0)

    def test_backwards(self):
        """Running the flow back returns the start."""
        field_ = bump_flow((0.1, 0.0), 0.8)
        points = np.array([[0.2, 0.1]])
        there = flow_map(points, field_, 0.5)
        assert flow_map(there, field_, -0.5) == pytest.approx(points, abs=1e-6)


class TestPerturbations:
    """Tests for perturbation objects and rearrangements."""

    def test_integer_shift(self, steady_patch):
        """Whole-cell displacements move cells directly."""
        h = steady_patch.grid.h
        assert TranslatePatch(1, (h, 0.0)).integer_shift(steady_patch) == (1, 0, 1)
        assert TranslatePatch(2, (0.0, -2 * h)).integer_shift(steady_patch) == (2, -2, 0)
        assert TranslatePatch(1, (h / 2, 0.0)).integer_shift(steady_patch) is None

    def test_bad_index(self):
        """Components are numbered 1 and 2."""
        with pytest.raises(ValueError):
            TranslatePatch(3, (0.0, 0.0))

    def test_parse(self, steady_patch):
        """kind:value strings."""
        translate = parse_perturbation("translate:0.01", steady_patch)
        assert isinstance(translate, TranslatePatch)
        assert translate.displacement == (0.01, 0.0)
        rotate = parse_perturbation("rotate:0.1", steady_patch)
        assert isinstance(rotate, RotatePatchPair)
        assert rotate.magnitude == 0.1
        flow = parse_perturbation("flow:0.2", steady_patch)
        assert isinstance(flow, AreaPreservingFlow)
        assert flow.time == 0.2

    @pytest.mark.parametrize("text", ["spin:1", "rotate", "translate:far"])
    def test_parse_invalid(self, steady_patch, text):
        """Unknown kinds and missing numbers."""
        with pytest.raises(ValueError):
            parse_perturbation(text, steady_patch)

    def test_translate(self, steady_patch):
        """A one-cell shift keeps the histogram and changes ω."""
        moved = perturb(steady_patch, TranslatePatch(1, (steady_patch.grid.h, 0.0)))
        assert same_histogram(moved, steady_patch.omega)
        assert moved.values.sum() == pytest.approx(steady_patch.omega.values.sum())
        assert np.count_nonzero(moved.values != steady_patch.omega.values) > 0

    def test_rotate(self, steady_patch):
        """Rotated patches are rearrangements."""
        moved = perturb(steady_patch, RotatePatchPair(0.05))
        assert same_histogram(moved, steady_patch.omega)

    def test_flow(self, steady_patch):
        """Bump-flow transport is a rearrangement."""
        moved = perturb(steady_patch, parse_perturbation("flow:0.1", steady_patch))
        assert same_histogram(moved, steady_patch.omega)

    def test_leaves_domain(self, steady_patch):
        """Shifting past the wall is reported."""
        h = steady_patch.grid.h
        with pytest.raises(SupportLeavesDomain):
            perturb(steady_patch, TranslatePatch(1, (40 * h, 0.0)))

    def test_random_rearrangement(self, steady_patch):
        """Boundary swaps keep the histogram."""
        candidate = random_rearrangement(steady_patch, np.random.default_rng(4))
        assert same_histogram(candidate, steady_patch.omega)


class TestStep:
    """Tests for the semi-Lagrangian step."""

    def test_cfl(self, steady_patch, disk_green):
        """Too large a step is refused."""
        state = initial_state(steady_patch.omega, disk_green, dt=10.0)
        with pytest.raises(CFLViolation):
            step(state, disk_green)

    def test_bounds_and_mass(self, steady_patch, disk_green):
        """Values stay in [-λ, λ] and each sign keeps its circulation."""
        state = initial_state(steady_patch.omega, disk_green)
        assert state.dt > 0
        for _ in range(3):
            state = step(state, disk_green)
        values = state.omega.values
        cell = state.omega.grid.cell_area
        assert values.min() >= -60.0
        assert values.max() <= 60.0
        positive = np.sum(np.maximum(values, 0.0)) * cell
        negative = np.sum(np.maximum(-values, 0.0)) * cell
        assert positive == pytest.approx(state.positive_mass, rel=1e-10)
        assert negative == pytest.approx(state.negative_mass, rel=1e-10)
        assert len(state.ledger) == 4
        assert state.t == pytest.approx(3 * state.dt)

    def test_zero_field(self, disk_grid, disk_green):
        """Nothing moves but time advances."""
        state = initial_state(ScalarField.zeros(disk_grid), disk_green)
        after = step(state, disk_green)
        assert after.t == pytest.approx(state.dt)
        assert after.omega.max_abs() == 0.0

    def test_tracked_levels(self, steady_patch):
        """A patch pair splits into one level per sign."""
        levels = tracked_levels(steady_patch.omega)
        assert levels is not None
        assert sorted(level.value for level in levels) == [-60.0, 60.0]
        assert sum(level.cells for level in levels) == np.count_nonzero(steady_patch.omega.values)

    def test_tracked_keeps_histogram(self, steady_patch, disk_green):
        """Tracked levels keep their cell counts exactly."""
        state = initial_state(steady_patch.omega, disk_green)
        assert state.tracked
        for _ in range(3):
            state = step(state, disk_green)
        assert same_histogram(state.omega, steady_patch.omega)
        assert state.ledger[-1].mass == pytest.approx(state.ledger[0].mass, abs=1e-12)

    def test_smooth_field_not_tracked(self, disk_grid):
        """Fields with many values are transported directly."""
        assert tracked_levels(smooth_pair(disk_grid)) is None

    def test_smooth_field_bounds_and_mass(self, disk_grid, disk_green):
        """Direct transport stays within the bounds and keeps each sign's circulation."""
        omega = smooth_pair(disk_grid)
        state = initial_state(omega, disk_green)
        assert not state.tracked
        for _ in range(3):
            state = step(state, disk_green)
        values = state.omega.values
        assert values.max() <= omega.values.max()
        assert values.min() >= omega.values.min()
        cell = disk_grid.cell_area
        positive = np.sum(np.maximum(values, 0.0)) * cell
        negative = np.sum(np.maximum(-values, 0.0)) * cell
        assert positive == pytest.approx(state.positive_mass, rel=1e-9)
        assert negative == pytest.approx(state.negative_mass, rel=1e-9)

    def test_tracking_off(self, steady_patch, disk_green):
        """``track=False`` transports a patch like any other field."""
        state = initial_state(steady_patch.omega, disk_green, track=False)
        assert not state.tracked
        state = step(state, disk_green)
        assert np.abs(state.omega.values).max() <= 60.0

    def test_advance(self, steady_patch, disk_green):
        """``advance`` lands exactly on the requested time."""
        state = advance(initial_state(steady_patch.omega, disk_green), disk_green, 0.01)
        assert state.t == pytest.approx(0.01)
        assert len(state.ledger) >= 2


class TestDrift:
    """Tests for the drift of fields that should not move."""

    def test_patch_turnover(self, steady_patch):
        """Computed from the cells, it matches the configured circulation closely."""
        assert patch_turnover(steady_patch.omega) == pytest.approx(
            turnover_time(steady_patch), rel=0.01
        )

    def test_zero_field_turnover(self, disk_grid):
        """A zero field has no turnover time."""
        with pytest.raises(ValueError):
            patch_turnover(ScalarField.zeros(disk_grid))

    def test_radial_patch(self, disk_grid, disk_green):
        """A round patch of radius 19 cells moves under 1% of its mass per turnover."""
        omega = radial_patch(disk_grid, 0.3, 1.0)
        report = self_drift(omega, disk_green)
        assert report.l1_fraction <= 0.01
        assert report.energy_drift <= 0.02
        assert report.mass_drift < 1e-12
        assert report.to_dict()["steps"] == report.steps > 0

    def test_steady_patch(self, steady_patch, disk_grid, disk_green):
        """The steady pair drifts at most five times as much as a round patch of its size."""
        cells = int(np.count_nonzero(steady_patch.omega1.support))
        radius = math.sqrt(cells / math.pi) * disk_grid.h
        round_patch = self_drift(radial_patch(disk_grid, radius, 60.0), disk_green)
        pair = self_drift(steady_patch.omega, disk_green)
        total = np.count_nonzero(steady_patch.omega.values)
        # one cell moved costs two cells of L1
        quantum = 2.0 / total
        assert pair.l1_fraction <= 5.0 * max(round_patch.l1_fraction, quantum)
        assert pair.energy_drift <= 0.02

    def test_bad_turnovers(self, steady_patch, disk_green):
        """The horizon must be positive."""
        with pytest.raises(ValueError):
            self_drift(steady_patch.omega, disk_green, 0.0)


class TestStability:
    """Tests for the finite-horizon stability probe."""

    def test_turnover(self, steady_patch):
        """4π|Ω₁|/|κ₁|."""
        area = 68 * steady_patch.grid.cell_area
        assert turnover_time(steady_patch) == pytest.approx(4 * math.pi * area)

    def test_base_patch(self, steady_patch, disk_green):
        """The unperturbed patch stays close and conserves mass."""
        report = stability_probe(steady_patch, None, 0.1, disk_green)
        assert len(report.times) == 3
        assert report.l1[0] == 0.0
        assert report.mass_drift < 1e-9
        assert report.snapshots[0][0] == 0.0
        data = report.to_dict()
        assert data["perturbation"] == "none"
        assert "evidence" in data
        assert len(report.rows()) == 3

    def test_translated(self, steady_patch, disk_green):
        """A shifted patch starts at a positive distance."""
        h = steady_patch.grid.h
        report = stability_probe(steady_patch, TranslatePatch(1, (h, 0.0)), 0.05, disk_green)
        assert report.initial_distance > 0
        assert report.perturbation == "translate1"
        assert report.magnitude == pytest.approx(h)
        assert report.ratio >= 1.0


class TestLocalMax:
    """Tests for the level-set comparison and the rearrangement check."""

    def test_base_is_its_own_image(self, steady_patch, disk_green):
        """With the base as candidate the chain closes."""
        result = local_max_test(steady_patch, steady_patch.omega, disk_green)
        assert result.chain_holds
        assert result.distance == 0.0
        assert result.to_dict()["chain_holds"] is True

    def test_not_a_rearrangement(self, steady_patch, disk_green):
        """Candidates must share the base histogram."""
        with pytest.raises(ValueError):
            local_max_test(steady_patch, 0.5 * steady_patch.omega, disk_green)

    def test_random_candidate(self, steady_patch, disk_green):
        """The level-set image never loses energy."""
        candidate = random_rearrangement(steady_patch, np.random.default_rng(7))
        result = local_max_test(steady_patch, candidate, disk_green)
        assert result.candidate_below_bar
        assert result.distance > 0

    def test_riesz(self, steady_patch):
        """Packing an elongated component into a disc raises its self-interaction."""
        report = riesz_check(steady_patch, ellipse_candidate(steady_patch, 2.0))
        assert report.passed
        assert all(r > c for c, r in zip(report.candidate, report.rearranged, strict=True))

    def test_riesz_disk_only(self, square_patch):
        """The rearrangement check needs the unit disk."""
        with pytest.raises(NonDiskDomain):
            riesz_check(square_patch, square_patch.omega)

    def test_riesz_leaves_ball(self, steady_patch):
        """Candidate components must stay in their balls."""
        h = steady_patch.grid.h
        candidate = perturb(steady_patch, TranslatePatch(1, (10 * h, 0.0)))
        with pytest.raises(ValueError):
            riesz_check(steady_patch, candidate)

    def test_candidate_leg_has_no_tolerance(self):
        """Only rounding separates the candidate from ω̄; the energy tolerance does not apply."""
        result = LocalMaxResult(
            energy_candidate=1.0005,
            energy_bar=1.0,
            energy_base=1.0005,
            nu1=0.0,
            nu2=0.0,
            tolerance=1e-3,
            distance=0.0,
        )
        assert not result.candidate_below_bar
        assert result.bar_below_base
        assert not result.chain_holds
        rounded = LocalMaxResult(1.0 + 1e-13, 1.0, 1.0, 0.0, 0.0, 1e-3, 0.0)
        assert rounded.candidate_below_bar

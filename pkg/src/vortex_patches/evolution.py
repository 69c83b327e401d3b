"""Euler evolution of patches and the stability experiments built on it.

Vorticity is transported by a semi-Lagrangian scheme: departure points are
traced back with a midpoint rule through v = J∇ψ.

A piecewise-constant ω with a few levels (every patch field here) is carried
by one smooth colour function per level. The colour functions are sampled
at the departure points with cubic splines, and each step ω is rebuilt by
giving every level its original number of cells, chosen by rank among the
colour values. Cell counts, and so the cell-value histogram, circulation and
bounds, are exact; the patch edge does not smear.

Any other ω is sampled directly with a cubic spline clipped to the range of
the four surrounding cells, which keeps new values within the old bounds.
The per-sign circulation lost to clipping and at the wall is put back on the
cells with room left below the bounds.
"""

import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from vortex_patches.domain import (
    BoolArray,
    DomainKind,
    FloatArray,
    Grid,
    Point,
    ScalarField,
    cell_centers,
    integrate,
    l1_distance,
)
from vortex_patches.errors import (
    CFLViolation,
    Inapplicable,
    NonDiskDomain,
    SupportLeavesDomain,
)
from vortex_patches.green import (
    TWO_PI,
    GreenOperator,
    StreamFunction,
    energy,
    energy_of,
    log_kernel,
    self_cell_kernel,
    stream,
    velocity,
)
from vortex_patches.steady import SteadyPatch, rank_select

logger = logging.getLogger(__name__)

CFL_LIMIT = 0.5
HISTOGRAM_BINS = 16
MAX_TRACKED_LEVELS = 4
# Gaussian width of the colour functions, in cells
COLOUR_WIDTH = 1.5
ROUNDING_RTOL = 1e-10
_INTEGER_TOL = 1e-9
_COLOUR_TIE = 1e-6

VelocityField = Callable[[FloatArray], FloatArray]


@dataclass(frozen=True)
class LedgerEntry:
    """Diagnostics recorded after each step."""

    t: float
    energy: float
    mass: float
    max_abs: float
    histogram: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class TrackedLevel:
    """One nonzero value of ω, the number of cells holding it, and its colour function."""

    value: float
    cells: int
    colour: FloatArray = field(repr=False)


def colour_function(cells: BoolArray) -> FloatArray:
    """Gaussian-smoothed indicator of ``cells``.

    Smoothing over ``COLOUR_WIDTH`` cells removes the grid staircase from its
    level sets. A step of ``_COLOUR_TIE`` across the edge only breaks exact ties.
    """
    smooth = gaussian_filter(cells.astype(float), COLOUR_WIDTH, mode="constant")
    return smooth + _COLOUR_TIE * (cells - 0.5)


def tracked_levels(omega: ScalarField) -> tuple[TrackedLevel, ...] | None:
    """Split ``omega`` into tracked levels, or None when it has too many values."""
    grid = omega.grid
    values = omega.values
    if np.any(values[~grid.inside] != 0.0):
        return None
    levels = np.unique(values[grid.inside & (values != 0.0)])
    if len(levels) > MAX_TRACKED_LEVELS:
        return None
    out = []
    for value in levels:
        cells = values == value
        count = int(np.count_nonzero(cells))
        out.append(TrackedLevel(float(value), count, colour_function(cells)))
    return tuple(out)


def threshold_levels(levels: tuple[TrackedLevel, ...], grid: Grid) -> ScalarField:
    """Give each level its cell count where its colour function ranks highest."""
    inside_cells = np.flatnonzero(grid.inside)
    taken = np.zeros(grid.nx * grid.ny, dtype=bool)
    values = np.zeros(grid.nx * grid.ny)
    for level in levels:
        free = inside_cells[~taken[inside_cells]]
        selection = rank_select(level.colour.ravel()[free], free, level.cells)
        values[selection.chosen] = level.value
        taken[selection.chosen] = True
    return ScalarField(grid, values.reshape(grid.shape))


@dataclass(frozen=True, eq=False)
class EvolutionState:
    """ω at time t with its stream function and the running ledger.

    ``levels`` is None when ω is transported as a general field.
    """

    omega: ScalarField
    t: float
    dt: float
    stream: StreamFunction = field(repr=False)
    lower: float
    upper: float
    positive_mass: float
    negative_mass: float
    ledger: tuple[LedgerEntry, ...] = field(default=(), repr=False)
    levels: tuple[TrackedLevel, ...] | None = field(default=None, repr=False)

    def with_dt(self, dt: float) -> "EvolutionState":
        return replace(self, dt=dt)

    def max_speed(self) -> float:
        u, v = velocity(self.stream)
        return float(np.max(np.hypot(u.values, v.values)))

    @property
    def tracked(self) -> bool:
        return self.levels is not None


def _ledger_entry(
    omega: ScalarField, sf: StreamFunction, t: float, lo: float, hi: float
) -> LedgerEntry:
    inside = omega.values[omega.grid.inside]
    span = (lo, hi) if hi > lo else (lo - 1.0, hi + 1.0)
    counts, _ = np.histogram(inside, bins=HISTOGRAM_BINS, range=span)
    return LedgerEntry(
        t=t,
        energy=energy_of(sf),
        mass=integrate(omega),
        max_abs=omega.max_abs(),
        histogram=tuple(int(c) for c in counts),
    )


def initial_state(
    omega: ScalarField,
    green: GreenOperator,
    *,
    cfl: float = 0.4,
    dt: float | None = None,
    track: bool = True,
) -> EvolutionState:
    """Start an evolution from ``omega``; ``dt`` defaults to cfl·h/‖v‖∞.

    With ``track`` a piecewise-constant ω with at most ``MAX_TRACKED_LEVELS``
    nonzero values is carried by colour functions.
    """
    sf = stream(green, omega)
    grid = omega.grid
    lo = min(0.0, float(omega.values.min()))
    hi = max(0.0, float(omega.values.max()))
    levels = tracked_levels(omega) if track else None
    if track and levels is None:
        logger.debug("omega has more than %d values; transporting it directly", MAX_TRACKED_LEVELS)
    state = EvolutionState(
        omega=omega,
        t=0.0,
        dt=0.0,
        stream=sf,
        lower=lo,
        upper=hi,
        positive_mass=float(np.sum(np.maximum(omega.values, 0.0))) * grid.cell_area,
        negative_mass=float(np.sum(np.maximum(-omega.values, 0.0))) * grid.cell_area,
        levels=levels,
    )
    if dt is None:
        speed = state.max_speed()
        dt = cfl * grid.h / speed if speed > 0 else cfl * grid.h
    return replace(state, dt=dt, ledger=(_ledger_entry(omega, sf, 0.0, lo, hi),))


def _grid_coordinates(grid: Grid, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
    return (y - grid.y0) / grid.h - 0.5, (x - grid.x0) / grid.h - 0.5


def _sample(values: FloatArray, grid: Grid, x: FloatArray, y: FloatArray) -> FloatArray:
    """Bilinear interpolation of a cell-centred array at physical points."""
    row, col = _grid_coordinates(grid, x, y)
    return map_coordinates(values, [row, col], order=1, mode="constant", cval=0.0)


def _sample_cubic(values: FloatArray, grid: Grid, x: FloatArray, y: FloatArray) -> FloatArray:
    row, col = _grid_coordinates(grid, x, y)
    return map_coordinates(values, [row, col], order=3, mode="nearest")


def _sample_monotone(values: FloatArray, grid: Grid, x: FloatArray, y: FloatArray) -> FloatArray:
    """Cubic interpolation clipped to the range of the 2×2 stencil around each point."""
    row, col = _grid_coordinates(grid, x, y)
    ny, nx = values.shape
    i = np.clip(np.floor(row).astype(int), 0, ny - 2)
    j = np.clip(np.floor(col).astype(int), 0, nx - 2)
    corners = (values[i, j], values[i + 1, j], values[i, j + 1], values[i + 1, j + 1])
    lo = np.minimum.reduce(corners)
    hi = np.maximum.reduce(corners)
    cubic = map_coordinates(values, [row, col], order=3, mode="nearest")
    return np.clip(cubic, lo, hi)


def _restore_mass(part: FloatArray, target: float, cap: float, cell_area: float) -> FloatArray:
    """Rescale a nonnegative part to carry ``target`` while staying within [0, cap]."""
    current = float(np.sum(part)) * cell_area
    gap = (target - current) / cell_area
    if gap == 0.0 or cap <= 0.0:
        return part
    live = part > 0.0
    weights = np.where(live, part * (cap - part), 0.0)
    total = float(np.sum(weights))
    if total <= 0.0 or abs(gap) / total * cap > 1.0:
        # fall back to the room available on the side we move towards
        weights = np.where(live, cap - part if gap > 0 else part, 0.0)
        total = float(np.sum(weights))
        if total <= 0.0:
            return part
    change = gap * weights / total
    return np.clip(part + change, 0.0, cap)


def step(state: EvolutionState, green: GreenOperator) -> EvolutionState:
    """Advance ω by one time step of length ``state.dt``.

    Raises:
        CFLViolation: dt·‖v‖∞ exceeds half a cell.
    """
    omega = state.omega
    grid = omega.grid
    dt = state.dt
    u, v = velocity(state.stream)
    speed = float(np.max(np.hypot(u.values, v.values)))
    if dt * speed > CFL_LIMIT * grid.h:
        raise CFLViolation(
            f"dt={dt:.3e} moves {dt * speed / grid.h:.3f} cells per step (limit {CFL_LIMIT})"
        )
    if speed == 0.0:
        entry = _ledger_entry(omega, state.stream, state.t + dt, state.lower, state.upper)
        return replace(state, t=state.t + dt, ledger=state.ledger + (entry,))
    domain = grid.domain
    xx, yy = grid.mesh
    mx, my = domain.reflect(xx - 0.5 * dt * u.values, yy - 0.5 * dt * v.values)
    um = _sample(u.values, grid, mx, my)
    vm = _sample(v.values, grid, mx, my)
    dx, dy = domain.reflect(xx - dt * um, yy - dt * vm)
    levels = state.levels
    if levels is not None:
        levels = tuple(
            replace(level, colour=_sample_cubic(level.colour, grid, dx, dy)) for level in levels
        )
        new_omega = threshold_levels(levels, grid)
    else:
        moved = np.clip(_sample_monotone(omega.values, grid, dx, dy), state.lower, state.upper)
        moved = np.where(grid.inside, moved, 0.0)
        cell = grid.cell_area
        positive = _restore_mass(np.maximum(moved, 0.0), state.positive_mass, state.upper, cell)
        negative = _restore_mass(np.maximum(-moved, 0.0), state.negative_mass, -state.lower, cell)
        new_omega = ScalarField(grid, positive - negative)
    sf = stream(green, new_omega)
    t = state.t + dt
    entry = _ledger_entry(new_omega, sf, t, state.lower, state.upper)
    return replace(
        state, omega=new_omega, t=t, stream=sf, ledger=state.ledger + (entry,), levels=levels
    )


def advance(
    state: EvolutionState, green: GreenOperator, duration: float, cfl: float = 0.4
) -> EvolutionState:
    """Run ``step`` for ``duration`` with the step re-chosen from the current velocity."""
    if duration <= 0.0:
        return state
    h = state.omega.grid.h
    substeps = max(1, math.ceil(duration * state.max_speed() / (cfl * h)))
    state = state.with_dt(duration / substeps)
    for _ in range(substeps):
        state = step(state, green)
    return state


def patch_turnover(omega: ScalarField) -> float:
    """4π |Ω| / |κ| of the positive part (the negative part when there is none)."""
    part = np.maximum(omega.values, 0.0)
    if not np.any(part):
        part = np.maximum(-omega.values, 0.0)
    if not np.any(part):
        raise ValueError("a zero field has no turnover time")
    grid = omega.grid
    area = float(np.count_nonzero(part)) * grid.cell_area
    return 4.0 * math.pi * area / (float(np.sum(part)) * grid.cell_area)


@dataclass(frozen=True)
class DriftReport:
    """How far an evolved field moved from its start, per turnover."""

    turnovers: float
    steps: int
    l1_fraction: float  # L1(ω_t, ω_0) / ‖ω_0‖_L1
    energy_drift: float
    mass_drift: float

    def to_dict(self) -> dict[str, object]:
        return {
            "turnovers": self.turnovers,
            "steps": self.steps,
            "l1_fraction": self.l1_fraction,
            "energy_drift": self.energy_drift,
            "mass_drift": self.mass_drift,
        }


def self_drift(
    omega: ScalarField, green: GreenOperator, turnovers: float = 1.0, cfl: float = 0.4
) -> DriftReport:
    """Evolve ``omega`` for whole turnovers and measure the drift at the end of each.

    Reports the largest per-turnover values. A steady ω drifts only by
    discretization error.
    """
    if turnovers <= 0:
        raise ValueError("turnovers must be positive")
    period = patch_turnover(omega)
    total = float(np.sum(np.abs(omega.values))) * omega.grid.cell_area
    state = initial_state(omega, green, cfl=cfl)
    e0 = state.ledger[0].energy
    m0 = state.ledger[0].mass
    count = math.ceil(turnovers)
    l1 = drift = mass = 0.0
    for k in range(1, count + 1):
        length = min(float(k), turnovers) - min(float(k - 1), turnovers)
        state = advance(state, green, length * period, cfl)
        l1 = max(l1, l1_distance(state.omega, omega) / total / k)
        drift = max(drift, abs(state.ledger[-1].energy - e0) / abs(e0) / k if e0 else 0.0)
        mass = max(mass, abs(state.ledger[-1].mass - m0))
    report = DriftReport(turnovers, len(state.ledger) - 1, l1, drift, mass)
    logger.info("self drift over %g turnovers: L1 %.3e, energy %.3e", turnovers, l1, drift)
    return report


def radial_patch(grid: Grid, radius: float, lam: float, center: Point | None = None) -> ScalarField:
    """λ on the cells whose centres lie within ``radius`` of ``center`` (domain centre)."""
    cx, cy = grid.domain.center if center is None else center
    xx, yy = grid.mesh
    cells = grid.inside & (np.hypot(xx - cx, yy - cy) < radius)
    return ScalarField(grid, np.where(cells, lam, 0.0))


def turnover_time(base: SteadyPatch) -> float:
    """4π |Ω₁| / |κ₁|: the rotation period of a uniform round patch."""
    area = float(np.count_nonzero(base.omega1.support)) * base.grid.cell_area
    return 4.0 * math.pi * area / abs(base.config.kappa1)


def flow_map(points: FloatArray, field_: VelocityField, time: float, steps: int = 32) -> FloatArray:
    """Integrate dx/ds = field_(x) for ``time`` with classical RK4.

    ``points`` has shape ``(m, 2)``; negative ``time`` runs the flow backwards.
    """
    x = np.array(points, dtype=float)
    if time == 0.0:
        return x
    ds = time / steps
    for _ in range(steps):
        k1 = field_(x)
        k2 = field_(x + 0.5 * ds * k1)
        k3 = field_(x + 0.5 * ds * k2)
        k4 = field_(x + ds * k3)
        x = x + (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def bump_flow(center: Point, width: float, amplitude: float = 1.0) -> VelocityField:
    """J∇ξ for the radial bump ξ = a·exp(-1/(1-ρ²)), ρ = |x-c|/width."""

    def field_(x: FloatArray) -> FloatArray:
        d = x - np.asarray(center)
        q = np.sum(d * d, axis=-1) / (width * width)
        inside = q < 1.0
        safe = np.where(inside, q, 0.0)
        value = np.where(inside, np.exp(-1.0 / (1.0 - safe)), 0.0)
        dq = np.where(inside, -value / (1.0 - safe) ** 2, 0.0)
        grad = amplitude * dq[..., None] * 2.0 * d / (width * width)
        return np.stack((grad[..., 1], -grad[..., 0]), axis=-1)

    return field_


class Perturbation(ABC):
    """A rearrangement of a steady patch."""

    @property
    @abstractmethod
    def name(self) -> str:
        """Short label used in reports."""
        pass

    @property
    @abstractmethod
    def magnitude(self) -> float:
        pass

    @abstractmethod
    def pullback(self, base: SteadyPatch) -> Callable[[int, FloatArray], FloatArray]:
        """Map (component index, target points) to the points they come from."""
        pass

    def integer_shift(self, base: SteadyPatch) -> tuple[int, int, int] | None:
        """``(component, dy, dx)`` when the perturbation is an exact cell shift."""
        return None


@dataclass(frozen=True)
class TranslatePatch(Perturbation):
    """Move one component (1 or 2) by ``displacement``."""

    index: int
    displacement: Point

    def __post_init__(self) -> None:
        if self.index not in (1, 2):
            raise ValueError(f"component index must be 1 or 2, got {self.index}")

    @property
    def name(self) -> str:
        return f"translate{self.index}"

    @property
    def magnitude(self) -> float:
        return math.hypot(*self.displacement)

    def pullback(self, base: SteadyPatch) -> Callable[[int, FloatArray], FloatArray]:
        shift = np.asarray(self.displacement)

        def back(component: int, points: FloatArray) -> FloatArray:
            return points - shift if component == self.index else points

        return back

    def integer_shift(self, base: SteadyPatch) -> tuple[int, int, int] | None:
        cells = np.asarray(self.displacement) / base.grid.h
        rounded = np.round(cells)
        if np.all(np.abs(cells - rounded) < _INTEGER_TOL):
            return self.index, int(rounded[1]), int(rounded[0])
        return None


@dataclass(frozen=True)
class RotatePatchPair(Perturbation):
    """Rotate both components by ``angle`` about the domain centre."""

    angle: float

    @property
    def name(self) -> str:
        return "rotate"

    @property
    def magnitude(self) -> float:
        return abs(self.angle)

    def pullback(self, base: SteadyPatch) -> Callable[[int, FloatArray], FloatArray]:
        c, s = math.cos(-self.angle), math.sin(-self.angle)
        center = np.asarray(base.grid.domain.center)

        def back(component: int, points: FloatArray) -> FloatArray:
            d = points - center
            turned = (c * d[:, 0] - s * d[:, 1], s * d[:, 0] + c * d[:, 1])
            return center + np.stack(turned, axis=-1)

        return back


@dataclass(frozen=True)
class AreaPreservingFlow(Perturbation):
    """Transport ω for time ``time`` along J∇ξ of a bump of ``width`` at ``center``."""

    center: Point
    width: float
    amplitude: float = 1.0
    time: float = 0.1
    steps: int = 32

    @property
    def name(self) -> str:
        return "flow"

    @property
    def magnitude(self) -> float:
        return abs(self.amplitude * self.time)

    def pullback(self, base: SteadyPatch) -> Callable[[int, FloatArray], FloatArray]:
        field_ = bump_flow(self.center, self.width, self.amplitude)

        def back(component: int, points: FloatArray) -> FloatArray:
            return flow_map(points, field_, -self.time, self.steps)

        return back


def parse_perturbation(text: str, base: SteadyPatch) -> Perturbation:
    """Build a perturbation from ``kind:value``.

    ``translate:d`` moves the first component by d along x, ``rotate:a``
    rotates the pair by a radians, ``flow:s`` runs a bump flow centred half a
    patch diameter to the side of the first component for time s.
    """
    kind, _, value = text.partition(":")
    try:
        amount = float(value)
    except ValueError:
        raise ValueError(f"invalid perturbation {text!r}: expected kind:number") from None
    if kind == "translate":
        return TranslatePatch(1, (amount, 0.0))
    if kind == "rotate":
        return RotatePatchPair(amount)
    if kind == "flow":
        cells = cell_centers(base.grid, base.omega1.support)
        center = cells.mean(axis=0)
        radius = float(np.max(np.hypot(*(cells - center).T))) + base.grid.h
        side = (float(center[0]) + radius, float(center[1]))
        return AreaPreservingFlow(side, 2.0 * radius, 1.0, amount)
    raise ValueError(f"unknown perturbation kind {kind!r} (translate, rotate or flow)")


def _shift_cells(cells: BoolArray, grid: Grid, dy: int, dx: int) -> BoolArray:
    iy, ix = np.nonzero(cells)
    iy, ix = iy + dy, ix + dx
    ny, nx = grid.shape
    if np.any((iy < 0) | (iy >= ny) | (ix < 0) | (ix >= nx)) or not np.all(grid.inside[iy, ix]):
        raise SupportLeavesDomain(f"shift by ({dx}, {dy}) cells leaves the domain")
    out = np.zeros(grid.shape, dtype=bool)
    out[iy, ix] = True
    return out


def perturb(base: SteadyPatch, p: Perturbation) -> ScalarField:
    """Rearrange ``base`` by ``p``, keeping its cell-value histogram.

    Exact cell shifts move the support cells. Otherwise each component's
    indicator is sampled at the pulled-back cell centres and re-thresholded
    by rank selection onto the same number of cells.

    Raises:
        SupportLeavesDomain: part of a component would leave the domain.
    """
    grid = base.grid
    lam = base.lam
    taken = np.zeros(grid.shape, dtype=bool)
    values = np.zeros(grid.shape)
    shift = p.integer_shift(base)
    back = p.pullback(base)
    inside_cells = np.flatnonzero(grid.inside)
    # every cell of the bounding box, so transported mass landing outside shows up
    points = cell_centers(grid, np.ones(grid.shape, dtype=bool))
    for index, (component, _, sign, _, _) in enumerate(base.components(), start=1):
        cells = component.support
        n = int(np.count_nonzero(cells))
        if shift is not None:
            moved = (
                _shift_cells(cells, grid, shift[1], shift[2]) if shift[0] == index else cells
            )
        else:
            source = back(index, points)
            score = _sample(cells.astype(float), grid, source[:, 0], source[:, 1])
            if float(np.sum(score[~grid.inside.ravel()])) > 0.5:
                raise SupportLeavesDomain(f"component {index} is transported out of the domain")
            score = score[inside_cells]
            free = ~taken.ravel()[inside_cells]
            selection = rank_select(score[free], inside_cells[free], n)
            moved = np.zeros(grid.nx * grid.ny, dtype=bool)
            moved[selection.chosen] = True
            moved = moved.reshape(grid.shape)
        if np.any(moved & taken):
            raise SupportLeavesDomain("perturbed components overlap")
        taken |= moved
        values[moved] = sign * lam
    return ScalarField(grid, values)


def same_histogram(a: ScalarField, b: ScalarField) -> bool:
    """Equal multisets of cell values."""
    return bool(np.array_equal(np.sort(a.values.ravel()), np.sort(b.values.ravel())))


@dataclass
class StabilityReport:
    """Time series of L1 distance to the base patch over a finite horizon."""

    perturbation: str
    magnitude: float
    turnover: float
    horizon: float
    times: list[float]
    l1: list[float]
    energies: list[float]
    masses: list[float]
    snapshots: list[tuple[float, ScalarField]] = field(default_factory=list, repr=False)
    floor: float = 0.0

    @property
    def initial_distance(self) -> float:
        return self.l1[0]

    @property
    def ratio(self) -> float:
        """max/initial L1 distance; the initial value is floored at one cell of λ."""
        return max(self.l1) / max(self.initial_distance, self.floor)

    @property
    def energy_drift(self) -> float:
        e0 = self.energies[0]
        return max(abs(e - e0) for e in self.energies) / abs(e0) if e0 else 0.0

    @property
    def mass_drift(self) -> float:
        m0 = self.masses[0]
        return max(abs(m - m0) for m in self.masses)

    def rows(self) -> list[dict[str, float]]:
        return [
            {"t": t, "L1": d, "E": e, "mass": m}
            for t, d, e, m in zip(self.times, self.l1, self.energies, self.masses, strict=True)
        ]

    def to_dict(self) -> dict[str, object]:
        return {
            "perturbation": self.perturbation,
            "magnitude": self.magnitude,
            "turnover": self.turnover,
            "horizon_turnovers": self.horizon,
            "initial_distance": self.initial_distance,
            "max_distance": max(self.l1),
            "ratio": self.ratio,
            "energy_drift": self.energy_drift,
            "mass_drift": self.mass_drift,
            "evidence": "finite-horizon numerical evidence, not a proof of stability",
        }


def stability_probe(
    base: SteadyPatch,
    p: Perturbation | None,
    horizon: float,
    green: GreenOperator,
    *,
    cfl: float = 0.4,
    sample_every: float = 0.05,
    snapshot_every: float | None = 0.5,
) -> StabilityReport:
    """Evolve a perturbed patch for ``horizon`` turnovers and track its distance.

    ``p=None`` evolves the base patch itself. The step is re-chosen at every
    sample from the current velocity so the CFL bound holds throughout.
    """
    omega0 = base.omega if p is None else perturb(base, p)
    turnover = turnover_time(base)
    interval = sample_every * turnover
    samples = max(1, round(horizon / sample_every))
    snap_stride = None if snapshot_every is None else max(1, round(snapshot_every / sample_every))
    state = initial_state(omega0, green, cfl=cfl)
    report = StabilityReport(
        perturbation="none" if p is None else p.name,
        magnitude=0.0 if p is None else p.magnitude,
        turnover=turnover,
        horizon=horizon,
        times=[0.0],
        l1=[l1_distance(omega0, base.omega)],
        energies=[energy_of(state.stream)],
        masses=[integrate(omega0)],
        floor=base.lam * base.grid.cell_area,
    )
    if snap_stride is not None:
        report.snapshots.append((0.0, omega0))
    for k in range(1, samples + 1):
        state = advance(state, green, interval, cfl)
        report.times.append(k * interval)
        report.l1.append(l1_distance(state.omega, base.omega))
        report.energies.append(energy_of(state.stream))
        report.masses.append(integrate(state.omega))
        if snap_stride is not None and k % snap_stride == 0:
            report.snapshots.append((k * interval, state.omega))
        logger.debug("t=%.4g L1=%.4e", k * interval, report.l1[-1])
    logger.info(
        "stability probe %s: ratio %.3f, energy drift %.2e over %g turnovers",
        report.perturbation,
        report.ratio,
        report.energy_drift,
        horizon,
    )
    return report


@dataclass(frozen=True)
class LocalMaxResult:
    """Energies along the level-set comparison construction."""

    energy_candidate: float
    energy_bar: float
    energy_base: float
    nu1: float
    nu2: float
    tolerance: float
    distance: float

    @property
    def candidate_below_bar(self) -> bool:
        # ω̄ maximizes the pairing with ψ_candidate, so this leg is exact up to rounding
        slack = ROUNDING_RTOL * max(abs(self.energy_bar), abs(self.energy_candidate))
        return self.energy_candidate <= self.energy_bar + slack

    @property
    def bar_below_base(self) -> bool:
        return self.energy_bar <= self.energy_base + self.tolerance

    @property
    def chain_holds(self) -> bool:
        return self.candidate_below_bar and self.bar_below_base

    def to_dict(self) -> dict[str, object]:
        return {
            "E_candidate": self.energy_candidate,
            "E_bar": self.energy_bar,
            "E_base": self.energy_base,
            "nu1": self.nu1,
            "nu2": self.nu2,
            "tolerance": self.tolerance,
            "l1_distance": self.distance,
            "chain_holds": self.chain_holds,
        }


def _check_two_level(base: SteadyPatch, candidate: ScalarField) -> None:
    if not same_histogram(base.omega, candidate):
        raise ValueError("candidate is not a rearrangement of the base patch")


def local_max_test(
    base: SteadyPatch, candidate: ScalarField, green: GreenOperator
) -> LocalMaxResult:
    """Compare a rearranged candidate with the base through its level-set image.

    ω̄ puts λ on the |Ω₁| cells of D where ψ_candidate is largest and -λ on the
    |Ω₂| cells where it is smallest.

    Raises:
        Inapplicable: a selected level set leaves its ball.
    """
    _check_two_level(base, candidate)
    grid = base.grid
    sf = stream(green, candidate)
    inside_cells = np.flatnonzero(grid.inside)
    values = np.zeros(grid.nx * grid.ny)
    taken = np.zeros(grid.nx * grid.ny, dtype=bool)
    nus = []
    for index, (component, _, sign, _, ball) in enumerate(base.components(), start=1):
        n = int(np.count_nonzero(component.support))
        free = ~taken[inside_cells]
        scores = sign * sf.psi.values.ravel()[inside_cells[free]]
        selection = rank_select(scores, inside_cells[free], n)
        chosen = selection.chosen
        if not np.all(grid.ball_mask(ball).ravel()[chosen]):
            raise Inapplicable(f"level set {index} leaves its ball")
        taken[chosen] = True
        values[chosen] = sign * base.lam
        nus.append(selection.mu)
    bar = ScalarField(grid, values.reshape(grid.shape))
    tolerance = base.lam * grid.cell_area * base.psi.max_abs()
    return LocalMaxResult(
        energy_candidate=energy_of(sf),
        energy_bar=energy(green, bar),
        energy_base=base.energy,
        nu1=nus[0],
        nu2=nus[1],
        tolerance=tolerance,
        distance=l1_distance(candidate, base.omega),
    )


def random_rearrangement(
    base: SteadyPatch, rng: np.random.Generator, max_swaps: int = 3
) -> ScalarField:
    """Swap a few boundary cells of one component with free neighbours in its ball."""
    grid = base.grid
    values = base.omega.values.copy()
    index = int(rng.integers(2))
    component, _, sign, _, ball = base.components()[index]
    cells = component.support
    padded = np.pad(cells, 1)
    ny, nx = grid.shape
    near = np.zeros(grid.shape, dtype=bool)
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        near |= padded[1 + dy : 1 + dy + ny, 1 + dx : 1 + dx + nx]
    rim_out = np.flatnonzero(near & ~cells & grid.ball_mask(ball) & (values == 0.0))
    padded_out = np.pad(~cells, 1, constant_values=True)
    edge = np.zeros(grid.shape, dtype=bool)
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        edge |= padded_out[1 + dy : 1 + dy + ny, 1 + dx : 1 + dx + nx]
    rim_in = np.flatnonzero(edge & cells)
    swaps = int(rng.integers(1, max_swaps + 1))
    swaps = min(swaps, len(rim_in), len(rim_out))
    flat = values.ravel()
    flat[rng.choice(rim_in, size=swaps, replace=False)] = 0.0
    flat[rng.choice(rim_out, size=swaps, replace=False)] = sign * base.lam
    return ScalarField(grid, flat.reshape(grid.shape))


def self_interaction(field_: ScalarField) -> float:
    """∬ ln(1/|x-y|) f(x) f(y) by cell double sum with the cell-averaged diagonal."""
    grid = field_.grid
    cells = field_.support
    points = cell_centers(grid, cells)
    weights = field_.values[cells] * grid.cell_area
    if len(points) == 0:
        return 0.0
    diff = points[:, None, :] - points[None, :, :]
    r = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(r, 1.0)
    kernel = TWO_PI * log_kernel(r)
    np.fill_diagonal(kernel, TWO_PI * self_cell_kernel(grid.h))
    return float(weights @ kernel @ weights)


def ball_rearrangement(component: ScalarField) -> ScalarField:
    """Same number of cells and value, packed around the component's centroid."""
    grid = component.grid
    cells = component.support
    n = int(np.count_nonzero(cells))
    if n == 0:
        return component
    value = float(component.values[cells][0])
    xx, yy = grid.mesh
    weight = np.abs(component.values)
    cx = float(np.sum(weight * xx) / np.sum(weight))
    cy = float(np.sum(weight * yy) / np.sum(weight))
    candidates = np.flatnonzero(grid.inside)
    closeness = -((xx - cx) ** 2 + (yy - cy) ** 2).ravel()[candidates]
    selection = rank_select(closeness, candidates, n)
    values = np.zeros(grid.nx * grid.ny)
    values[selection.chosen] = value
    return ScalarField(grid, values.reshape(grid.shape))


@dataclass(frozen=True)
class RieszReport:
    """Self-interaction of each candidate component against its ball rearrangement."""

    candidate: tuple[float, float]
    rearranged: tuple[float, float]
    rtol: float = 1e-3

    @property
    def holds(self) -> tuple[bool, bool]:
        pairs = zip(self.candidate, self.rearranged, strict=True)
        return tuple(r >= c - self.rtol * abs(r) for c, r in pairs)  # type: ignore[return-value]

    @property
    def passed(self) -> bool:
        return all(self.holds)

    def to_dict(self) -> dict[str, object]:
        return {
            "candidate": list(self.candidate),
            "rearranged": list(self.rearranged),
            "holds": list(self.holds),
        }


def riesz_check(base: SteadyPatch, candidate: ScalarField, rtol: float = 1e-3) -> RieszReport:
    """Check that packing each component into a disc raises its self-interaction.

    Raises:
        NonDiskDomain: the base patch does not live on the unit disk.
    """
    grid = base.grid
    if grid.domain.kind is not DomainKind.DISK:
        raise NonDiskDomain("the rearrangement check runs on the unit disk only")
    if not grid.same_as(candidate.grid):
        raise ValueError("candidate and base live on different grids")
    parts = (
        ScalarField(grid, np.maximum(candidate.values, 0.0)),
        ScalarField(grid, np.minimum(candidate.values, 0.0)),
    )
    for part, (_, _, _, _, ball) in zip(parts, base.components(), strict=True):
        if np.any(part.support & ~grid.ball_mask(ball)):
            raise ValueError("candidate component leaves its ball")
    cand = tuple(self_interaction(part) for part in parts)
    packed = tuple(self_interaction(ball_rearrangement(part)) for part in parts)
    report = RieszReport(cand, packed, rtol)  # type: ignore[arg-type]
    logger.debug("rearrangement check: %s -> %s", cand, packed)
    return report


def random_shape(base: SteadyPatch, rng: np.random.Generator) -> ScalarField:
    """A random rearrangement of each component inside its ball.

    Shapes are ellipses of random aspect and orientation around the ball
    centre, area-matched by rank selection.
    """
    grid = base.grid
    xx, yy = grid.mesh
    values = np.zeros(grid.nx * grid.ny)
    for component, _, sign, _, ball in base.components():
        n = int(np.count_nonzero(component.support))
        aspect = float(rng.uniform(1.0, 4.0))
        theta = float(rng.uniform(0.0, math.pi))
        c, s = math.cos(theta), math.sin(theta)
        dx, dy = xx - ball.center[0], yy - ball.center[1]
        u = c * dx + s * dy
        w = -s * dx + c * dy
        score = -((u / aspect) ** 2 + (w * aspect) ** 2)
        candidates = np.flatnonzero(grid.ball_mask(ball))
        selection = rank_select(score.ravel()[candidates], candidates, n)
        values[selection.chosen] = sign * base.lam
    return ScalarField(grid, values.reshape(grid.shape))

"""Energy maximization over the constrained patch class and steadiness checks.

The maximizer is found by a conditional-gradient fixed point: freeze ψ of
the current iterate, pick for each ball the cells carrying the largest
``sign * ψ`` (the bathtub rearrangement), recompute ψ, repeat. Each step
increases E because E(ω') - E(ω) = <ψ, ω' - ω> + E(ω' - ω) and both terms
are nonnegative.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from vortex_patches.domain import (
    Ball,
    BoolArray,
    FloatArray,
    Grid,
    ScalarField,
    l1_distance,
    support_diameter,
)
from vortex_patches.errors import (
    InfeasibleArea,
    NotConverged,
    ResolutionTooCoarse,
    SupportTouchesBallBoundary,
    VortexPatchError,
)
from vortex_patches.green import (
    GreenOperator,
    StreamFunction,
    energy_of,
    ghosted_gradient,
    require_grid,
    stream,
)
from vortex_patches.kirchhoff_routh import KRMinimum

logger = logging.getLogger(__name__)

TIE_RTOL = 1e-12
_FOUR = ndimage.generate_binary_structure(2, 1)
_DIRECTIONS = ((0, 1), (0, -1), (1, 0), (-1, 0))


class SeedKind(Enum):
    """Initial iterate of the fixed-point iteration."""

    BALLS_AT_CENTERS = "balls"
    CUSTOM = "custom"


@dataclass(frozen=True)
class RankSelection:
    """Outcome of picking the ``n`` best-scored cells."""

    chosen: NDArray[np.int64]  # flat cell indices, best first
    mu: float  # score of the highest-ranked excluded cell
    degenerate: bool  # the cut falls inside a group of equal scores
    ties: int  # cells scoring exactly the cut value


def rank_select(scores: FloatArray, cells: NDArray[np.int64], n: int) -> RankSelection:
    """Choose the ``n`` cells with largest score; ties go to lower cell index.

    When every candidate is chosen there is no excluded cell and ``mu`` is
    the smallest chosen score.
    """
    if n > len(cells):
        raise InfeasibleArea(f"need {n} cells but only {len(cells)} are available")
    if n <= 0 or len(cells) == 0:
        return RankSelection(np.empty(0, dtype=np.int64), math.inf, False, 0)
    order = np.lexsort((cells, -scores))
    chosen = cells[order[:n]]
    if n < len(cells):
        mu = float(scores[order[n]])
        degenerate = bool(scores[order[n - 1]] == scores[order[n]])
    else:
        mu = float(scores[order[n - 1]])
        degenerate = False
    tol = TIE_RTOL * max(1.0, abs(mu))
    ties = int(np.count_nonzero(np.abs(scores - mu) <= tol))
    return RankSelection(chosen, mu, degenerate, ties)


def target_cells(kappa: float, lam: float, grid: Grid) -> int:
    """Number of cells of value λ carrying circulation |κ| (nearest integer)."""
    return int(round(abs(kappa) / (lam * grid.cell_area)))


@dataclass(frozen=True)
class BathtubResult:
    """One component of a bathtub projection."""

    field: ScalarField  # sign * λ on the selected cells
    mu: float
    degenerate: bool
    ties: int

    @property
    def cells(self) -> BoolArray:
        return self.field.support


def bathtub_project(
    psi: ScalarField, ball: Ball, kappa: float, lam: float, sign: int
) -> BathtubResult:
    """Maximize ∫ψω over {0 ≤ sign·ω ≤ λ, ∫ω = κ, supp ω ⊂ ball} on the grid."""
    grid = psi.grid
    candidates = np.flatnonzero(grid.ball_mask(ball))
    n = target_cells(kappa, lam, grid)
    scores = sign * psi.values.ravel()[candidates]
    selection = rank_select(scores, candidates, n)
    values = np.zeros(grid.nx * grid.ny)
    values[selection.chosen] = sign * lam
    return BathtubResult(
        ScalarField(grid, values.reshape(grid.shape)),
        selection.mu,
        selection.degenerate,
        selection.ties,
    )


def held_selection(psi: ScalarField, part: ScalarField, ball: Ball, sign: int) -> BathtubResult:
    """The level data of a selection already made: μ is the best score left out of ``part``.

    With nothing left out of the ball, μ is the smallest score inside ``part``.
    """
    grid = psi.grid
    candidates = np.flatnonzero(grid.ball_mask(ball))
    scores = sign * psi.values.ravel()[candidates]
    chosen = part.support.ravel()[candidates]
    if not np.any(chosen):
        return BathtubResult(part, math.inf, False, 0)
    lowest = float(scores[chosen].min())
    if np.all(chosen):
        mu, degenerate = lowest, False
    else:
        mu = float(scores[~chosen].max())
        degenerate = bool(lowest <= mu)
    tol = TIE_RTOL * max(1.0, abs(mu))
    ties = int(np.count_nonzero(np.abs(scores - mu) <= tol))
    return BathtubResult(part, mu, degenerate, ties)


@dataclass(frozen=True, eq=False)
class SolverConfig:
    """Data of the admissible class K_λ on a grid, plus iteration controls."""

    kappa1: float
    kappa2: float
    b1: Ball
    b2: Ball
    lam: float
    grid: Grid
    max_iters: int = 500
    energy_tol: float = 1e-10
    seed_kind: SeedKind = SeedKind.BALLS_AT_CENTERS
    seed_field: ScalarField | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not (self.kappa1 > 0 > self.kappa2):
            raise ValueError(f"need kappa1 > 0 > kappa2, got ({self.kappa1}, {self.kappa2})")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.b1.is_disjoint(self.b2):
            raise ValueError("the two balls must have disjoint closures")
        self.grid.check_ball(self.b1)
        self.grid.check_ball(self.b2)
        for ball, kappa in ((self.b1, self.kappa1), (self.b2, self.kappa2)):
            n = target_cells(kappa, self.lam, self.grid)
            available = int(np.count_nonzero(self.grid.ball_mask(ball)))
            if n > available:
                raise InfeasibleArea(
                    f"lambda={self.lam} needs {n} cells for kappa={kappa} but the ball "
                    f"at {ball.center} holds {available}"
                )
            if n == 0:
                raise ResolutionTooCoarse(
                    f"kappa={kappa} is less than half a cell at lambda={self.lam}"
                )
        if self.seed_kind is SeedKind.CUSTOM and self.seed_field is None:
            raise ValueError("custom seeds need a seed field")

    @classmethod
    def from_minimum(
        cls, minimum: KRMinimum, lam: float, grid: Grid, **kwargs: object
    ) -> "SolverConfig":
        """Class K_λ built around a Kirchhoff-Routh minimum."""
        return cls(
            kappa1=minimum.point.kappa1,
            kappa2=minimum.point.kappa2,
            b1=minimum.b1,
            b2=minimum.b2,
            lam=lam,
            grid=grid,
            **kwargs,  # type: ignore[arg-type]
        )

    def components(self) -> tuple[tuple[Ball, float, int], tuple[Ball, float, int]]:
        """(ball, κ, sign) for both vortices."""
        return ((self.b1, self.kappa1, 1), (self.b2, self.kappa2, -1))

    def with_lambda(self, lam: float) -> "SolverConfig":
        return replace(self, lam=lam)


@dataclass(frozen=True, eq=False)
class SteadyPatch:
    """Converged (or last) iterate of :func:`solve_steady`."""

    config: SolverConfig
    omega: ScalarField
    omega1: ScalarField
    omega2: ScalarField
    mu1: float
    mu2: float
    stream: StreamFunction
    energy: float
    iterations: int
    converged: bool
    energy_history: tuple[float, ...] = field(repr=False)
    degenerate_ties: bool = False
    tie_counts: tuple[int, int] = (0, 0)

    @property
    def psi(self) -> ScalarField:
        return self.stream.psi

    @property
    def lam(self) -> float:
        return self.config.lam

    @property
    def grid(self) -> Grid:
        return self.omega.grid

    def components(self) -> list[tuple[ScalarField, float, int, float, Ball]]:
        """(ω_i, κ_i, sign_i, μ_i, B_i) for both vortices."""
        return [
            (self.omega1, self.config.kappa1, 1, self.mu1, self.config.b1),
            (self.omega2, self.config.kappa2, -1, self.mu2, self.config.b2),
        ]

    def energy_nondecreasing(self, rtol: float = 1e-12) -> bool:
        history = np.array(self.energy_history)
        slack = rtol * np.maximum(np.abs(history[:-1]), 1.0)
        return bool(np.all(np.diff(history) >= -slack))


def two_ball_seed(cfg: SolverConfig) -> ScalarField:
    """λ(I_{B_ε1(x̄1)} - I_{B_ε2(x̄2)}) on the grid: the cells nearest each centre."""
    grid = cfg.grid
    xx, yy = grid.mesh
    values = np.zeros(grid.shape)
    for ball, kappa, sign in cfg.components():
        closeness = -((xx - ball.center[0]) ** 2 + (yy - ball.center[1]) ** 2)
        psi = ScalarField(grid, sign * closeness)
        values += bathtub_project(psi, ball, kappa, cfg.lam, sign).field.values
    return ScalarField(grid, values)


def random_feasible(cfg: SolverConfig, rng: np.random.Generator) -> ScalarField:
    """A random member of K_λ: uniformly chosen cells in each ball."""
    grid = cfg.grid
    values = np.zeros(grid.nx * grid.ny)
    for ball, kappa, sign in cfg.components():
        cells = np.flatnonzero(grid.ball_mask(ball))
        picked = rng.choice(cells, size=target_cells(kappa, cfg.lam, grid), replace=False)
        values[picked] = sign * cfg.lam
    return ScalarField(grid, values.reshape(grid.shape))


def _touches_ball_boundary(cells: BoolArray, grid: Grid, ball: Ball) -> bool:
    rim = ndimage.binary_dilation(~grid.ball_mask(ball), structure=_FOUR)
    return bool(np.any(cells & rim))


def solve_steady(cfg: SolverConfig, green: GreenOperator) -> SteadyPatch:
    """Maximize E over K_λ by repeated bathtub projections.

    Stops when the selected cells repeat (fixed point or 2-cycle), when the
    relative energy gain drops to ``energy_tol``, or at ``max_iters``.

    Raises:
        NotConverged: iteration cap reached (the last iterate is attached).
        SupportTouchesBallBoundary: a patch ends up next to ∂B_i.
    """
    grid = cfg.grid
    if not green.grid.same_as(grid):
        raise ValueError("solver grid and Green operator grid differ")
    if cfg.seed_kind is SeedKind.CUSTOM:
        assert cfg.seed_field is not None
        omega = cfg.seed_field
    else:
        omega = two_ball_seed(cfg)
    sf = stream(green, omega)
    history = [energy_of(sf)]
    previous: FloatArray | None = None
    iterations = 0
    stalled = cycled = False
    (b1, k1, s1), (b2, k2, s2) = cfg.components()
    while True:
        first = bathtub_project(sf.psi, b1, k1, cfg.lam, s1)
        second = bathtub_project(sf.psi, b2, k2, cfg.lam, s2)
        candidate = first.field.values + second.field.values
        if stalled or np.array_equal(candidate, omega.values):
            converged = True
            break
        if previous is not None and np.array_equal(candidate, previous):
            converged = cycled = True
            logger.info("bathtub iteration entered a 2-cycle; treating as converged")
            break
        if iterations >= cfg.max_iters:
            converged = False
            break
        changed = int(np.count_nonzero(candidate != omega.values))
        previous = omega.values
        omega = ScalarField(grid, candidate)
        sf = stream(green, omega)
        e_new = energy_of(sf)
        iterations += 1
        if e_new < history[-1] - 1e-12 * abs(history[-1]):
            logger.warning(
                "energy decreased at iteration %d: %r -> %r", iterations, history[-1], e_new
            )
        stalled = abs(e_new - history[-1]) <= cfg.energy_tol * abs(history[-1])
        history.append(e_new)
        logger.debug("iteration %d: E=%.12g, %d cells changed", iterations, e_new, changed)

    omega1 = ScalarField(grid, np.where(omega.values > 0, omega.values, 0.0))
    omega2 = ScalarField(grid, np.where(omega.values < 0, omega.values, 0.0))
    if not np.array_equal(candidate, omega.values):
        # the last projection was not accepted; report omega's own levels
        first = held_selection(sf.psi, omega1, b1, s1)
        second = held_selection(sf.psi, omega2, b2, s2)
    patch = SteadyPatch(
        config=cfg,
        omega=omega,
        omega1=omega1,
        omega2=omega2,
        mu1=first.mu,
        mu2=second.mu,
        stream=sf,
        energy=history[-1],
        iterations=iterations,
        converged=converged,
        energy_history=tuple(history),
        degenerate_ties=first.degenerate or second.degenerate or cycled,
        tie_counts=(first.ties, second.ties),
    )
    if not converged:
        raise NotConverged(f"no fixed point after {cfg.max_iters} iterations", patch)
    for component, ball in ((omega1, b1), (omega2, b2)):
        if _touches_ball_boundary(component.support, grid, ball):
            raise SupportTouchesBallBoundary(
                f"patch touches the boundary of the ball at {ball.center}; "
                "increase lambda or delta"
            )
    logger.info(
        "steady patch after %d iterations: E=%.10g mu=(%.6g, %.6g)",
        iterations,
        patch.energy,
        patch.mu1,
        patch.mu2,
    )
    return patch


def _bump(s: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Smooth bump exp(-1/(1-s²)) on |s| < 1 and its derivative."""
    inside = np.abs(s) < 1.0
    safe = np.where(inside, s, 0.0)
    value = np.where(inside, np.exp(-1.0 / (1.0 - safe**2)), 0.0)
    slope = np.where(inside, value * (-2.0 * safe / (1.0 - safe**2) ** 2), 0.0)
    return value, slope


def _probe_bumps(patch: SteadyPatch, count: int) -> list[tuple[float, float, float]]:
    """Centres and half-widths of the tensor-product test functions."""
    grid = patch.grid
    xx, yy = grid.mesh
    diameter = max(
        support_diameter(grid, component.support) for component, *_ in patch.components()
    )
    diameter = max(diameter, grid.h)
    bumps = []
    for scale in (1.0, 2.0, 4.0):
        radius = scale * diameter
        for angle in (None, 0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi):
            for component, *_ in patch.components():
                weight = np.abs(component.values)
                total = float(np.sum(weight))
                if total == 0.0:
                    continue
                cx = float(np.sum(weight * xx)) / total
                cy = float(np.sum(weight * yy)) / total
                if angle is not None:
                    cx += 0.5 * radius * math.cos(angle)
                    cy += 0.5 * radius * math.sin(angle)
                bumps.append((cx, cy, radius))
    return bumps[:count]


def steadiness_residual(patch: SteadyPatch, test_count: int = 30) -> float:
    """Normalized weak-form residual max_ξ |∫ ω ∂(ξ, ψ)|.

    Each term is divided by λ · ‖∇ξ‖∞ · ‖∇ψ‖∞ · |supp ω|.
    """
    grid = patch.grid
    omega = patch.omega.values
    area = float(np.count_nonzero(omega)) * grid.cell_area
    if area == 0.0:
        return 0.0
    dpsi_dx, dpsi_dy = ghosted_gradient(patch.psi)
    grad_psi = float(np.max(np.hypot(dpsi_dx, dpsi_dy)[grid.inside]))
    if grad_psi == 0.0:
        return 0.0
    xx, yy = grid.mesh
    worst = 0.0
    for cx, cy, radius in _probe_bumps(patch, test_count):
        fx, dfx = _bump((xx - cx) / radius)
        fy, dfy = _bump((yy - cy) / radius)
        dxi_dx = dfx * fy / radius
        dxi_dy = fx * dfy / radius
        grad_xi = float(np.max(np.hypot(dxi_dx, dxi_dy)[grid.inside]))
        if grad_xi == 0.0:
            continue
        bracket = dxi_dx * dpsi_dy - dxi_dy * dpsi_dx
        integral = float(np.sum(omega * bracket)) * grid.cell_area
        worst = max(worst, abs(integral) / (patch.lam * grad_xi * grad_psi * area))
    return worst


@dataclass(frozen=True)
class BoundaryGradient:
    """One-sided estimates of ∂(sign·ψ)/∂n across the patch boundaries."""

    minimum: float
    maximum: float
    edges: int
    no_patch: bool = False

    @property
    def passed(self) -> bool:
        """Strictly negative outward derivative on every boundary edge."""
        return not self.no_patch and self.maximum < 0.0

    def to_dict(self) -> dict[str, object]:
        return {
            "min": self.minimum,
            "max": self.maximum,
            "edges": self.edges,
            "no_patch": self.no_patch,
        }


def _patch_edges(cells: BoolArray, grid: Grid) -> list[tuple[BoolArray, tuple[int, int]]]:
    """For each direction, the patch cells whose neighbour is an inside non-patch cell."""
    out = []
    padded_cells = np.pad(cells, 1)
    padded_inside = np.pad(grid.inside, 1)
    ny, nx = grid.shape
    for dy, dx in _DIRECTIONS:
        nbr_cell = padded_cells[1 + dy : 1 + dy + ny, 1 + dx : 1 + dx + nx]
        nbr_inside = padded_inside[1 + dy : 1 + dy + ny, 1 + dx : 1 + dx + nx]
        out.append((cells & nbr_inside & ~nbr_cell, (dy, dx)))
    return out


def boundary_gradient_check(patch: SteadyPatch) -> BoundaryGradient:
    """Estimate the outward normal derivative of sign·ψ on each ∂Ω_i."""
    grid = patch.grid
    if not np.any(patch.omega.values):
        return BoundaryGradient(math.nan, math.nan, 0, no_patch=True)
    psi = np.pad(patch.psi.values, 1)
    ny, nx = grid.shape
    derivatives: list[FloatArray] = []
    for component, _, sign, _, _ in patch.components():
        for edge, (dy, dx) in _patch_edges(component.support, grid):
            outer = psi[1 + dy : 1 + dy + ny, 1 + dx : 1 + dx + nx]
            inner = patch.psi.values
            derivatives.append(sign * (outer[edge] - inner[edge]) / grid.h)
    values = np.concatenate(derivatives) if derivatives else np.empty(0)
    if len(values) == 0:
        return BoundaryGradient(math.nan, math.nan, 0, no_patch=True)
    return BoundaryGradient(float(values.min()), float(values.max()), len(values))


@dataclass(frozen=True)
class LevelSetReport:
    """How far a patch is from the level-set form ω_i = λ I{sign ψ > μ_i} ∩ B_i."""

    violations: tuple[int, int]
    ties: tuple[int, int]
    boundary_cells: tuple[int, int]

    @property
    def consistent(self) -> bool:
        return self.violations == (0, 0)

    @property
    def ties_within_boundary(self) -> bool:
        return all(t <= b for t, b in zip(self.ties, self.boundary_cells, strict=True))


def level_set_residual(patch: SteadyPatch) -> LevelSetReport:
    """Count cells contradicting the level-set characterization of the maximizer."""
    grid = patch.grid
    violations, ties, boundary = [], [], []
    for component, _, sign, mu, ball in patch.components():
        in_ball = grid.ball_mask(ball)
        score = sign * patch.psi.values
        tol = TIE_RTOL * max(1.0, abs(mu))
        selected = component.support
        above = in_ball & (score > mu + tol)
        below = in_ball & (score < mu - tol)
        wrong = np.count_nonzero(above & ~selected) + np.count_nonzero(below & selected)
        violations.append(int(wrong))
        ties.append(int(np.count_nonzero(in_ball & (np.abs(score - mu) <= tol))))
        edge = np.zeros(grid.shape, dtype=bool)
        for cells, _ in _patch_edges(selected, grid):
            edge |= cells
        boundary.append(int(np.count_nonzero(edge)))
    return LevelSetReport(tuple(violations), tuple(ties), tuple(boundary))  # type: ignore[arg-type]


@dataclass(frozen=True)
class UniquenessReport:
    """Maximizers reached from random feasible starts."""

    energies: tuple[float, ...]
    max_pairwise_l1: float
    tolerance: float
    failures: tuple[str, ...] = ()

    @property
    def coincide(self) -> bool:
        return len(self.energies) > 0 and self.max_pairwise_l1 <= self.tolerance

    def to_dict(self) -> dict[str, object]:
        return {
            "energies": list(self.energies),
            "max_pairwise_l1": self.max_pairwise_l1,
            "tolerance": self.tolerance,
            "coincide": self.coincide,
            "failures": list(self.failures),
        }


def uniqueness_probe(
    cfg: SolverConfig, green: GreenOperator, trials: int, seed: int = 0
) -> UniquenessReport:
    """Solve from ``trials`` random members of K_λ and compare the maximizers.

    This only gathers evidence on local uniqueness; nothing is asserted.
    """
    rng = np.random.default_rng(seed)
    patches: list[SteadyPatch] = []
    failures: list[str] = []
    for trial in range(trials):
        start = random_feasible(cfg, rng)
        trial_cfg = replace(cfg, seed_kind=SeedKind.CUSTOM, seed_field=start)
        try:
            patches.append(solve_steady(trial_cfg, green))
        except VortexPatchError as exc:
            failures.append(f"trial {trial}: {type(exc).__name__}: {exc}")
    worst = 0.0
    for i, a in enumerate(patches):
        for b in patches[i + 1 :]:
            worst = max(worst, l1_distance(a.omega, b.omega))
    ties = max((max(p.tie_counts) for p in patches), default=0)
    tolerance = 2.0 * cfg.lam * cfg.grid.cell_area * max(ties, 1)
    logger.info("uniqueness probe: %d solves, max pairwise L1 %.3e", len(patches), worst)
    return UniquenessReport(
        tuple(p.energy for p in patches), worst, tolerance, tuple(failures)
    )


def check_patch_grid(green: GreenOperator, patch: SteadyPatch) -> None:
    """Raise GridMismatch unless ``patch`` lives on the operator's grid."""
    require_grid(green, patch.omega)

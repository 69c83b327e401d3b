"""Green function of -Δ with zero Dirichlet data, analytic and discrete.

The discrete Green operator is the inverse of the 5-point Laplacian on the
inside cells. Dirichlet data live on cell faces: an outside neighbour acts as
a ghost cell holding ``2 g - u`` (``g`` the boundary value), so the masked
sparse solve and the sine-transform solve are the same operator on a
rectangle. The analytic unit-disk kernel is kept for validation and for the
Kirchhoff-Routh function.
"""

import logging
import math
import threading
from abc import ABC, abstractmethod
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from scipy import fft, sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import splu

from vortex_patches.domain import (
    Domain,
    DomainKind,
    FloatArray,
    Grid,
    Point,
    ScalarField,
    inner,
    require_same_grid,
)
from vortex_patches.errors import (
    CoincidentPoints,
    GridMismatch,
    NonDiskDomain,
    OutsideDomain,
    SingularSystem,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
COINCIDENCE_TOL = 1e-12
REFINE_TOL = 1e-10
_DIRECTIONS = ((0, 1), (0, -1), (1, 0), (-1, 0))  # (dy, dx)

# Mean of ln(1/r) over a unit square around its centre, shifted by ln(1/h)
# for a cell of side h: -ln h + ln(2)/2 + 3/2 - pi/4.
_SELF_CELL_LOG = 0.5 * math.log(2.0) + 1.5 - 0.25 * math.pi


def log_kernel(r: FloatArray | float) -> FloatArray:
    """Free-space part (1/2π) ln(1/r)."""
    return np.asarray(-np.log(r) / TWO_PI)


def self_cell_kernel(h: float) -> float:
    """Cell average of (1/2π) ln(1/|x-y|) over a square cell around x."""
    return (-math.log(h) + _SELF_CELL_LOG) / TWO_PI


def disk_regular_part(x: FloatArray, y: FloatArray) -> FloatArray:
    """Regular part h(x, y) of the unit-disk Green function (images).

    Points are arrays with a trailing axis of length 2 and broadcast.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xy = np.sum(x * y, axis=-1)
    xx = np.sum(x * x, axis=-1)
    yy = np.sum(y * y, axis=-1)
    return np.asarray(-np.log(1.0 - 2.0 * xy + xx * yy) / (2.0 * TWO_PI))


def green_disk(x: Point, y: Point) -> float:
    """Unit-disk Green function G(x, y) = (1/2π) ln(1/|x-y|) - h(x, y)."""
    for p in (x, y):
        if math.hypot(*p) >= 1.0:
            raise OutsideDomain(f"{p} is not in the open unit disk")
    r = math.dist(x, y)
    if r < COINCIDENCE_TOL:
        raise CoincidentPoints(f"G evaluated at coincident points {x}")
    return float(log_kernel(r) - disk_regular_part(np.array(x), np.array(y)))


def robin_disk(x: Point) -> float:
    """Robin function h(x, x) = -(1/2π) ln(1 - |x|^2) of the unit disk."""
    r2 = x[0] * x[0] + x[1] * x[1]
    if r2 >= 1.0:
        raise OutsideDomain(f"{x} is not in the open unit disk")
    return -math.log1p(-r2) / TWO_PI


class GreenBackend(Enum):
    """How a GreenOperator applies the inverse Laplacian."""

    ANALYTIC_DISK = "analytic-disk-quadrature"
    FAST_RECTANGLE = "fast-rectangle"
    MASKED_DIRECT = "masked-direct"


def _shifted_index(index: NDArray[np.int64], dy: int, dx: int) -> NDArray[np.int64]:
    """``out[iy, ix] = index[iy + dy, ix + dx]`` or -1 off the array."""
    ny, nx = index.shape
    out = np.full_like(index, -1)
    ys = slice(max(0, -dy), ny - max(0, dy))
    xs = slice(max(0, -dx), nx - max(0, dx))
    ys_src = slice(max(0, dy), ny - max(0, -dy))
    xs_src = slice(max(0, dx), nx - max(0, -dx))
    out[ys, xs] = index[ys_src, xs_src]
    return out


@dataclass(frozen=True)
class BoundaryFaces:
    """Faces between inside cells and the outside, as used by the ghost rule."""

    cells: NDArray[np.int64]  # unknown index of the inside cell
    points: FloatArray  # (m, 2) face midpoints


def cell_index(grid: Grid) -> NDArray[np.int64]:
    """Unknown number of every inside cell, -1 elsewhere."""
    index = np.full(grid.shape, -1, dtype=np.int64)
    index[grid.inside] = np.arange(grid.inside_count)
    return index


def laplacian_matrix(grid: Grid) -> tuple[sparse.csc_matrix, BoundaryFaces]:
    """5-point -Δ on the inside cells with face Dirichlet data."""
    index = cell_index(grid)
    own = index[grid.inside]
    diagonal = np.full(grid.inside_count, 4.0)
    rows: list[NDArray[np.int64]] = []
    cols: list[NDArray[np.int64]] = []
    face_cells: list[NDArray[np.int64]] = []
    face_points: list[FloatArray] = []
    xx, yy = grid.mesh
    for dy, dx in _DIRECTIONS:
        neighbour = _shifted_index(index, dy, dx)[grid.inside]
        linked = neighbour >= 0
        rows.append(own[linked])
        cols.append(neighbour[linked])
        diagonal += ~linked
        face_cells.append(own[~linked])
        face_points.append(
            np.column_stack(
                (
                    xx[grid.inside][~linked] + 0.5 * dx * grid.h,
                    yy[grid.inside][~linked] + 0.5 * dy * grid.h,
                )
            )
        )
    r = np.concatenate(rows + [own])
    c = np.concatenate(cols + [own])
    data = np.concatenate([-np.ones(sum(len(x) for x in rows)), diagonal])
    n = grid.inside_count
    matrix = sparse.coo_matrix((data / grid.cell_area, (r, c)), shape=(n, n)).tocsc()
    faces = BoundaryFaces(np.concatenate(face_cells), np.concatenate(face_points))
    return matrix, faces


class PoissonSolver(ABC):
    """Solves -Δψ = ω on one grid; returns full ``(ny, nx)`` arrays."""

    def __init__(self, grid: Grid) -> None:
        self.grid = grid

    @property
    @abstractmethod
    def backend(self) -> GreenBackend:
        """Which backend this solver implements."""
        ...

    @abstractmethod
    def solve(self, rhs: FloatArray) -> FloatArray:
        """Stream function values for the vorticity values ``rhs``."""
        ...


class MaskedDirectSolver(PoissonSolver):
    """Sparse LU of the masked 5-point Laplacian, cached per grid."""

    def __init__(self, grid: Grid) -> None:
        super().__init__(grid)
        self.matrix, self.faces = laplacian_matrix(grid)
        try:
            self._lu = splu(self.matrix)
        except RuntimeError as exc:
            raise SingularSystem(f"masked Laplacian is singular: {exc}") from exc
        self._lock = threading.Lock()  # SuperLU handles are not shared across threads
        logger.debug("factorized masked Laplacian with %d unknowns", self.matrix.shape[0])

    @property
    def backend(self) -> GreenBackend:
        return GreenBackend.MASKED_DIRECT

    def solve_inside(self, rhs: FloatArray) -> FloatArray:
        """Solve for unknown-ordered right-hand sides (``(N,)`` or ``(N, k)``)."""
        with self._lock:
            x = self._lu.solve(rhs)
            scale = np.linalg.norm(rhs)
            for _ in range(3):
                residual = rhs - self.matrix @ x
                if np.linalg.norm(residual) <= REFINE_TOL * scale:
                    break
                x = x + self._lu.solve(residual)
        return np.asarray(x)

    def solve(self, rhs: FloatArray) -> FloatArray:
        out = np.zeros(self.grid.shape)
        if np.any(rhs[self.grid.inside]):
            out[self.grid.inside] = self.solve_inside(
                np.ascontiguousarray(rhs[self.grid.inside])
            )
        return out


class RectangleSineSolver(PoissonSolver):
    """Diagonalizes the rectangle Laplacian with type-II sine transforms."""

    def __init__(self, grid: Grid) -> None:
        super().__init__(grid)
        if grid.domain.kind is not DomainKind.RECTANGLE:
            raise ValueError("the sine-transform solver needs a rectangle")
        kx = np.arange(1, grid.nx + 1)
        ky = np.arange(1, grid.ny + 1)
        ex = (2.0 - 2.0 * np.cos(np.pi * kx / grid.nx)) / grid.cell_area
        ey = (2.0 - 2.0 * np.cos(np.pi * ky / grid.ny)) / grid.cell_area
        self._eigenvalues = ey[:, None] + ex[None, :]

    @property
    def backend(self) -> GreenBackend:
        return GreenBackend.FAST_RECTANGLE

    def solve(self, rhs: FloatArray) -> FloatArray:
        spectrum = fft.dstn(rhs, type=2, norm="ortho")
        return np.asarray(fft.idstn(spectrum / self._eigenvalues, type=2, norm="ortho"))


class DiskQuadratureSolver(PoissonSolver):
    """Midpoint quadrature of the analytic disk kernel over the source support.

    Diagonal cells use the exact cell average of the logarithm. Cost is
    (inside cells) x (support cells), so this is for validation only.
    """

    def __init__(self, grid: Grid, block: int = 4_000_000) -> None:
        super().__init__(grid)
        if grid.domain.kind is not DomainKind.DISK:
            raise NonDiskDomain("the analytic quadrature backend needs the unit disk")
        self.block = block  # kernel entries per chunk

    @property
    def backend(self) -> GreenBackend:
        return GreenBackend.ANALYTIC_DISK

    def solve(self, rhs: FloatArray) -> FloatArray:
        grid = self.grid
        xx, yy = grid.mesh
        source = grid.inside & (rhs != 0.0)
        out = np.zeros(grid.shape)
        if not np.any(source):
            return out
        src = np.column_stack((xx[source], yy[source]))
        weights = rhs[source] * grid.cell_area
        targets = np.column_stack((xx[grid.inside], yy[grid.inside]))
        self_term = self_cell_kernel(grid.h)
        values = np.empty(len(targets))
        chunk = max(1, self.block // len(src))
        for start in range(0, len(targets), chunk):
            tgt = targets[start : start + chunk]
            diff = tgt[:, None, :] - src[None, :, :]
            r = np.hypot(diff[..., 0], diff[..., 1])
            coincident = r < 0.5 * grid.h
            kernel = np.where(coincident, self_term, log_kernel(np.where(coincident, 1.0, r)))
            kernel = kernel - disk_regular_part(tgt[:, None, :], src[None, :, :])
            values[start : start + len(tgt)] = kernel @ weights
        out[grid.inside] = values
        return out


@dataclass(frozen=True)
class StreamFunction:
    """ψ together with the vorticity it was computed from."""

    psi: ScalarField
    source: ScalarField


class GreenOperator:
    """Discrete ψ(x) = ∫ G(x, y) ω(y) dy on one grid (immutable after build)."""

    def __init__(self, grid: Grid, solver: PoissonSolver) -> None:
        self.grid = grid
        self._solver = solver

    @property
    def backend(self) -> GreenBackend:
        return self._solver.backend

    def apply(self, values: FloatArray) -> FloatArray:
        """Raw solve on ``(ny, nx)`` arrays; outside cells of the result are 0."""
        out = self._solver.solve(np.where(self.grid.inside, values, 0.0))
        return np.where(self.grid.inside, out, 0.0)

    @cached_property
    def masked(self) -> MaskedDirectSolver:
        """Sparse factorization used for harmonic extensions."""
        if isinstance(self._solver, MaskedDirectSolver):
            return self._solver
        return MaskedDirectSolver(self.grid)

    def regular_part_fields(self, sources: FloatArray) -> FloatArray:
        """Discrete regular parts h(·, y) for each source point ``y``.

        Solves -Δu = 0 with face data (1/2π) ln(1/|x - y|). Returns a
        ``(k, ny, nx)`` array whose outside cells hold the free-space kernel
        (a smooth extension used for interpolation near the wall).
        """
        sources = np.atleast_2d(np.asarray(sources, dtype=float))
        solver = self.masked
        faces = solver.faces
        n = self.grid.inside_count
        diff = faces.points[:, None, :] - sources[None, :, :]
        data = log_kernel(np.hypot(diff[..., 0], diff[..., 1]))
        rhs = np.zeros((n, len(sources)))
        np.add.at(rhs, faces.cells, 2.0 * data / self.grid.cell_area)
        inside_values = solver.solve_inside(rhs)
        xx, yy = self.grid.mesh
        out = np.empty((len(sources),) + self.grid.shape)
        for k, (sx, sy) in enumerate(sources):
            free = log_kernel(np.maximum(np.hypot(xx - sx, yy - sy), COINCIDENCE_TOL))
            out[k] = free
            out[k][self.grid.inside] = inside_values[:, k]
        return out


def build_green(grid: Grid, backend: GreenBackend | None = None) -> GreenOperator:
    """Green operator for ``grid``; picks the fast backend when none is given."""
    if backend is None:
        backend = (
            GreenBackend.FAST_RECTANGLE
            if grid.domain.kind is DomainKind.RECTANGLE
            else GreenBackend.MASKED_DIRECT
        )
    solver: PoissonSolver
    if backend is GreenBackend.FAST_RECTANGLE:
        solver = RectangleSineSolver(grid)
    elif backend is GreenBackend.MASKED_DIRECT:
        solver = MaskedDirectSolver(grid)
    else:
        solver = DiskQuadratureSolver(grid)
    logger.info("built %s Green operator on %dx%d grid", backend.value, grid.nx, grid.ny)
    return GreenOperator(grid, solver)


def stream(op: GreenOperator, omega: ScalarField) -> StreamFunction:
    """Stream function of ``omega`` (zero on the boundary)."""
    if not op.grid.same_as(omega.grid):
        raise GridMismatch("vorticity is not defined on the operator's grid")
    psi = ScalarField(omega.grid, op.apply(omega.values))
    return StreamFunction(psi=psi, source=omega)


def energy(op: GreenOperator, omega: ScalarField) -> float:
    """Kinetic energy E(ω) = ½ ∫ ω ψ."""
    return energy_of(stream(op, omega))


def energy_of(sf: StreamFunction) -> float:
    """Energy from an already computed stream function."""
    return 0.5 * inner(sf.source, sf.psi)


def ghosted_gradient(f: ScalarField) -> tuple[FloatArray, FloatArray]:
    """Central differences (∂x f, ∂y f) with ghost value -f across the wall."""
    grid = f.grid
    values = f.values
    inside = grid.inside

    def neighbour(dy: int, dx: int) -> FloatArray:
        padded = np.pad(values, 1)
        mask = np.pad(inside, 1)
        ny, nx = grid.shape
        shifted = padded[1 + dy : 1 + dy + ny, 1 + dx : 1 + dx + nx]
        present = mask[1 + dy : 1 + dy + ny, 1 + dx : 1 + dx + nx]
        return np.where(present, shifted, -values)

    dfdx = (neighbour(0, 1) - neighbour(0, -1)) / (2.0 * grid.h)
    dfdy = (neighbour(1, 0) - neighbour(-1, 0)) / (2.0 * grid.h)
    return np.where(inside, dfdx, 0.0), np.where(inside, dfdy, 0.0)


def velocity(sf: StreamFunction) -> tuple[ScalarField, ScalarField]:
    """Velocity v = J∇ψ = (∂yψ, -∂xψ)."""
    dpsi_dx, dpsi_dy = ghosted_gradient(sf.psi)
    grid = sf.psi.grid
    return ScalarField(grid, dpsi_dy), ScalarField(grid, -dpsi_dx)


class GreenEvaluator(ABC):
    """Pointwise G and Robin function for the Kirchhoff-Routh function."""

    domain: Domain

    @abstractmethod
    def regular(self, x: Point, y: Point) -> float:
        """Regular part h(x, y)."""
        ...

    @abstractmethod
    def contains(self, x: Point) -> bool:
        """Whether ``x`` is an admissible vortex position."""
        ...

    def green(self, x: Point, y: Point) -> float:
        r = math.dist(x, y)
        if r < COINCIDENCE_TOL:
            raise CoincidentPoints(f"G evaluated at coincident points {x}")
        return float(log_kernel(r)) - self.regular(x, y)

    def robin(self, x: Point) -> float:
        return self.regular(x, x)

    def prefetch(self, points: FloatArray) -> None:  # noqa: B027
        """Hint that ``points`` will be used as sources."""


class DiskGreen(GreenEvaluator):
    """Images formula on the unit disk."""

    def __init__(self) -> None:
        self.domain = Domain.unit_disk()

    def regular(self, x: Point, y: Point) -> float:
        if not (self.contains(x) and self.contains(y)):
            raise OutsideDomain(f"{x} or {y} is not in the open unit disk")
        return float(disk_regular_part(np.array(x), np.array(y)))

    def contains(self, x: Point) -> bool:
        return math.hypot(*x) < 1.0


class GridGreen(GreenEvaluator):
    """Regular part from discrete harmonic extensions on a grid.

    Each distinct source point costs one (batched) sparse solve; results are
    kept for the ``max_entries`` most recently used sources and interpolated
    bilinearly.
    """

    def __init__(self, op: GreenOperator, max_entries: int = 256) -> None:
        if max_entries < 1:
            raise ValueError("max_entries must be at least 1")
        self.op = op
        self.domain = op.grid.domain
        self.max_entries = max_entries
        self._cache: OrderedDict[Point, RegularGridInterpolator] = OrderedDict()

    def _key(self, y: Point) -> Point:
        return (round(float(y[0]), 12), round(float(y[1]), 12))

    @property
    def cached(self) -> int:
        return len(self._cache)

    def _store(self, key: Point, interpolator: RegularGridInterpolator) -> None:
        self._cache[key] = interpolator
        self._cache.move_to_end(key)
        while len(self._cache) > self.max_entries:
            self._cache.popitem(last=False)

    def prefetch(self, points: FloatArray) -> None:
        keys = []
        for p in np.atleast_2d(points):
            key = self._key((p[0], p[1]))
            if key in self._cache:
                self._cache.move_to_end(key)
            elif key not in keys:
                keys.append(key)
        if not keys:
            return
        fields = self.op.regular_part_fields(np.array(keys))
        grid = self.op.grid
        for key, values in zip(keys, fields, strict=True):
            self._store(
                key,
                RegularGridInterpolator(
                    (grid.y, grid.x), values, bounds_error=False, fill_value=None
                ),
            )
        logger.debug("solved %d harmonic extensions", len(keys))

    def regular(self, x: Point, y: Point) -> float:
        if not (self.contains(x) and self.contains(y)):
            raise OutsideDomain(f"{x} or {y} lies outside the grid domain")
        key = self._key(y)
        if key in self._cache:
            self._cache.move_to_end(key)
        else:
            self.prefetch(np.array([key]))
        return float(self._cache[key](np.array([[x[1], x[0]]]))[0])

    def contains(self, x: Point) -> bool:
        return self.op.grid.domain.boundary_distance(x) > self.op.grid.h


def require_grid(op: GreenOperator, *fields: ScalarField) -> None:
    """Raise GridMismatch unless every field lives on the operator's grid."""
    require_same_grid(*fields)
    if not op.grid.same_as(fields[0].grid):
        raise GridMismatch("field is not defined on the operator's grid")

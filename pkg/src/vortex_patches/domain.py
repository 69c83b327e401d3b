"""Domains, uniform cell-centred grids, scalar fields and quadrature.

Arrays are stored with shape ``(ny, nx)``: row ``iy`` runs along y and
column ``ix`` along x, cell centres sit at ``x0 + (ix + 1/2) h`` and
``y0 + (iy + 1/2) h``. Cells outside the domain always hold 0.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from vortex_patches.errors import (
    GridMismatch,
    MaskNotSimplyConnected,
    OutsideDomain,
    ResolutionTooCoarse,
)

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
BoolArray = NDArray[np.bool_]
Point = tuple[float, float]

MIN_INSIDE_CELLS = 16

# 4-connectivity for the foreground, 8-connectivity for its complement
_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = ndimage.generate_binary_structure(2, 2)


class DomainKind(Enum):
    """Supported domain shapes."""

    DISK = "disk"
    RECTANGLE = "rectangle"
    BITMAP = "bitmap"


def check_simply_connected(mask: BoolArray) -> None:
    """Raise MaskNotSimplyConnected unless ``mask`` is one hole-free blob."""
    _, n_parts = ndimage.label(mask, structure=_FOUR)
    if n_parts != 1:
        raise MaskNotSimplyConnected(
            f"mask has {n_parts} 4-connected components, expected 1"
        )
    outside = np.pad(~mask, 1, constant_values=True)
    _, n_outside = ndimage.label(outside, structure=_EIGHT)
    if n_outside != 1:
        raise MaskNotSimplyConnected(f"mask has {n_outside - 1} hole(s)")


@dataclass(frozen=True, eq=False)
class Domain:
    """A bounded, simply connected planar domain.

    Use the :meth:`unit_disk`, :meth:`rectangle` and :meth:`bitmap`
    constructors rather than the raw initializer.
    """

    kind: DomainKind
    width: float
    height: float
    mask: BoolArray | None = None

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise ValueError("domain extents must be positive")
        if self.kind is DomainKind.BITMAP:
            if self.mask is None or self.mask.ndim != 2:
                raise ValueError("bitmap domains need a 2-D boolean mask")
            mask = np.array(self.mask, dtype=bool)
            mask.setflags(write=False)
            object.__setattr__(self, "mask", mask)
            check_simply_connected(mask)

    @classmethod
    def unit_disk(cls) -> "Domain":
        return cls(DomainKind.DISK, 2.0, 2.0)

    @classmethod
    def rectangle(cls, width: float, height: float) -> "Domain":
        return cls(DomainKind.RECTANGLE, float(width), float(height))

    @classmethod
    def bitmap(
        cls, mask: BoolArray, width: float | None = None, height: float | None = None
    ) -> "Domain":
        """Domain given by a raster (row 0 at the bottom).

        Without explicit extents the longer side of the raster has length 1.
        """
        rows, cols = np.shape(mask)
        longest = max(rows, cols)
        return cls(
            DomainKind.BITMAP,
            float(width if width is not None else cols / longest),
            float(height if height is not None else rows / longest),
            np.asarray(mask, dtype=bool),
        )

    @property
    def origin(self) -> Point:
        """Lower-left corner of the bounding box."""
        if self.kind is DomainKind.DISK:
            return (-1.0, -1.0)
        return (0.0, 0.0)

    @property
    def center(self) -> Point:
        x0, y0 = self.origin
        return (x0 + self.width / 2, y0 + self.height / 2)

    @property
    def rotation_invariant(self) -> bool:
        """Whether rotations about :attr:`center` map the domain to itself."""
        return self.kind is DomainKind.DISK

    @cached_property
    def _bitmap_distance(self) -> FloatArray:
        assert self.mask is not None
        pixel = self.width / self.mask.shape[1]
        return np.asarray(
            ndimage.distance_transform_edt(self.mask, sampling=pixel), dtype=float
        )

    def _bitmap_pixel(self, x: FloatArray, y: FloatArray) -> tuple[NDArray, NDArray]:
        assert self.mask is not None
        rows, cols = self.mask.shape
        ix = np.floor(x / self.width * cols).astype(int)
        iy = np.floor(y / self.height * rows).astype(int)
        return np.clip(iy, 0, rows - 1), np.clip(ix, 0, cols - 1)

    def contains(self, x: FloatArray, y: FloatArray) -> BoolArray:
        """Vectorized membership test for the open domain."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind is DomainKind.DISK:
            return np.asarray(x * x + y * y < 1.0)
        box = (x > 0) & (x < self.width) & (y > 0) & (y < self.height)
        if self.kind is DomainKind.RECTANGLE:
            return np.asarray(box)
        assert self.mask is not None
        iy, ix = self._bitmap_pixel(x, y)
        return np.asarray(box & self.mask[iy, ix])

    def boundary_distance(self, point: Point) -> float:
        """Distance from an interior point to the boundary (negative outside)."""
        x, y = point
        if self.kind is DomainKind.DISK:
            return 1.0 - math.hypot(x, y)
        if self.kind is DomainKind.RECTANGLE:
            return min(x, self.width - x, y, self.height - y)
        if not self.contains(np.array(x), np.array(y)):
            return -1.0
        iy, ix = self._bitmap_pixel(np.array(x), np.array(y))
        pixel = self.width / self._bitmap_distance.shape[1]
        return float(self._bitmap_distance[iy, ix]) - pixel / 2

    def reflect(self, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        """Fold points that left the domain back inside (mirror at the wall)."""
        x = np.array(x, dtype=float)
        y = np.array(y, dtype=float)
        if self.kind is DomainKind.DISK:
            r = np.hypot(x, y)
            out = r >= 1.0
            if np.any(out):
                r_new = np.minimum(2.0 - r[out], 1.0 - 1e-12)
                r_new = np.maximum(r_new, 0.0)
                scale = r_new / r[out]
                x[out] *= scale
                y[out] *= scale
            return x, y
        x = np.abs(x)
        x = np.where(x > self.width, 2 * self.width - x, x)
        y = np.abs(y)
        y = np.where(y > self.height, 2 * self.height - y, y)
        return np.clip(x, 0.0, self.width), np.clip(y, 0.0, self.height)

    def to_dict(self) -> dict[str, object]:
        """Short description for reports (bitmaps are not inlined)."""
        return {"kind": self.kind.value, "width": self.width, "height": self.height}


@dataclass(frozen=True)
class Ball:
    """Open disc ``B_radius(center)``."""

    center: Point
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def contains(self, x: FloatArray, y: FloatArray) -> BoolArray:
        cx, cy = self.center
        return np.asarray((x - cx) ** 2 + (y - cy) ** 2 < self.radius**2)

    def is_disjoint(self, other: "Ball") -> bool:
        """Whether the closures do not meet."""
        gap = math.dist(self.center, other.center)
        return gap > self.radius + other.radius

    def to_dict(self) -> dict[str, object]:
        return {"center": list(self.center), "radius": self.radius}

    @classmethod
    def from_dict(cls, data: dict) -> "Ball":
        return cls(center=tuple(data["center"]), radius=float(data["radius"]))


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform square-cell grid over the bounding box of a domain."""

    domain: Domain
    nx: int
    ny: int
    h: float
    x0: float
    y0: float
    inside: BoolArray = field(repr=False)

    @cached_property
    def x(self) -> FloatArray:
        """Cell-centre abscissae (length nx)."""
        return self.x0 + (np.arange(self.nx) + 0.5) * self.h

    @cached_property
    def y(self) -> FloatArray:
        """Cell-centre ordinates (length ny)."""
        return self.y0 + (np.arange(self.ny) + 0.5) * self.h

    @cached_property
    def mesh(self) -> tuple[FloatArray, FloatArray]:
        """Cell-centre coordinates as two ``(ny, nx)`` arrays."""
        xx, yy = np.meshgrid(self.x, self.y)
        return xx, yy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @cached_property
    def inside_count(self) -> int:
        return int(np.count_nonzero(self.inside))

    def same_as(self, other: "Grid") -> bool:
        """Structural equality (same geometry and mask)."""
        if self is other:
            return True
        return (
            self.shape == other.shape
            and self.h == other.h
            and (self.x0, self.y0) == (other.x0, other.y0)
            and bool(np.array_equal(self.inside, other.inside))
        )

    def ball_mask(self, ball: Ball) -> BoolArray:
        """Inside cells whose centres lie in ``ball``."""
        xx, yy = self.mesh
        return self.inside & ball.contains(xx, yy)

    def nearest_cell(self, point: Point) -> tuple[int, int]:
        """Index ``(iy, ix)`` of the cell containing ``point`` (clamped)."""
        ix = int(np.clip(math.floor((point[0] - self.x0) / self.h), 0, self.nx - 1))
        iy = int(np.clip(math.floor((point[1] - self.y0) / self.h), 0, self.ny - 1))
        return iy, ix

    def check_ball(self, ball: Ball) -> None:
        """Require ``ball`` to sit compactly in the domain with a cell of margin."""
        gap = self.domain.boundary_distance(ball.center)
        if gap <= ball.radius + self.h:
            raise OutsideDomain(
                f"ball at {ball.center} with radius {ball.radius:.4g} is not compactly "
                f"inside the domain (boundary distance {gap:.4g}, cell {self.h:.4g})"
            )


def _prune_isolated(inside: BoolArray) -> BoolArray:
    neighbours = ndimage.convolve(
        inside.astype(int),
        np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]),
        mode="constant",
    )
    return inside & (neighbours > 0)


def discretize(domain: Domain, n: int) -> Grid:
    """Cover ``domain`` with square cells, ``n`` along the longer side."""
    if n < 1:
        raise ValueError(f"cell count must be positive, got {n}")
    h = max(domain.width, domain.height) / n
    nx = round(domain.width / h)
    ny = round(domain.height / h)
    if abs(nx * h - domain.width) > 1e-9 * domain.width or abs(
        ny * h - domain.height
    ) > 1e-9 * domain.height:
        raise ValueError(
            f"extent {domain.width}x{domain.height} is not a whole number of cells "
            f"of side {h}"
        )
    x0, y0 = domain.origin
    xs = x0 + (np.arange(nx) + 0.5) * h
    ys = y0 + (np.arange(ny) + 0.5) * h
    xx, yy = np.meshgrid(xs, ys)
    inside = _prune_isolated(domain.contains(xx, yy))
    if domain.kind is DomainKind.BITMAP:
        check_simply_connected(inside)
    count = int(np.count_nonzero(inside))
    if count < MIN_INSIDE_CELLS:
        raise ResolutionTooCoarse(
            f"only {count} inside cells, need at least {MIN_INSIDE_CELLS}"
        )
    inside.setflags(write=False)
    logger.debug("discretized %s: %dx%d cells, h=%g", domain.kind.value, nx, ny, h)
    return Grid(domain, nx, ny, h, x0, y0, inside)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values on the inside cells of a grid (outside cells read 0)."""

    grid: Grid
    values: FloatArray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {values.shape} does not match grid {self.grid.shape}"
            )
        values = np.where(self.grid.inside, values, 0.0)
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(
        cls, grid: Grid, func: Callable[[FloatArray, FloatArray], FloatArray]
    ) -> "ScalarField":
        """Sample ``func(x, y)`` at cell centres."""
        xx, yy = grid.mesh
        return cls(grid, np.broadcast_to(func(xx, yy), grid.shape))

    @classmethod
    def indicator(cls, grid: Grid, cells: BoolArray, value: float = 1.0) -> "ScalarField":
        return cls(grid, np.where(cells, value, 0.0))

    def _other(self, other: "ScalarField") -> FloatArray:
        require_same_grid(self, other)
        return other.values

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values + self._other(other))

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values - self._other(other))

    def __neg__(self) -> "ScalarField":
        return ScalarField(self.grid, -self.values)

    def __mul__(self, scale: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * scale)

    __rmul__ = __mul__

    def __abs__(self) -> "ScalarField":
        return ScalarField(self.grid, np.abs(self.values))

    def multiply(self, other: "ScalarField") -> "ScalarField":
        """Pointwise product."""
        return ScalarField(self.grid, self.values * self._other(other))

    @property
    def support(self) -> BoolArray:
        return self.values != 0.0

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def require_same_grid(*fields: ScalarField) -> None:
    """Raise GridMismatch unless all fields share one grid."""
    first = fields[0].grid
    for other in fields[1:]:
        if not first.same_as(other.grid):
            raise GridMismatch("fields are defined on different grids")


def integrate(f: ScalarField) -> float:
    """Midpoint quadrature of ``f`` over the domain."""
    return float(np.sum(f.values[f.grid.inside])) * f.grid.cell_area


def l1_distance(f: ScalarField, g: ScalarField) -> float:
    """L1 distance between two fields on the same grid."""
    require_same_grid(f, g)
    return integrate(abs(f - g))


def inner(f: ScalarField, g: ScalarField) -> float:
    """Discrete L2 inner product."""
    require_same_grid(f, g)
    return float(np.sum(f.values * g.values)) * f.grid.cell_area


def cell_centers(grid: Grid, cells: BoolArray) -> FloatArray:
    """``(m, 2)`` centres of the marked cells, in row-major order."""
    xx, yy = grid.mesh
    return np.column_stack((xx[cells], yy[cells]))


def support_diameter(grid: Grid, cells: BoolArray, hull_above: int = 2000) -> float:
    """Largest distance between centres of marked cells.

    Above ``hull_above`` cells only convex-hull vertices are compared.
    """
    points = cell_centers(grid, cells)
    if len(points) < 2:
        return 0.0
    if len(points) > hull_above:
        points = points[ConvexHull(points).vertices]
    return float(np.max(pdist(points)))

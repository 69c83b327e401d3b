"""Kirchhoff-Routh function of an opposite-sign vortex pair and its minima."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize

from vortex_patches.domain import Ball, FloatArray, Point
from vortex_patches.errors import (
    CoincidentPoints,
    DegenerateMinimum,
    NoInteriorMinimum,
    OutsideDomain,
)
from vortex_patches.green import COINCIDENCE_TOL, GreenEvaluator

logger = logging.getLogger(__name__)

MIN_SAMPLES = 64
MARGIN_TOL = 1e-10
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class KRPoint:
    """Positions and circulations of a vortex pair with κ₁ > 0 > κ₂."""

    x1: Point
    x2: Point
    kappa1: float = 1.0
    kappa2: float = -1.0

    def __post_init__(self) -> None:
        if not (self.kappa1 > 0 > self.kappa2):
            raise ValueError(
                f"need kappa1 > 0 > kappa2, got ({self.kappa1}, {self.kappa2})"
            )
        if math.dist(self.x1, self.x2) < COINCIDENCE_TOL:
            raise CoincidentPoints(f"vortices coincide at {self.x1}")
        object.__setattr__(self, "x1", (float(self.x1[0]), float(self.x1[1])))
        object.__setattr__(self, "x2", (float(self.x2[0]), float(self.x2[1])))

    def as_vector(self) -> FloatArray:
        return np.array([*self.x1, *self.x2])

    def moved_to(self, v: FloatArray) -> "KRPoint":
        return KRPoint((v[0], v[1]), (v[2], v[3]), self.kappa1, self.kappa2)

    def swapped(self) -> "KRPoint":
        """Same configuration with the roles of the two vortices exchanged."""
        return KRPoint(self.x2, self.x1, -self.kappa2, -self.kappa1)


@dataclass(frozen=True)
class SearchBox:
    """Axis-aligned box in (x1, y1, x2, y2) space."""

    lower: tuple[float, float, float, float]
    upper: tuple[float, float, float, float]

    def contains(self, v: FloatArray) -> bool:
        return bool(np.all(v >= np.array(self.lower)) and np.all(v <= np.array(self.upper)))

    @classmethod
    def around(cls, seed: KRPoint, half_width: float) -> "SearchBox":
        v = seed.as_vector()
        return cls(
            tuple(float(c) for c in v - half_width),  # type: ignore[arg-type]
            tuple(float(c) for c in v + half_width),  # type: ignore[arg-type]
        )


@dataclass(frozen=True)
class KRMinimum:
    """A certified strict local minimum of H with its isolating balls."""

    point: KRPoint
    value: float
    delta: float
    b1: Ball
    b2: Ball
    strictness_margin: float
    # rows (x1, y1, x2, y2, H) of the coarse scan that seeded the descent
    scan: NDArray[np.float64] | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict[str, object]:
        return {
            "x1": list(self.point.x1),
            "x2": list(self.point.x2),
            "kappa1": self.point.kappa1,
            "kappa2": self.point.kappa2,
            "H": self.value,
            "delta": self.delta,
            "margin": self.strictness_margin,
        }


def kr_value(p: KRPoint, green: GreenEvaluator) -> float:
    """H(x1, x2) = -2 κ₁κ₂ G(x1, x2) + Σ κᵢ² h(xᵢ, xᵢ)."""
    interaction = -2.0 * p.kappa1 * p.kappa2 * green.green(p.x1, p.x2)
    return (
        interaction
        + p.kappa1**2 * green.robin(p.x1)
        + p.kappa2**2 * green.robin(p.x2)
    )


def _objective(v: FloatArray, seed: KRPoint, green: GreenEvaluator) -> float:
    x1 = (float(v[0]), float(v[1]))
    x2 = (float(v[2]), float(v[3]))
    if not (green.contains(x1) and green.contains(x2)):
        return math.inf
    if math.dist(x1, x2) < COINCIDENCE_TOL:
        return math.inf
    return kr_value(seed.moved_to(v), green)


def coarse_scan(
    seed: KRPoint, box: SearchBox, green: GreenEvaluator, steps: int = 9
) -> NDArray[np.float64]:
    """Evaluate H on a regular 4-D lattice over ``box``.

    Returns rows ``(x1, y1, x2, y2, H)`` in lexicographic lattice order;
    lattice points outside the domain or coinciding are skipped.
    """
    axes = [np.linspace(lo, hi, steps) for lo, hi in zip(box.lower, box.upper, strict=True)]
    first = [(x, y) for x in axes[0] for y in axes[1] if green.contains((x, y))]
    second = [(x, y) for x in axes[2] for y in axes[3] if green.contains((x, y))]
    green.prefetch(np.array(first + second))
    rows = []
    for x1 in first:
        for x2 in second:
            if math.dist(x1, x2) < COINCIDENCE_TOL:
                continue
            value = kr_value(KRPoint(x1, x2, seed.kappa1, seed.kappa2), green)
            rows.append((*x1, *x2, value))
    if not rows:
        raise NoInteriorMinimum("search box contains no admissible configuration")
    return np.array(rows)


def _rotate(p: Point, angle: float, center: Point) -> Point:
    c, s = math.cos(angle), math.sin(angle)
    dx, dy = p[0] - center[0], p[1] - center[1]
    return (center[0] + c * dx - s * dy, center[1] + s * dx + c * dy)


def _boundary_samples(
    point: KRPoint, delta: float, count: int
) -> list[tuple[Point, Point]]:
    """Points of ∂(B_δ(x1) × B_δ(x2)): one factor on its circle, one inside."""
    half = max(count, MIN_SAMPLES) // 2
    samples = []
    for k in range(half):
        theta = 2.0 * math.pi * k / half
        phi = 2.0 * math.pi * ((k * _GOLDEN) % 1.0)
        rho = delta * math.sqrt((k * math.sqrt(2.0)) % 1.0)
        on_circle = (math.cos(theta) * delta, math.sin(theta) * delta)
        in_disc = (math.cos(phi) * rho, math.sin(phi) * rho)
        x1, x2 = point.x1, point.x2
        samples.append(
            ((x1[0] + on_circle[0], x1[1] + on_circle[1]), (x2[0] + in_disc[0], x2[1] + in_disc[1]))
        )
        samples.append(
            ((x1[0] + in_disc[0], x1[1] + in_disc[1]), (x2[0] + on_circle[0], x2[1] + on_circle[1]))
        )
    return samples


def strictness_margin(
    point: KRPoint, value: float, delta: float, green: GreenEvaluator, samples: int = MIN_SAMPLES
) -> float:
    """min of H - H_min over sampled points of the product-ball boundary."""
    pairs = _boundary_samples(point, delta, samples)
    green.prefetch(np.array([p for pair in pairs for p in pair]))
    margin = math.inf
    for x1, x2 in pairs:
        h = kr_value(KRPoint(x1, x2, point.kappa1, point.kappa2), green)
        margin = min(margin, h - value)
    return margin


def isolating_radius(
    point: KRPoint,
    value: float,
    green: GreenEvaluator,
    *,
    samples: int = MIN_SAMPLES,
    max_halvings: int = 12,
) -> tuple[float, float]:
    """Halve δ from a quarter of the separation/wall distance until certified."""
    domain = green.domain
    separation = math.dist(point.x1, point.x2)
    wall = min(domain.boundary_distance(point.x1), domain.boundary_distance(point.x2))
    if wall <= 0:
        raise OutsideDomain("minimizer lies on or outside the boundary")
    delta = 0.25 * min(separation, wall)
    margin = -math.inf
    for _ in range(max_halvings + 1):
        margin = strictness_margin(point, value, delta, green, samples)
        logger.debug("delta=%.4g strictness margin=%.3e", delta, margin)
        if margin > MARGIN_TOL:
            return delta, margin
        delta /= 2.0
    raise DegenerateMinimum(
        f"strictness margin {margin:.3e} at smallest radius {2 * delta:.3e}"
    )


def find_local_min(
    seed: KRPoint,
    search_box: SearchBox,
    green: GreenEvaluator,
    *,
    scan_steps: int = 9,
    samples: int = MIN_SAMPLES,
    delta: float | None = None,
) -> KRMinimum:
    """Locate and certify a strict local minimum of H near ``seed``.

    A coarse lattice scan of ``search_box`` picks the start of a Nelder-Mead
    descent. On rotation-invariant domains the result is rotated so that x1
    keeps the seed's polar angle. ``delta`` overrides the isolating radius
    (it must still pass the strictness certificate).
    """
    scan = coarse_scan(seed, search_box, green, scan_steps)
    best = scan[int(np.argmin(scan[:, 4]))]
    steps = (np.array(search_box.upper) - np.array(search_box.lower)) / max(scan_steps - 1, 1)
    simplex = np.vstack([best[:4]] + [best[:4] + 0.5 * steps[i] * np.eye(4)[i] for i in range(4)])
    result = minimize(
        _objective,
        best[:4],
        args=(seed, green),
        method="Nelder-Mead",
        options={"initial_simplex": simplex, "xatol": 1e-9, "fatol": 1e-14, "maxiter": 8000},
    )
    if not math.isfinite(result.fun) or not search_box.contains(result.x):
        raise NoInteriorMinimum(f"descent from {seed.as_vector()} ended at {result.x}")
    point = seed.moved_to(result.x)
    value = float(result.fun)
    if green.domain.rotation_invariant:
        center = green.domain.center
        angle = math.atan2(seed.x1[1] - center[1], seed.x1[0] - center[0]) - math.atan2(
            point.x1[1] - center[1], point.x1[0] - center[0]
        )
        point = KRPoint(
            _rotate(point.x1, angle, center),
            _rotate(point.x2, angle, center),
            point.kappa1,
            point.kappa2,
        )
        value = kr_value(point, green)
    if delta is None:
        delta, margin = isolating_radius(point, value, green, samples=samples)
    else:
        wall = min(
            green.domain.boundary_distance(point.x1), green.domain.boundary_distance(point.x2)
        )
        if delta >= wall:
            raise OutsideDomain(f"balls of radius {delta} leave the domain (wall at {wall:.4g})")
        margin = strictness_margin(point, value, delta, green, samples)
        if margin <= MARGIN_TOL:
            raise DegenerateMinimum(f"strictness margin {margin:.3e} at delta {delta}")
    b1, b2 = Ball(point.x1, delta), Ball(point.x2, delta)
    if not b1.is_disjoint(b2):
        raise DegenerateMinimum(f"isolating balls of radius {delta} overlap")
    logger.info(
        "Kirchhoff-Routh minimum at %s, %s: H=%.6f delta=%.4g margin=%.3e",
        point.x1,
        point.x2,
        value,
        delta,
        margin,
    )
    return KRMinimum(point, value, delta, b1, b2, margin, scan)

"""Cross-checks of the discrete Green operators against exact solutions."""

import math

import numpy as np

from vortex_patches.domain import Domain, DomainKind, Grid, ScalarField, discretize
from vortex_patches.experiments.base import Experiment, ExperimentResult
from vortex_patches.green import GreenBackend, build_green, green_disk, stream

DISK_TOLERANCE = 1e-2
POINT_SOURCE_TOLERANCE = 2e-2
MIN_ORDER = 1.8


def smooth_bump(
    grid: Grid, center: tuple[float, float] = (0.2, 0.1), radius: float = 0.4
) -> ScalarField:
    """Compactly supported C∞ vorticity exp(-1/(1-ρ²))."""

    def bump(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        q = ((x - center[0]) ** 2 + (y - center[1]) ** 2) / radius**2
        safe = np.where(q < 1.0, q, 0.0)
        return np.where(q < 1.0, np.exp(-1.0 / (1.0 - safe)), 0.0)

    return ScalarField.from_function(grid, bump)


def disk_discrepancy(grid: Grid) -> float:
    """Relative L∞ gap between the masked solve and analytic-kernel quadrature."""
    omega = smooth_bump(grid)
    masked = stream(build_green(grid, GreenBackend.MASKED_DIRECT), omega).psi.values
    analytic = stream(build_green(grid, GreenBackend.ANALYTIC_DISK), omega).psi.values
    return float(np.max(np.abs(masked - analytic)) / np.max(np.abs(analytic)))


def point_source_discrepancy(grid: Grid, source: tuple[float, float] = (0.3, -0.2)) -> float:
    """Column of the discrete Green operator against G(·, y) away from y.

    Compared at cells at least 4h from the source, relative to max |G| there.
    """
    iy, ix = grid.nearest_cell(source)
    values = np.zeros(grid.shape)
    values[iy, ix] = 1.0 / grid.cell_area
    op = build_green(grid, GreenBackend.MASKED_DIRECT)
    psi = stream(op, ScalarField(grid, values)).psi.values
    y = (float(grid.x[ix]), float(grid.y[iy]))
    xx, yy = grid.mesh
    far = grid.inside & (np.hypot(xx - y[0], yy - y[1]) >= 4.0 * grid.h)
    targets = zip(xx[far], yy[far], strict=True)
    exact = np.array([green_disk((float(a), float(b)), y) for a, b in targets])
    return float(np.max(np.abs(psi[far] - exact)) / np.max(np.abs(exact)))


def manufactured_errors(sizes: list[int]) -> list[float]:
    """Max error of -Δψ = 2 sin x sin y on (0, π)² for each grid size."""
    errors = []
    domain = Domain.rectangle(math.pi, math.pi)
    for n in sizes:
        grid = discretize(domain, n)
        omega = ScalarField.from_function(grid, lambda x, y: 2.0 * np.sin(x) * np.sin(y))
        psi = stream(build_green(grid), omega).psi.values
        xx, yy = grid.mesh
        errors.append(float(np.max(np.abs(psi - np.sin(xx) * np.sin(yy)))))
    return errors


def convergence_orders(errors: list[float]) -> list[float]:
    return [math.log2(a / b) for a, b in zip(errors, errors[1:], strict=False)]


class GreenCheckExperiment(Experiment):
    name = "green-check"
    needs_vortex = False

    def run(self, result: ExperimentResult) -> None:
        n = self.cfg.domain.n
        sizes = [max(n // 4, 8), max(n // 2, 16), max(n, 32)]
        errors = manufactured_errors(sizes)
        orders = convergence_orders(errors)
        result.report["rectangle"] = {"sizes": sizes, "errors": errors, "orders": orders}
        result.check(min(orders) >= MIN_ORDER, "rectangle_convergence_order")
        result.summary.append(("rectangle orders", ", ".join(f"{p:.3f}" for p in orders)))
        if self.grid.domain.kind is DomainKind.DISK:
            gap = disk_discrepancy(self.grid)
            column = point_source_discrepancy(self.grid)
            result.report["disk"] = {
                "n": n,
                "masked_vs_analytic": gap,
                "point_source_vs_green": column,
            }
            result.check(gap <= DISK_TOLERANCE, "masked_vs_analytic")
            result.check(column <= POINT_SOURCE_TOLERANCE, "point_source_vs_green")
            result.summary += [
                ("masked vs analytic", f"{gap:.3e}"),
                ("point source vs G", f"{column:.3e}"),
            ]

"""Compute a steady double patch and check its properties."""

from typing import Any

import numpy as np

from vortex_patches.domain import integrate
from vortex_patches.errors import NotConverged
from vortex_patches.experiments.base import Experiment, ExperimentResult
from vortex_patches.steady import (
    SteadyPatch,
    boundary_gradient_check,
    level_set_residual,
    solve_steady,
    steadiness_residual,
)


def patch_report(patch: SteadyPatch, test_count: int) -> dict[str, Any]:
    """Summary of a steady patch as written to ``report.json``."""
    cfg = patch.config
    cell = patch.lam * patch.grid.cell_area
    errors = [
        abs(integrate(patch.omega1) - cfg.kappa1),
        abs(integrate(patch.omega2) - cfg.kappa2),
    ]
    gradient = boundary_gradient_check(patch)
    level_set = level_set_residual(patch)
    return {
        "E": patch.energy,
        "mu1": patch.mu1,
        "mu2": patch.mu2,
        "iterations": patch.iterations,
        "converged": patch.converged,
        "circulation_error": max(errors),
        "circulation_tolerance": cell,
        "residual": steadiness_residual(patch, test_count),
        "min_boundary_gradient": gradient.minimum,
        "boundary_gradient": gradient.to_dict(),
        "degenerate_ties": patch.degenerate_ties,
        "tie_counts": list(patch.tie_counts),
        "level_set_violations": list(level_set.violations),
        "energy_nondecreasing": patch.energy_nondecreasing(),
        "lambda": patch.lam,
        "h": patch.grid.h,
        "cells": [int(np.count_nonzero(c.support)) for c, *_ in patch.components()],
    }


class SolveExperiment(Experiment):
    name = "solve"

    def write_patch(self, patch: SteadyPatch) -> None:
        self.out.write_field("omega", patch.omega)
        self.out.write_field("psi", patch.psi)
        self.out.write_csv(
            "energy.csv",
            ({"iteration": k, "E": e} for k, e in enumerate(patch.energy_history)),
        )

    def run(self, result: ExperimentResult) -> None:
        minimum = self.minimum()
        result.report["minimum"] = minimum.to_dict()
        cfg = self.solver_config(minimum)
        try:
            patch = solve_steady(cfg, self.green)
        except NotConverged as exc:
            if isinstance(exc.patch, SteadyPatch):
                self.write_patch(exc.patch)
            raise
        self.write_patch(patch)
        report = patch_report(patch, self.cfg.solver.test_count)
        result.report.update(report)
        result.check(report["energy_nondecreasing"], "energy_nondecreasing")
        result.check(
            report["circulation_error"] <= report["circulation_tolerance"], "circulation_error"
        )
        result.check(patch.mu1 > 0 and patch.mu2 > 0, "mu_positive")
        result.check(boundary_gradient_check(patch).passed, "boundary_gradient_negative")
        result.summary += [
            ("E", f"{patch.energy:.10g}"),
            ("mu1, mu2", f"{patch.mu1:.6g}, {patch.mu2:.6g}"),
            ("iterations", str(patch.iterations)),
            ("residual", f"{report['residual']:.3e}"),
            ("min boundary gradient", f"{report['min_boundary_gradient']:.4g}"),
            ("degenerate ties", str(patch.degenerate_ties)),
        ]

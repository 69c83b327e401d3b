"""Base class for experiments run from the command line."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from vortex_patches.config import RunConfig, build_backend, build_domain
from vortex_patches.domain import Domain, DomainKind, Grid, discretize
from vortex_patches.errors import ConfigError, VortexPatchError
from vortex_patches.green import DiskGreen, GreenEvaluator, GreenOperator, GridGreen, build_green
from vortex_patches.kirchhoff_routh import KRMinimum, KRPoint, SearchBox, find_local_min
from vortex_patches.report import BASELINE_FILE, BaselineStore, RunDirectory
from vortex_patches.steady import SolverConfig

logger = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    """What an experiment hands back to the CLI."""

    report: dict[str, Any] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    # (label, value) pairs for the console summary
    summary: list[tuple[str, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def check(self, ok: bool | None, name: str) -> None:
        """Record ``name`` as failed when ``ok`` is False (None means skipped)."""
        if ok is False:
            self.failures.append(name)


class Experiment(ABC):
    """One command: validates its configuration, computes, writes artifacts."""

    # command name
    name: str
    # whether κ₁ and κ₂ must be configured
    needs_vortex = True

    def __init__(self, cfg: RunConfig) -> None:
        self.cfg = cfg
        self.out = RunDirectory(Path(cfg.out_dir))
        self._grid: Grid | None = None
        self._green: GreenOperator | None = None

    @abstractmethod
    def run(self, result: ExperimentResult) -> None:
        """Compute and write artifacts, filling ``result``."""
        ...

    def execute(self) -> ExperimentResult:
        """Run the experiment and write ``config.json`` and ``report.json``.

        Configuration problems propagate as ConfigError; any other package
        error ends the run and is listed among the failures.
        """
        if self.needs_vortex:
            self.cfg.require_vortex()
        self.out.write_config(self.cfg)
        result = ExperimentResult()
        try:
            self.run(result)
        except ConfigError:
            raise
        except (VortexPatchError, ValueError) as exc:
            logger.error("%s failed: %s", self.name, exc)
            result.failures.append(f"{type(exc).__name__}: {exc}")
        result.report["command"] = self.name
        result.report["failures"] = list(result.failures)
        result.report["passed"] = result.passed
        self.out.write_report(result.report)
        return result

    def baselines(self) -> BaselineStore:
        """Store of pinned values: ``run.baseline``, or ``baseline.json`` in the output."""
        path = self.cfg.run.baseline
        return BaselineStore(Path(path) if path else self.out.path / BASELINE_FILE)

    @property
    def domain(self) -> Domain:
        return self.grid.domain

    @property
    def grid(self) -> Grid:
        if self._grid is None:
            self._grid = discretize(build_domain(self.cfg.domain), self.cfg.domain.n)
        return self._grid

    @property
    def green(self) -> GreenOperator:
        if self._green is None:
            self._green = build_green(self.grid, build_backend(self.cfg.domain))
        return self._green

    def evaluator(self) -> GreenEvaluator:
        """Pointwise Green function: images formula on the disk, grid otherwise."""
        if self.cfg.domain.kind == "disk":
            return DiskGreen()
        return GridGreen(self.green)

    def seed_point(self) -> KRPoint:
        """Configured vortex positions, or a symmetric guess about the centre."""
        kappa1, kappa2 = self.cfg.require_vortex()
        v = self.cfg.vortex
        domain = build_domain(self.cfg.domain)
        cx, cy = domain.center
        if domain.kind is DomainKind.DISK:
            offset = 0.5
        else:
            offset = domain.width / 4
        x1 = v.x1 if v.x1 is not None else (cx + offset, cy)
        x2 = v.x2 if v.x2 is not None else (cx - offset, cy)
        return KRPoint(x1, x2, kappa1, kappa2)

    def minimum(self) -> KRMinimum:
        v = self.cfg.vortex
        seed = self.seed_point()
        return find_local_min(
            seed,
            SearchBox.around(seed, v.search_half_width),
            self.evaluator(),
            scan_steps=v.scan_steps,
            delta=v.delta,
        )

    def solver_config(self, minimum: KRMinimum, lam: float | None = None) -> SolverConfig:
        s = self.cfg.solver
        return SolverConfig.from_minimum(
            minimum,
            s.lam if lam is None else lam,
            self.grid,
            max_iters=s.max_iters,
            energy_tol=s.energy_tol,
        )

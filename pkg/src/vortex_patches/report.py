"""Output directories of experiment runs.

Every command writes into one directory:

    <out_dir>/
    ├── config.json        # resolved RunConfig used by the run
    ├── report.json        # summary, invariant verdicts and failures
    ├── *.csv              # tables (header row, 17 significant digits)
    ├── *.vpf              # binary field dumps (see vortex_patches.fieldio)
    ├── *.pgm              # 8-bit previews of the dumped fields
    └── baseline.json      # values pinned by the first run (unless run.baseline is set)

JSON is written with sorted keys and 2-space indentation; non-finite numbers
become ``null`` so identical runs produce identical files.
"""

import csv
import fcntl
import json
import logging
import math
from collections.abc import Iterable, Iterator, Mapping
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from vortex_patches.config import RunConfig, build_backend, build_domain, parse_config
from vortex_patches.domain import Ball, ScalarField, discretize
from vortex_patches.errors import ConfigError
from vortex_patches.fieldio import read_field_dump, write_field_dump, write_pgm
from vortex_patches.green import GreenOperator, build_green, energy_of, stream
from vortex_patches.steady import SolverConfig, SteadyPatch

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
REPORT_FILE = "report.json"
BASELINE_FILE = "baseline.json"
DUMP_SUFFIX = ".vpf"
PREVIEW_SUFFIX = ".pgm"


def _plain(value: Any) -> Any:
    """Recursively convert to JSON-native values (non-finite floats to None)."""
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.bool_ | bool):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, float | np.floating):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dumps(data: Any) -> str:
    return json.dumps(_plain(data), sort_keys=True, indent=2) + "\n"


def format_cell(value: Any) -> str:
    """CSV cell text: floats with 17 significant digits, booleans lowercase."""
    if value is None:
        return ""
    if isinstance(value, bool | np.bool_):
        return "true" if value else "false"
    if isinstance(value, float | np.floating):
        value = float(value)
        return format(value, ".17g") if math.isfinite(value) else "nan"
    return str(value)


class RunDirectory:
    """Writes the artifacts of one run into ``path``."""

    def __init__(self, path: Path) -> None:
        self.path = Path(path)
        self.config_path = self.path / CONFIG_FILE
        self.report_path = self.path / REPORT_FILE

    def _ensure_dir(self) -> None:
        self.path.mkdir(parents=True, exist_ok=True)

    def write_json(self, name: str, data: Any) -> Path:
        self._ensure_dir()
        target = self.path / name
        target.write_text(dumps(data))
        return target

    def write_config(self, cfg: RunConfig) -> Path:
        return self.write_json(CONFIG_FILE, cfg.to_dict())

    def write_report(self, data: Mapping[str, Any]) -> Path:
        return self.write_json(REPORT_FILE, data)

    def write_csv(self, name: str, rows: Iterable[Mapping[str, Any]]) -> Path:
        """Write dict rows; columns appear in order of first use."""
        self._ensure_dir()
        rows = list(rows)
        target = self.path / name
        with open(target, "w", newline="") as out:
            writer = csv.writer(out, lineterminator="\n")
            if rows:
                header = list(dict.fromkeys(key for row in rows for key in row))
                writer.writerow(header)
                for row in rows:
                    writer.writerow([format_cell(row.get(key)) for key in header])
        return target

    def write_field(self, name: str, f: ScalarField, preview: bool = True) -> Path:
        """Dump ``f`` to ``<name>.vpf`` and optionally ``<name>.pgm``."""
        self._ensure_dir()
        target = self.path / f"{name}{DUMP_SUFFIX}"
        write_field_dump(target, f)
        if preview:
            write_pgm(self.path / f"{name}{PREVIEW_SUFFIX}", f)
        return target

    def read_config(self) -> RunConfig:
        return parse_config(self.config_path.read_text())

    def read_report(self) -> dict[str, Any]:
        data: dict[str, Any] = json.loads(self.report_path.read_text())
        return data


class BaselineStore:
    """Reference values pinned by the first run and compared on reruns.

    One JSON file maps a run key to the values recorded for it; a sibling
    ``.lock`` file serializes concurrent runs.
    """

    def __init__(self, path: Path) -> None:
        self.path = Path(path)
        self.lock_path = self.path.with_name(self.path.name + ".lock")

    @contextmanager
    def lock(self, exclusive: bool = False) -> Iterator[None]:
        """Hold a shared (read) or exclusive (write) lock on the store."""
        self.path.parent.mkdir(parents=True, exist_ok=True)
        lock_file = open(self.lock_path, "w")
        try:
            fcntl.flock(lock_file.fileno(), fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH)
            yield
        finally:
            fcntl.flock(lock_file.fileno(), fcntl.LOCK_UN)
            lock_file.close()

    def _read_unlocked(self) -> dict[str, dict[str, Any]]:
        if not self.path.exists():
            return {}
        try:
            data = json.loads(self.path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cannot read baselines: {exc}", field="run.baseline") from None
        if not isinstance(data, dict):
            raise ConfigError("baseline file must hold a JSON object", field="run.baseline")
        return data

    def get(self, key: str) -> dict[str, Any] | None:
        with self.lock():
            return self._read_unlocked().get(key)

    def pin(self, key: str, values: Mapping[str, Any]) -> tuple[dict[str, Any], bool]:
        """Recorded values for ``key``, recording ``values`` if there are none.

        Returns the pinned values and whether this call recorded them.
        """
        with self.lock(exclusive=True):
            data = self._read_unlocked()
            if key in data:
                return data[key], False
            data[key] = _plain(dict(values))
            scratch = self.path.with_name(self.path.name + ".tmp")
            scratch.write_text(dumps(data))
            scratch.replace(self.path)
        logger.info("pinned baseline %s in %s", key, self.path)
        return data[key], True


def baseline_key(command: str, **parts: Any) -> str:
    """Stable key for a run: the command and its defining settings."""
    settings = ",".join(f"{name}={_plain(parts[name])}" for name in sorted(parts))
    return f"{command}[{settings}]"


def within(value: float, pinned: float | None, rtol: float) -> bool | None:
    """|value - pinned| <= rtol·|pinned|; None when nothing is pinned."""
    if pinned is None or not math.isfinite(value):
        return None if pinned is None else False
    return abs(value - pinned) <= rtol * abs(pinned)


@dataclass(frozen=True, eq=False)
class SavedPatch:
    """A steady patch rebuilt from a ``solve`` output directory."""

    config: RunConfig
    patch: SteadyPatch
    green: GreenOperator


def load_patch(path: Path) -> SavedPatch:
    """Rebuild the steady patch written by ``solve`` into ``path``.

    The grid and Green operator are recomputed from ``config.json``; ω comes
    from the ``omega`` dump and the thresholds and balls from ``report.json``.
    """
    run = RunDirectory(path)
    if not run.config_path.exists() or not run.report_path.exists():
        raise ConfigError(f"{path} is not a solve output directory", field="patch")
    cfg = run.read_config()
    report = run.read_report()
    if "minimum" not in report or report.get("mu1") is None:
        raise ConfigError(f"{path} does not hold a converged patch", field="patch")
    kappa1, kappa2 = cfg.require_vortex()
    grid = discretize(build_domain(cfg.domain), cfg.domain.n)
    green = build_green(grid, build_backend(cfg.domain))
    omega = read_field_dump(run.path / f"omega{DUMP_SUFFIX}").to_field(grid)
    minimum = report["minimum"]
    delta = float(minimum["delta"])
    solver_cfg = SolverConfig(
        kappa1=kappa1,
        kappa2=kappa2,
        b1=Ball(tuple(minimum["x1"]), delta),  # type: ignore[arg-type]
        b2=Ball(tuple(minimum["x2"]), delta),  # type: ignore[arg-type]
        lam=cfg.solver.lam,
        grid=grid,
        max_iters=cfg.solver.max_iters,
        energy_tol=cfg.solver.energy_tol,
    )
    sf = stream(green, omega)
    e = energy_of(sf)
    patch = SteadyPatch(
        config=solver_cfg,
        omega=omega,
        omega1=ScalarField(grid, np.maximum(omega.values, 0.0)),
        omega2=ScalarField(grid, np.minimum(omega.values, 0.0)),
        mu1=float(report["mu1"]),
        mu2=float(report["mu2"]),
        stream=sf,
        energy=e,
        iterations=int(report.get("iterations", 0)),
        converged=True,
        energy_history=(e,),
        degenerate_ties=bool(report.get("degenerate_ties", False)),
    )
    logger.info("loaded steady patch from %s (E=%.8g)", path, e)
    return SavedPatch(cfg, patch, green)

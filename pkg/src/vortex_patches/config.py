"""Run configuration: sections, parsing and validation.

A configuration is either a JSON document::

    {"domain": {"kind": "disk", "n": 128}, "vortex": {"kappa1": 1, "kappa2": -1}}

or an INI file with the same sections::

    [domain]
    kind = disk
    n = 128

    [vortex]
    kappa1 = 1
    kappa2 = -1

Sections are ``domain``, ``vortex``, ``solver``, ``evolution`` and ``run``.
Unknown sections or keys and repeated keys are errors.
"""

import configparser
import json
import math
import types
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Union, get_args, get_origin, get_type_hints

import numpy as np

from vortex_patches.domain import Domain
from vortex_patches.errors import ConfigError
from vortex_patches.green import GreenBackend

DOMAIN_KINDS = ("disk", "rectangle", "bitmap")
BACKENDS = ("analytic", "fast", "masked")
_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


@dataclass(frozen=True)
class DomainSection:
    kind: str = "disk"
    n: int = 256
    width: float = 1.0
    height: float = 1.0
    mask: str | None = None  # .npy boolean array for bitmap domains
    backend: str | None = None


@dataclass(frozen=True)
class VortexSection:
    kappa1: float | None = None
    kappa2: float | None = None
    x1: tuple[float, float] | None = None
    x2: tuple[float, float] | None = None
    search_half_width: float = 0.3
    scan_steps: int = 9
    delta: float | None = None


@dataclass(frozen=True)
class SolverSection:
    lam: float = 200.0
    lambdas: tuple[float, ...] = (100.0, 200.0, 400.0, 800.0)
    max_iters: int = 500
    energy_tol: float = 1e-10
    test_count: int = 30
    refine: bool = False


@dataclass(frozen=True)
class EvolutionSection:
    turnovers: float = 3.0
    trials: int = 64
    cfl: float = 0.4
    perturb: str = "translate:0.01"
    sample_every: float = 0.05
    snapshot_every: float = 0.5


@dataclass(frozen=True)
class RunSection:
    out_dir: str = "out"
    seed: int = 0
    threads: int = 1
    baseline: str | None = None  # pinned-values file; defaults to <out_dir>/baseline.json


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration of one command."""

    domain: DomainSection = field(default_factory=DomainSection)
    vortex: VortexSection = field(default_factory=VortexSection)
    solver: SolverSection = field(default_factory=SolverSection)
    evolution: EvolutionSection = field(default_factory=EvolutionSection)
    run: RunSection = field(default_factory=RunSection)

    @property
    def out_dir(self) -> str:
        return self.run.out_dir

    @property
    def seed(self) -> int:
        return self.run.seed

    @property
    def threads(self) -> int:
        return self.run.threads

    def to_dict(self) -> dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        data = asdict(self)
        for section in data.values():
            for key, value in section.items():
                if isinstance(value, tuple):
                    section[key] = list(value)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        """Build from nested section dictionaries (values may be strings)."""
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError("unknown section", field=unknown[0])
        kwargs = {}
        for name, section_type in get_type_hints(cls).items():
            values = data.get(name, {})
            if not isinstance(values, dict):
                raise ConfigError("expected a table of key = value pairs", field=name)
            kwargs[name] = _build_section(name, section_type, values)
        return cls(**kwargs).validate()

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        """Apply ``{"section.key": value}`` overrides; ``None`` values are skipped."""
        data = self.to_dict()
        for dotted, value in overrides.items():
            if value is None:
                continue
            section, _, key = dotted.partition(".")
            if section not in data or key not in data[section]:
                raise ConfigError("unknown option", field=dotted)
            data[section][key] = value
        return RunConfig.from_dict(data)

    def validate(self) -> "RunConfig":
        """Check value ranges; raises ConfigError naming the field."""
        d, v, s, e, r = self.domain, self.vortex, self.solver, self.evolution, self.run
        _check(d.kind in DOMAIN_KINDS, "domain.kind", f"must be one of {', '.join(DOMAIN_KINDS)}")
        _check(
            d.backend is None or d.backend in BACKENDS,
            "domain.backend",
            f"must be one of {', '.join(BACKENDS)}",
        )
        _check(d.n >= 4, "domain.n", "must be at least 4")
        _check(d.width > 0, "domain.width", "must be positive")
        _check(d.height > 0, "domain.height", "must be positive")
        _check(
            d.kind != "bitmap" or d.mask is not None,
            "domain.mask",
            "bitmap domains need a mask file",
        )
        _check(v.kappa1 is None or v.kappa1 > 0, "vortex.kappa1", "must be positive")
        _check(v.kappa2 is None or v.kappa2 < 0, "vortex.kappa2", "must be negative")
        _check(v.search_half_width > 0, "vortex.search_half_width", "must be positive")
        _check(v.scan_steps >= 2, "vortex.scan_steps", "must be at least 2")
        _check(v.delta is None or v.delta > 0, "vortex.delta", "must be positive")
        _check(s.lam > 0, "solver.lam", "must be positive")
        _check(
            len(s.lambdas) > 0 and all(x > 0 for x in s.lambdas),
            "solver.lambdas",
            "must be a nonempty list of positive values",
        )
        _check(s.max_iters >= 1, "solver.max_iters", "must be at least 1")
        _check(s.energy_tol >= 0, "solver.energy_tol", "must be nonnegative")
        _check(s.test_count >= 1, "solver.test_count", "must be at least 1")
        _check(e.turnovers > 0, "evolution.turnovers", "must be positive")
        _check(e.trials >= 0, "evolution.trials", "must be nonnegative")
        _check(0 < e.cfl <= 0.5, "evolution.cfl", "must be in (0, 0.5]")
        _check(e.sample_every > 0, "evolution.sample_every", "must be positive")
        _check(e.snapshot_every > 0, "evolution.snapshot_every", "must be positive")
        _check(r.threads >= 1, "run.threads", "must be at least 1")
        _check(0 <= r.seed < 2**64, "run.seed", "must fit in 64 bits")
        return self

    def require_vortex(self) -> tuple[float, float]:
        """κ₁ and κ₂, which have no defaults."""
        if self.vortex.kappa1 is None:
            raise ConfigError("missing required value", field="vortex.kappa1")
        if self.vortex.kappa2 is None:
            raise ConfigError("missing required value", field="vortex.kappa2")
        return self.vortex.kappa1, self.vortex.kappa2


def _check(ok: bool, name: str, message: str) -> None:
    if not ok:
        raise ConfigError(message, field=name)


def _build_section(name: str, section_type: type, values: dict[str, Any]) -> Any:
    hints = get_type_hints(section_type)
    kwargs = {}
    for key, raw in values.items():
        if key not in hints:
            raise ConfigError("unknown key", field=f"{name}.{key}")
        kwargs[key] = convert(raw, hints[key], f"{name}.{key}")
    return section_type(**kwargs)


def _floats(raw: Any, where: str) -> list[float]:
    items = raw.split(",") if isinstance(raw, str) else raw
    if not isinstance(items, list | tuple):
        raise ConfigError(f"expected a list of numbers, got {raw!r}", field=where)
    kept = [item for item in items if not (isinstance(item, str) and not item.strip())]
    return [convert(item, float, where) for item in kept]


def convert(raw: Any, hint: Any, where: str) -> Any:
    """Convert a JSON value or INI string to the type ``hint``."""
    origin = get_origin(hint)
    args = get_args(hint)
    if origin in (Union, types.UnionType) and type(None) in args:
        if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none", "null")):
            return None
        (hint,) = (a for a in args if a is not type(None))
        origin, args = get_origin(hint), get_args(hint)
    if origin is tuple:
        values = _floats(raw, where)
        if args and args[-1] is not Ellipsis and len(values) != len(args):
            raise ConfigError(f"expected {len(args)} numbers, got {len(values)}", field=where)
        return tuple(values)
    if hint is bool:
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str) and raw.strip().lower() in _TRUE + _FALSE:
            return raw.strip().lower() in _TRUE
        raise ConfigError(f"expected a boolean, got {raw!r}", field=where)
    if hint is int:
        if isinstance(raw, bool):
            raise ConfigError(f"expected an integer, got {raw!r}", field=where)
        try:
            value = float(raw) if not isinstance(raw, int) else raw
        except (TypeError, ValueError):
            raise ConfigError(f"expected an integer, got {raw!r}", field=where) from None
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"expected an integer, got {raw!r}", field=where)
        return int(value)
    if hint is float:
        if isinstance(raw, bool):
            raise ConfigError(f"expected a number, got {raw!r}", field=where)
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"expected a number, got {raw!r}", field=where) from None
        if not math.isfinite(value):
            raise ConfigError(f"expected a finite number, got {raw!r}", field=where)
        return value
    if hint is str:
        if not isinstance(raw, str):
            raise ConfigError(f"expected a string, got {raw!r}", field=where)
        return raw.strip()
    raise TypeError(f"unsupported option type {hint!r}")


def _reject_duplicates(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in pairs:
        if key in out:
            raise ConfigError("duplicate key", field=key)
        out[key] = value
    return out


def parse_config(text: str) -> RunConfig:
    """Parse a JSON or INI configuration document."""
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text, object_pairs_hook=_reject_duplicates)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}: {exc.msg}") from None
        return RunConfig.from_dict(data)
    parser = configparser.ConfigParser(strict=True, interpolation=None)
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        where = f"{exc.section}.{exc.option}"
        raise ConfigError(f"line {exc.lineno}: duplicate key", field=where) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"line {exc.lineno}: duplicate section", field=exc.section) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    data = {name: dict(parser.items(name)) for name in parser.sections()}
    return RunConfig.from_dict(data)


def build_domain(section: DomainSection) -> Domain:
    """Domain described by a ``[domain]`` section."""
    if section.kind == "disk":
        return Domain.unit_disk()
    if section.kind == "rectangle":
        return Domain.rectangle(section.width, section.height)
    assert section.mask is not None
    try:
        mask = np.load(section.mask)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read mask: {exc}", field="domain.mask") from None
    return Domain.bitmap(mask, section.width, section.height)


def build_backend(section: DomainSection) -> GreenBackend | None:
    """Green backend requested by a ``[domain]`` section (None: automatic)."""
    if section.backend is None:
        return None
    return {
        "analytic": GreenBackend.ANALYTIC_DISK,
        "fast": GreenBackend.FAST_RECTANGLE,
        "masked": GreenBackend.MASKED_DIRECT,
    }[section.backend]

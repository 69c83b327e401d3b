"""Tests for the config module."""

import json

import numpy as np
import pytest

from vortex_patches.config import (
    DomainSection,
    RunConfig,
    build_backend,
    build_domain,
    parse_config,
)
from vortex_patches.domain import DomainKind
from vortex_patches.errors import ConfigError
from vortex_patches.green import GreenBackend

MINIMAL = """
[vortex]
kappa1 = 1
kappa2 = -1
"""


def field_of(text: str) -> str | None:
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value.field


class TestParseConfig:
    """Tests for parse_config."""

    def test_defaults(self):
        """Unset keys take their defaults."""
        config = parse_config(MINIMAL)
        assert config.vortex.kappa1 == 1.0
        assert config.vortex.kappa2 == -1.0
        assert config.domain.kind == "disk"
        assert config.domain.n == 256
        assert config.solver.lambdas == (100.0, 200.0, 400.0, 800.0)
        assert config.out_dir == "out"
        assert config.seed == 0
        assert config.threads == 1

    def test_json_matches_ini(self):
        """Both formats describe the same configuration."""
        ini = MINIMAL + "\n[domain]\nn = 64\n\n[solver]\nlambdas = 60, 80\n"
        doc = {
            "vortex": {"kappa1": 1, "kappa2": -1},
            "domain": {"n": 64},
            "solver": {"lambdas": [60, 80]},
        }
        assert parse_config(ini) == parse_config(json.dumps(doc))

    def test_lambdas(self):
        """Comma-separated lists become float tuples."""
        config = parse_config(MINIMAL + "\n[solver]\nlambdas = 60, 80,\n")
        assert config.solver.lambdas == (60.0, 80.0)

    def test_points_and_booleans(self):
        """Coordinate pairs, booleans and optional values."""
        config = parse_config(
            MINIMAL + "x1 = 0.5, 0\n\n[solver]\nrefine = yes\n\n[domain]\nbackend = none\n"
        )
        assert config.vortex.x1 == (0.5, 0.0)
        assert config.solver.refine is True
        assert config.domain.backend is None

    def test_integer_from_float_text(self):
        """Integral numbers written as floats are accepted."""
        assert parse_config(MINIMAL + "\n[domain]\nn = 128.0\n").domain.n == 128

    @pytest.mark.parametrize(
        "extra, field",
        [
            ("\n[domain]\nn = abc\n", "domain.n"),
            ("\n[domain]\nn = 12.5\n", "domain.n"),
            ("\n[solver]\nrefine = maybe\n", "solver.refine"),
            ("x1 = 1, 2, 3\n", "vortex.x1"),
            ("\n[solver]\nlam = inf\n", "solver.lam"),
            ("\n[solver]\nfoo = 1\n", "solver.foo"),
            ("\n[extra]\nkey = 1\n", "extra"),
            ("\n[evolution]\ncfl = 0.6\n", "evolution.cfl"),
            ("\n[domain]\nkind = torus\n", "domain.kind"),
            ("\n[domain]\nkind = bitmap\n", "domain.mask"),
            ("\n[run]\nthreads = 0\n", "run.threads"),
        ],
    )
    def test_invalid_values(self, extra, field):
        """Errors name the offending field."""
        assert field_of(MINIMAL + extra) == field

    def test_positive_kappa2(self):
        """κ₂ must be negative."""
        assert field_of("[vortex]\nkappa1 = 1\nkappa2 = 1\n") == "vortex.kappa2"

    def test_duplicate_ini_key(self):
        """Repeated keys are rejected."""
        assert field_of(MINIMAL + "kappa1 = 2\n") == "vortex.kappa1"

    def test_duplicate_ini_section(self):
        """Repeated sections are rejected."""
        assert field_of(MINIMAL + "\n[vortex]\ndelta = 0.1\n") == "vortex"

    def test_duplicate_json_key(self):
        """Repeated JSON keys are rejected."""
        assert field_of('{"vortex": {"kappa1": 1, "kappa1": 2}}') == "kappa1"

    def test_malformed_json(self):
        """Syntax errors become ConfigError."""
        with pytest.raises(ConfigError):
            parse_config('{"vortex": ')

    def test_message_carries_field(self):
        """The field prefixes the message."""
        with pytest.raises(ConfigError, match="^domain.n: "):
            parse_config(MINIMAL + "\n[domain]\nn = 2\n")


class TestRunConfig:
    """Tests for RunConfig helpers."""

    def test_require_vortex(self):
        """κ₁ and κ₂ have no defaults."""
        with pytest.raises(ConfigError) as info:
            RunConfig().require_vortex()
        assert info.value.field == "vortex.kappa1"
        with pytest.raises(ConfigError) as info:
            parse_config("[vortex]\nkappa1 = 1\n").require_vortex()
        assert info.value.field == "vortex.kappa2"
        assert parse_config(MINIMAL).require_vortex() == (1.0, -1.0)

    def test_overrides(self):
        """Dotted overrides replace values; None leaves them alone."""
        config = parse_config(MINIMAL).with_overrides(
            {"solver.lam": 60, "domain.n": None, "run.out_dir": "elsewhere"}
        )
        assert config.solver.lam == 60.0
        assert config.domain.n == 256
        assert config.out_dir == "elsewhere"

    def test_unknown_override(self):
        """Overrides must name an existing field."""
        with pytest.raises(ConfigError) as info:
            RunConfig().with_overrides({"solver.nope": 1})
        assert info.value.field == "solver.nope"

    def test_override_validates(self):
        """Overridden values are validated."""
        with pytest.raises(ConfigError):
            RunConfig().with_overrides({"vortex.kappa2": 1.0})

    def test_baseline_file(self):
        """The pinned-values file is optional and read from [run]."""
        assert parse_config(MINIMAL).run.baseline is None
        config = parse_config(MINIMAL + "\n[run]\nbaseline = pins.json\n")
        assert config.run.baseline == "pins.json"

    def test_dict_roundtrip(self):
        """to_dict is JSON-ready and from_dict restores it."""
        config = parse_config(MINIMAL + "x2 = -0.5, 0\n")
        data = json.loads(json.dumps(config.to_dict()))
        assert data["vortex"]["x2"] == [-0.5, 0.0]
        assert RunConfig.from_dict(data) == config


class TestBuilders:
    """Tests for build_domain and build_backend."""

    def test_disk(self):
        """The default domain is the unit disk."""
        assert build_domain(DomainSection()).kind is DomainKind.DISK

    def test_rectangle(self):
        """Rectangles take width and height."""
        domain = build_domain(DomainSection(kind="rectangle", width=2.0, height=1.0))
        assert domain.kind is DomainKind.RECTANGLE
        assert (domain.width, domain.height) == (2.0, 1.0)

    def test_bitmap(self, tmp_path):
        """Masks are read from .npy files."""
        path = tmp_path / "mask.npy"
        np.save(path, np.ones((8, 8), dtype=bool))
        domain = build_domain(DomainSection(kind="bitmap", mask=str(path)))
        assert domain.kind is DomainKind.BITMAP

    def test_missing_mask(self, tmp_path):
        """Unreadable masks are configuration errors."""
        section = DomainSection(kind="bitmap", mask=str(tmp_path / "missing.npy"))
        with pytest.raises(ConfigError) as info:
            build_domain(section)
        assert info.value.field == "domain.mask"

    def test_backend(self):
        """Backend names map to GreenBackend members."""
        assert build_backend(DomainSection()) is None
        assert build_backend(DomainSection(backend="fast")) is GreenBackend.FAST_RECTANGLE
        assert build_backend(DomainSection(backend="masked")) is GreenBackend.MASKED_DIRECT
        assert build_backend(DomainSection(backend="analytic")) is GreenBackend.ANALYTIC_DISK

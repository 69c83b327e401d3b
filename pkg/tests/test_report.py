"""Tests for the report module."""

import json
import math

import numpy as np
import pytest

from vortex_patches.config import parse_config
from vortex_patches.errors import ConfigError
from vortex_patches.report import (
    BaselineStore,
    RunDirectory,
    baseline_key,
    dumps,
    format_cell,
    load_patch,
    within,
)

CONFIG = "[vortex]\nkappa1 = 1\nkappa2 = -1\n\n[domain]\nn = 64\n"


class TestSerialization:
    """Tests for JSON and CSV value formatting."""

    def test_dumps(self):
        """Sorted keys, plain values and null for non-finite numbers."""
        text = dumps({"b": math.nan, "a": (np.float64(1.5), np.int64(2), np.bool_(True))})
        assert json.loads(text) == {"a": [1.5, 2, True], "b": None}
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")

    def test_format_cell(self):
        """17 significant digits and lowercase booleans."""
        assert format_cell(0.1) == "0.10000000000000001"
        assert format_cell(True) == "true"
        assert format_cell(None) == ""
        assert format_cell(math.inf) == "nan"
        assert format_cell(3) == "3"


class TestRunDirectory:
    """Tests for RunDirectory."""

    def test_csv_union_header(self, tmp_path):
        """Columns appear in order of first use; missing cells are empty."""
        run = RunDirectory(tmp_path / "out")
        path = run.write_csv("rows.csv", [{"t": 0.0, "E": 1.0}, {"t": 0.5, "mass": 2}])
        lines = path.read_text().splitlines()
        assert lines[0] == "t,E,mass"
        assert lines[1] == "0,1,"
        assert lines[2] == "0.5,,2"

    def test_config_roundtrip(self, tmp_path):
        """The written config parses back to the same RunConfig."""
        config = parse_config(CONFIG)
        run = RunDirectory(tmp_path)
        run.write_config(config)
        assert run.read_config() == config

    def test_report(self, tmp_path):
        """Reports are read back as dictionaries."""
        run = RunDirectory(tmp_path)
        run.write_report({"passed": True, "energy": 0.25})
        assert run.read_report() == {"energy": 0.25, "passed": True}

    def test_field(self, tmp_path, square_patch):
        """Fields get a dump and a preview."""
        run = RunDirectory(tmp_path)
        target = run.write_field("omega", square_patch.omega)
        assert target.name == "omega.vpf"
        assert (tmp_path / "omega.pgm").exists()
        run.write_field("psi", square_patch.psi, preview=False)
        assert not (tmp_path / "psi.pgm").exists()


class TestBaselineStore:
    """Tests for pinned reference values."""

    def test_first_run_pins(self, tmp_path):
        """The first call records; later calls return what was recorded."""
        store = BaselineStore(tmp_path / "baseline.json")
        assert store.get("sweep") is None
        pinned, fresh = store.pin("sweep", {"ratio": np.float64(2.5)})
        assert fresh
        assert pinned == {"ratio": 2.5}
        again, fresh = store.pin("sweep", {"ratio": 9.0})
        assert not fresh
        assert again == {"ratio": 2.5}
        assert store.get("sweep") == {"ratio": 2.5}
        assert store.lock_path.exists()

    def test_keys_are_independent(self, tmp_path):
        """Different run keys pin separately in one file."""
        store = BaselineStore(tmp_path / "nested" / "baseline.json")
        store.pin("a", {"x": 1.0})
        store.pin("b", {"x": 2.0})
        assert json.loads(store.path.read_text()) == {"a": {"x": 1.0}, "b": {"x": 2.0}}

    def test_corrupt_file(self, tmp_path):
        """An unreadable store is a configuration error."""
        path = tmp_path / "baseline.json"
        path.write_text("[1, 2")
        with pytest.raises(ConfigError):
            BaselineStore(path).get("a")

    def test_key(self):
        """Settings are listed in sorted order."""
        key = baseline_key("evolve", turnovers=3.0, n=128, kappa=(1.0, -1.0))
        assert key == "evolve[kappa=[1.0, -1.0],n=128,turnovers=3.0]"

    def test_within(self):
        """Relative comparison against the pinned value."""
        assert within(1.05, 1.0, 0.10)
        assert not within(1.2, 1.0, 0.10)
        assert within(1.2, None, 0.10) is None
        assert within(math.nan, 1.0, 0.10) is False


class TestLoadPatch:
    """Tests for load_patch error handling."""

    def test_empty_directory(self, tmp_path):
        """A directory without run files."""
        with pytest.raises(ConfigError) as info:
            load_patch(tmp_path)
        assert info.value.field == "patch"

    def test_failed_solve(self, tmp_path):
        """A run whose report holds no converged patch."""
        run = RunDirectory(tmp_path)
        run.write_config(parse_config(CONFIG))
        run.write_report({"failures": ["NotConverged: no fixed point"]})
        with pytest.raises(ConfigError, match="converged"):
            load_patch(tmp_path)

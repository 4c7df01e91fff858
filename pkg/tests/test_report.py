"""
Tests for JSON serialisation and the text renderers.
"""

import json

import numpy as np
import pytest

from src.models.montecarlo import SimReport
from src.ui.report import dumps, jsonable, render_rate_table, write_json


def report(label="q=2", degenerate=1):
    levels = (0.01, 0.05)
    rates = {name: {"0.01": 1.0, "0.05": 5.0} for name in ("LR", "LR*", "LR**")}
    rates["LR*"]["0.05"] = None
    exclude = {name: {"0.01": 2.0, "0.05": 6.0} for name in ("LR*", "LR**")}
    return SimReport(label, 2, (10, 10, 10), levels, 100, 98, degenerate, rates, exclude,
                     {"not_converged": 2}, wall_clock=1.5)


class TestJson:
    """Stable serialisation."""

    def test_jsonable(self):
        value = jsonable({"a": np.float64(0.1), "b": np.array([1, 2]), 3: np.int64(4),
                          "c": float('inf'), "d": np.bool_(True)})
        assert value == {"a": 0.1, "b": [1, 2], "3": 4, "c": None, "d": True}

    def test_round_trip_floats(self):
        x = 0.1 + 0.2
        assert json.loads(dumps({"x": x}))["x"] == x

    def test_seventeen_digits(self):
        text = dumps({"a": 0.1, "b": np.float64(2.0), "c": 1e300, "d": [np.inf, -0.5]})
        assert '"a": 0.10000000000000001' in text
        assert '"b": 2.0' in text
        assert json.loads(text) == {"a": 0.1, "b": 2.0, "c": 1e300, "d": [None, -0.5]}

    def test_strings_untouched(self):
        assert json.loads(dumps({"label": "q=2", "n": 3})) == {"label": "q=2", "n": 3}

    def test_sorted_keys(self):
        text = dumps({"b": 1, "a": 2})
        assert text.index('"a"') < text.index('"b"')

    def test_write(self, tmp_path):
        path = tmp_path / "out.json"
        write_json({"x": [np.nan, 1.0]}, path)
        assert json.loads(path.read_text(encoding='utf-8')) == {"x": [None, 1.0]}

    def test_report_dict_excludes_wall_clock(self):
        body = report().to_dict()
        assert "wall_clock" not in body
        assert body["denominators"] == {"fallback": 98, "exclude": 97}
        assert body["nonconvergence_fraction"] == pytest.approx(0.02)


class TestRateTable:
    """Text rendering of rejection rates."""

    def test_rows(self):
        text = render_rate_table([report("q=2"), report("q=3", degenerate=0)])
        lines = text.splitlines()
        assert lines[0] == "Null rejection rates (%)"
        assert any(line.startswith("q=2") for line in lines)
        assert any(line.startswith("q=3") for line in lines)
        assert "replications used: q=2: 98/100, q=3: 98/100" in text

    def test_missing_rate_shown_as_dash(self):
        row = [line for line in render_rate_table([report()]).splitlines()
               if line.startswith("q=2")][0]
        assert "-" in row

    def test_exclude_policy(self):
        row = [line for line in render_rate_table([report()], policy="exclude").splitlines()
               if line.startswith("q=2")][0]
        assert "6.0" in row and "-" not in row.split("|")[1]

    def test_empty(self):
        assert "(no rows)" in render_rate_table([])

    def test_manifest_header(self):
        manifest = {"command": "simulate", "inputs": {"sim.toml": "ab12"}, "seed": 7,
                    "elapsed_seconds": 1.5}
        lines = render_rate_table([report()], manifest=manifest).splitlines()
        assert lines[:4] == ["# command: simulate", "# inputs: sim.toml ab12", "# seed: 7",
                             "# elapsed_seconds: 1.5"]
        assert lines[4] == "Null rejection rates (%)"

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest

from gaussfestoon.config import build_run_config, config_hash
from gaussfestoon.errors import SchemaError
from gaussfestoon.models import LimitPointSet, LimitWindow
from gaussfestoon.parabolic_limit import festoon
from gaussfestoon.report_io import (
    FESTOON_SCHEMA,
    TableSchema,
    festoon_from_rows,
    festoon_rows,
    read_report,
    read_schema,
    read_table,
    schema_for_rows,
    write_report,
    write_table,
)

SCHEMA = TableSchema("demo", (("name", "str"), ("count", "int"), ("value", "float"), ("flag", "bool")))


def test_table_round_trip_with_sidecar(tmp_path: Path) -> None:
    config = build_run_config(flag_values={"command": "simulate", "seed": 1})
    path = tmp_path / "demo.csv"
    rows = [
        {"name": "a", "count": 2, "value": 0.5, "flag": True},
        {"name": "b", "count": None, "value": math.nan, "flag": False},
    ]
    write_table(path, rows, SCHEMA, config)

    sidecar = json.loads((tmp_path / "demo.schema.json").read_text(encoding="utf-8"))
    assert sidecar["schema_version"] == 1
    assert sidecar["provenance"]["config_hash"] == config_hash(config)
    assert read_schema(path) == SCHEMA

    loaded = read_table(path)
    assert loaded[0] == {"name": "a", "count": 2, "value": 0.5, "flag": True}
    assert loaded[1]["count"] is None
    assert math.isnan(loaded[1]["value"])


def test_write_rejects_missing_columns(tmp_path: Path) -> None:
    with pytest.raises(SchemaError):
        write_table(tmp_path / "bad.csv", [{"name": "a"}], SCHEMA)


def test_read_detects_mismatch(tmp_path: Path) -> None:
    path = tmp_path / "demo.csv"
    write_table(path, [{"name": "a", "count": 1, "value": 1.0, "flag": True}], SCHEMA)

    path.write_text("name,count,value,flag\na,x,1.0,true\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        read_table(path)

    path.write_text("name,value\na,1.0\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        read_table(path)

    (tmp_path / "demo.schema.json").unlink()
    with pytest.raises(SchemaError):
        read_table(path)


def test_unknown_column_type_rejected() -> None:
    with pytest.raises(SchemaError):
        TableSchema("bad", (("x", "complex"),))


def test_schema_inference() -> None:
    schema = schema_for_rows("rows", ["grid_value", "f_0", "error", "ok"], {"grid_value": 100, "f_0": 3, "error": "", "ok": True})

    assert schema.columns == (("grid_value", "float"), ("f_0", "int"), ("error", "str"), ("ok", "bool"))
    assert schema_for_rows("empty", ["x"]).columns == (("x", "float"),)


def test_report_round_trip(tmp_path: Path) -> None:
    path = tmp_path / "report.json"
    write_report(path, {"values": np.array([1.0, math.inf]), "count": np.int64(3)})
    payload = read_report(path)

    assert payload["values"] == [1.0, None]
    assert payload["count"] == 3
    assert payload["config"] is None

    path.write_text(json.dumps({"schema_version": 99}), encoding="utf-8")
    with pytest.raises(SchemaError):
        read_report(path)


def test_festoon_dump_rebuilds_faces(tmp_path: Path) -> None:
    pts = LimitPointSet(
        v=np.array([[-1.0], [0.0], [1.0], [0.1]]),
        h=np.array([0.0, 0.0, 0.0, 1.0]),
        window=LimitWindow(2.0, 1.0, 1),
    )
    fest = festoon(pts)
    path = tmp_path / "festoon_faces.csv"
    write_table(path, festoon_rows(fest), FESTOON_SCHEMA)
    rebuilt = festoon_from_rows(read_table(path), spatial_dim=1)

    assert rebuilt.extreme_ids == fest.extreme_ids
    assert rebuilt.extreme_h == pytest.approx(fest.extreme_h, abs=1e-12)
    for original, copy in zip(fest.faces, rebuilt.faces):
        assert copy.vertex_ids == original.vertex_ids
        assert copy.gradient == pytest.approx(original.gradient)

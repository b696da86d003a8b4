"""CSV tables with JSON schema sidecars, report JSON, and festoon dumps.

A table ``name.csv`` is always accompanied by ``name.schema.json`` holding the
schema version, typed columns and provenance. Rows are checked against the
schema when written and again when read.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timezone
import io
import json
import math
from pathlib import Path
import tempfile
from typing import Any, Iterable, Mapping

import numpy as np

from . import __version__
from .config import RunConfig, config_hash, config_payload
from .errors import SchemaError
from .models import Festoon, FestoonFace

SCHEMA_VERSION = 1
COLUMN_TYPES = ("int", "float", "str", "bool")


@dataclass(frozen=True, slots=True)
class TableSchema:
    name: str
    columns: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        for column, kind in self.columns:
            if kind not in COLUMN_TYPES:
                raise SchemaError(f"{self.name}.{column}: unknown column type {kind!r}")

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(column for column, _ in self.columns)


def schema_for_rows(name: str, columns: Iterable[str], sample: Mapping[str, Any] | None = None) -> TableSchema:
    """Infer column types from one representative row; floats when unsure."""
    typed = []
    for column in columns:
        value = None if sample is None else sample.get(column)
        if isinstance(value, bool):
            kind = "bool"
        elif isinstance(value, (int, np.integer)) and column != "grid_value":
            kind = "int"
        elif isinstance(value, str):
            kind = "str"
        else:
            kind = "float"
        typed.append((column, kind))
    return TableSchema(name=name, columns=tuple(typed))


def provenance(config: RunConfig | None) -> dict[str, Any]:
    return {
        "package_version": __version__,
        "config_hash": None if config is None else config_hash(config),
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _format(value: Any, kind: str, where: str) -> str:
    if value is None:
        return ""
    try:
        if kind == "int":
            if isinstance(value, float) and math.isnan(value):
                return ""
            return str(int(value))
        if kind == "float":
            return repr(float(value))
        if kind == "bool":
            return "true" if bool(value) else "false"
        return str(value)
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: cannot store {value!r} as {kind}") from None


def _parse(text: str, kind: str, where: str) -> Any:
    if kind == "str":
        return text
    if text == "":
        return math.nan if kind == "float" else None
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if text not in {"true", "false"}:
            raise ValueError(text)
        return text == "true"
    except ValueError:
        raise SchemaError(f"{where}: {text!r} is not a valid {kind}") from None


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_path: Path | None = None
    try:
        with tempfile.NamedTemporaryFile(
            mode="w",
            encoding="utf-8",
            newline="",
            dir=str(path.parent),
            prefix=f".{path.name}.",
            suffix=".tmp",
            delete=False,
        ) as handle:
            handle.write(text)
            handle.flush()
            temp_path = Path(handle.name)
        temp_path.replace(path)
    except OSError:
        if temp_path and temp_path.exists():
            temp_path.unlink(missing_ok=True)
        raise


def save_run_config(config: RunConfig, path: Path) -> tuple[bool, str | None]:
    payload = json.dumps(config_payload(config), ensure_ascii=True, indent=2, sort_keys=True)
    try:
        _atomic_write(path, payload)
    except OSError as exc:
        return False, f"Could not write run config: {exc}"
    return True, None


def schema_path(table_path: Path) -> Path:
    return table_path.with_name(f"{table_path.stem}.schema.json")


def write_table(
    path: Path,
    rows: Iterable[Mapping[str, Any]],
    schema: TableSchema,
    config: RunConfig | None = None,
) -> None:
    names = schema.column_names
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(names)
    for index, row in enumerate(rows):
        missing = [name for name in names if name not in row]
        if missing:
            raise SchemaError(f"{schema.name} row {index}: missing column {missing[0]!r}")
        cells = [_format(row[name], kind, f"{schema.name} row {index}.{name}") for name, kind in schema.columns]
        writer.writerow(cells)
    _atomic_write(path, buffer.getvalue())
    sidecar = {
        "schema_version": SCHEMA_VERSION,
        "table": schema.name,
        "columns": [{"name": name, "type": kind} for name, kind in schema.columns],
        "provenance": provenance(config),
    }
    _atomic_write(schema_path(path), json.dumps(sidecar, ensure_ascii=True, indent=2, sort_keys=True) + "\n")


def read_schema(path: Path) -> TableSchema:
    sidecar = schema_path(path)
    try:
        payload = json.loads(sidecar.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{sidecar}: unreadable schema: {exc}") from exc
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{sidecar}: unsupported schema_version {payload.get('schema_version')!r}")
    try:
        columns = tuple((str(item["name"]), str(item["type"])) for item in payload["columns"])
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{sidecar}: malformed columns") from exc
    return TableSchema(name=str(payload.get("table", path.stem)), columns=columns)


def read_table(path: Path) -> list[dict[str, Any]]:
    schema = read_schema(path)
    try:
        with path.open(encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            body = list(reader)
    except OSError as exc:
        raise SchemaError(f"{path}: unreadable table: {exc}") from exc
    if header is None or tuple(header) != schema.column_names:
        raise SchemaError(f"{path}: header does not match schema")
    rows = []
    for line_number, cells in enumerate(body, start=2):
        if len(cells) != len(schema.columns):
            raise SchemaError(f"{path}:{line_number}: expected {len(schema.columns)} cells, got {len(cells)}")
        rows.append(
            {
                name: _parse(cell, kind, f"{path}:{line_number}.{name}")
                for (name, kind), cell in zip(schema.columns, cells)
            }
        )
    return rows


def write_report(path: Path, payload: Mapping[str, Any], config: RunConfig | None = None) -> None:
    document = {
        "schema_version": SCHEMA_VERSION,
        "config": None if config is None else config_payload(config),
        "provenance": provenance(config),
        **payload,
    }
    _atomic_write(path, json.dumps(_jsonable(document), ensure_ascii=True, indent=2, sort_keys=True) + "\n")


def read_report(path: Path) -> dict[str, Any]:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: unreadable report: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: unsupported report schema")
    return payload


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        return number if math.isfinite(number) else None
    return value


FESTOON_SCHEMA = TableSchema(
    name="festoon_faces",
    columns=(
        ("face", "int"),
        ("vertex_ids", "str"),
        ("gradient", "str"),
        ("intercept", "float"),
        ("simplex", "str"),
    ),
)


def _join(values: Iterable[float]) -> str:
    return ";".join(repr(float(value)) for value in values)


def festoon_rows(fest: Festoon) -> list[dict[str, Any]]:
    return [
        {
            "face": index,
            "vertex_ids": ";".join(str(point_id) for point_id in face.vertex_ids),
            "gradient": _join(face.gradient),
            "intercept": face.intercept,
            "simplex": _join(face.simplex.reshape(-1)),
        }
        for index, face in enumerate(fest.faces)
    ]


def festoon_from_rows(rows: Iterable[Mapping[str, Any]], spatial_dim: int) -> Festoon:
    """Rebuild a festoon from dumped faces; extreme heights are read off the faces."""
    faces = []
    for row in rows:
        ids = tuple(int(item) for item in str(row["vertex_ids"]).split(";"))
        gradient = np.array([float(item) for item in str(row["gradient"]).split(";")])
        simplex = np.array([float(item) for item in str(row["simplex"]).split(";")]).reshape(len(ids), spatial_dim)
        if gradient.shape != (spatial_dim,):
            raise SchemaError(f"face {row.get('face')}: gradient has the wrong dimension")
        faces.append(FestoonFace(vertex_ids=ids, gradient=gradient, intercept=float(row["intercept"]), simplex=simplex))
    positions: dict[int, np.ndarray] = {}
    heights: dict[int, float] = {}
    for face in faces:
        for point_id, v in zip(face.vertex_ids, face.simplex):
            if point_id not in positions:
                positions[point_id] = v
                heights[point_id] = float(face.height(v))
    ids = tuple(sorted(positions))
    return Festoon(
        spatial_dim=spatial_dim,
        faces=tuple(faces),
        extreme_ids=ids,
        extreme_v=np.array([positions[i] for i in ids]).reshape(len(ids), spatial_dim),
        extreme_h=np.array([heights[i] for i in ids]),
    )

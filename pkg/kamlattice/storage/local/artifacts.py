import json
import logging
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, Iterable

import duckdb
import numpy as np
from duckdb import DuckDBPyConnection as Connection

from kamlattice.tasks.exceptions import ArtifactError

logger = logging.getLogger(__name__)

ARTIFACTS = ("config.json", "model.json", "normal_form.json", "trace.jsonl", "torus.json", "audits.json", "measure.csv")


def package_version() -> str:
    try:
        return version("kamlattice")
    except PackageNotFoundError:
        return "unknown"


def metadata(config_hash: str, created_at: str | None = None) -> dict:
    """Provenance block kept apart from the data so that timestamps never touch the payload."""
    return {
        "config_hash": config_hash,
        "created_at": created_at or datetime.now(timezone.utc).isoformat(),
        "version": package_version(),
    }


def _default(obj: Any):
    match obj:
        case np.integer():
            return int(obj)
        case np.floating():
            return float(obj)
        case np.bool_():
            return bool(obj)
        case complex() | np.complexfloating():
            return [float(obj.real), float(obj.imag)]
        case np.ndarray():
            return obj.tolist()
        case Path():
            return str(obj)
        case _:
            raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def dumps(data: Any) -> str:
    return json.dumps(data, default=_default, sort_keys=True)


def write_json(path: Path, data: dict, config_hash: str, created_at: str | None = None) -> Path:
    """Write ``{"metadata": ..., "data": ...}`` to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"metadata": metadata(config_hash, created_at), "data": data}
    path.write_text(json.dumps(document, default=_default, sort_keys=True, indent=1))
    logger.info(f"Wrote {path}")
    return path


def read_json(path: Path, config_hash: str | None = None) -> tuple[dict, dict]:
    """
    Read an artifact written by :func:`write_json`.

    Returns:
        tuple[dict, dict]: The metadata block and the data.

    Raises:
        ArtifactError: if the file is missing, not valid JSON, lacks the metadata block or carries another
        configuration hash than ``config_hash``.
    """
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"Missing artifact: {path}")
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ArtifactError(f"Corrupt artifact {path}: {e}") from e
    if not isinstance(document, dict) or "metadata" not in document or "data" not in document:
        raise ArtifactError(f"Artifact {path} has no metadata/data blocks")
    found = document["metadata"].get("config_hash")
    if config_hash is not None and found != config_hash:
        raise ArtifactError(f"Artifact {path} belongs to configuration {found}, expected {config_hash}")
    return document["metadata"], document["data"]


def write_jsonl(path: Path, records: Iterable[dict], config_hash: str) -> Path:
    """One JSON record per line, each tagged with the configuration hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w") as f:
        for record in records:
            f.write(dumps({"config_hash": config_hash, **record}) + "\n")
            count += 1
    logger.info(f"Wrote {count} records to {path}")
    return path


def read_jsonl(path: Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"Missing artifact: {path}")
    try:
        return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    except json.JSONDecodeError as e:
        raise ArtifactError(f"Corrupt artifact {path}: {e}") from e


def _column_type(value: Any) -> str:
    match value:
        case bool() | np.bool_():
            return "BOOLEAN"
        case int() | np.integer():
            return "BIGINT"
        case float() | np.floating():
            return "DOUBLE"
        case _:
            return "VARCHAR"


def _cell(value: Any) -> Any:
    match value:
        case np.generic():
            return value.item()
        case str() | int() | float() | bool() | None:
            return value
        case _:
            return dumps(value)


def table_from_rows(con: Connection, table_name: str, rows: list[dict], columns: dict[str, str] | None = None) -> None:
    """Create an in-memory table from a list of flat records; column types are inferred from the first row."""
    if columns is None:
        if not rows:
            raise ValueError(f"Cannot infer the columns of an empty table {table_name}")
        columns = {name: _column_type(value) for name, value in rows[0].items()}
    ddl = ", ".join(f'"{name}" {kind}' for name, kind in columns.items())
    con.execute(f"CREATE TABLE {table_name} ({ddl})")
    if rows:
        placeholders = ", ".join("?" for _ in columns)
        con.executemany(
            f"INSERT INTO {table_name} VALUES ({placeholders})",
            [[_cell(row.get(name)) for name in columns] for row in rows],
        )


def export_table(
    con: Connection,
    table_name: str,
    output_dir: Path,
    filename: str,
    output_format: str = "csv",
    order_by: str | None = None,
) -> Path:
    """Export a table through ``COPY ... TO``."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    query = f"SELECT * FROM {table_name}" + (f" ORDER BY {order_by}" if order_by else "")
    match output_format:
        case "csv":
            target = output_dir / f"{filename}.csv"
            con.execute(f"COPY ({query}) TO '{target}' (FORMAT 'csv', HEADER true)")
        case "parquet":
            target = output_dir / f"{filename}.parquet"
            con.execute(f"COPY ({query}) TO '{target}' (FORMAT 'parquet')")
        case "jsonl":
            target = output_dir / f"{filename}.jsonl"
            con.execute(f"COPY ({query}) TO '{target}' (FORMAT 'json')")
        case _:
            raise ValueError(f"Invalid output format: {output_format}")
    logger.info(f"Exported {table_name} to {target}")
    return target


def export_rows(
    rows: list[dict],
    output_dir: Path,
    filename: str,
    config_hash: str,
    columns: dict[str, str] | None = None,
    output_format: str = "csv",
) -> Path:
    """Tag every row with the configuration hash and export it through an in-memory duckdb table."""
    tagged = [{**row, "config_hash": config_hash} for row in rows]
    if columns is not None:
        columns = {**columns, "config_hash": "VARCHAR"}
    con = duckdb.connect(":memory:")
    try:
        table_from_rows(con, "export_rows", tagged, columns)
        return export_table(con, "export_rows", output_dir, filename, output_format)
    finally:
        con.close()


def read_table(path: Path) -> list[dict]:
    """Rows of an exported CSV table."""
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"Missing artifact: {path}")
    con = duckdb.connect(":memory:")
    try:
        relation = con.execute(f"SELECT * FROM read_csv_auto('{path}', header=true)")
        names = [d[0] for d in relation.description]
        return [dict(zip(names, row)) for row in relation.fetchall()]
    except duckdb.Error as e:
        raise ArtifactError(f"Corrupt table {path}: {e}") from e
    finally:
        con.close()

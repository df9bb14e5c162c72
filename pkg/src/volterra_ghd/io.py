"""Artifact writers: deterministic CSV and JSON with embedded config hash.

All floats are emitted with 17 significant digits so round-tripping through
text is lossless and reruns are byte-identical.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

__all__ = ["format_float", "write_csv", "read_csv", "write_json", "read_json"]

#: shortest representation that round-trips IEEE doubles
FLOAT_FMT = "%.17g"


def format_float(x) -> str:
    return FLOAT_FMT % float(x)


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_csv(path, header, rows, config_hash: str | None = None) -> None:
    """Write rows of mixed scalars as CSV.

    If ``config_hash`` is given it is embedded as a leading comment line so
    every artifact can be traced back to the configuration that produced it.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if config_hash is not None:
            fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray, str | None]:
    """Read a CSV written by :func:`write_csv`.

    Returns (header, float array of shape (n_rows, n_cols), config hash or
    None).  Non-numeric cells raise.
    """
    path = Path(path)
    config_hash = None
    with path.open() as fh:
        first = fh.readline()
        if first.startswith("# config_hash="):
            config_hash = first.strip().split("=", 1)[1]
            first = fh.readline()
        header = next(csv.reader([first]))
        data = [[float(c) for c in row] for row in csv.reader(fh) if row]
    arr = np.array(data, dtype=float) if data else np.empty((0, len(header)))
    return header, arr, config_hash


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def write_json(path, document: dict, config_hash: str | None = None) -> None:
    """Write a metadata document as stable, sorted-key JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(document)
    if config_hash is not None:
        doc["config_hash"] = config_hash
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())

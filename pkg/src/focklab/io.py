"""Artifact emission: full-precision CSV tables and the run manifest.

Every float is rendered with 17 significant digits so identical runs produce
byte-identical files, and golden-file comparisons are meaningful.  The
manifest names, for each emitted file, the operation that produced it, plus
the seeds and tolerances in force, so any number on disk can be traced back.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__


def format_cell(value) -> str:
    if isinstance(value, bool) or isinstance(value, (np.bool_,)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def csv_table(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_cell(cell) for cell in row))
    return "\n".join(lines) + "\n"


def write_artifact(directory: Path, name: str, content: str) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    path.write_text(content, encoding="utf-8")
    return path


def build_manifest(config_dump: dict, seed: int, restarts: int,
                   outputs: dict, tolerances: dict, summary: dict) -> str:
    """Serialize the run record; keys sorted so output is reproducible."""
    manifest = {
        "package": "focklab",
        "version": __version__,
        "config": config_dump,
        "seed": seed,
        "restarts": restarts,
        "tolerances": tolerances,
        "outputs": outputs,
        "summary": summary,
    }
    return json.dumps(manifest, sort_keys=True, indent=2,
                      default=_json_fallback) + "\n"


def _json_fallback(value):
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")

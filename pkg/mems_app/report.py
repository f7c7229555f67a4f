"""
Report – deterministic artifact layout for one scenario run:

    <out>/summary.json     sorted keys, floats with 17 significant digits
    <out>/trace.csv        t, max_u, E, dist_to_ref, dt (header only when empty)
    <out>/fields/*.csv     coordinate, value
"""

from __future__ import annotations

import json
import logging
import math
import re
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from mems_app.solvers.evolution import EvolutionTrace
from mems_app.solvers.grid import CSV_FLOAT_FORMAT, Field

# ─── logger ─────────────────────────────────────────────────────────────
logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["t", "max_u", "E", "dist_to_ref", "dt"]
SUMMARY_FILE = "summary.json"
TRACE_FILE = "trace.csv"
FIELDS_DIR = "fields"
JSON_FLOAT_FORMAT = CSV_FLOAT_FORMAT
_FLOAT_TAG = "__f17__"
_TAGGED_FLOAT = re.compile(r'"__f17__([^"]*)"')


class SummaryModel(BaseModel):
    """Schema every summary.json must re-validate against."""

    model_config = ConfigDict(extra="allow")

    version: str
    mode: str
    config: dict[str, Any]
    settings: dict[str, Any]
    hypotheses: dict[str, dict[str, Any]]
    results: dict[str, Any]


def to_jsonable(value: Any) -> Any:
    """numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def _tag_floats(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _tag_floats(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_tag_floats(v) for v in value]
    if isinstance(value, float):
        text = JSON_FLOAT_FORMAT % value
        if text.lstrip("-").isdigit():
            text += ".0"          # stays a float on reload
        return _FLOAT_TAG + text
    return value


def dumps_json(payload: dict[str, Any]) -> str:
    """Sorted-key JSON whose floats are written like the CSV columns (%.17g)."""
    text = json.dumps(_tag_floats(to_jsonable(payload)), sort_keys=True, indent=2)
    return _TAGGED_FLOAT.sub(r"\1", text) + "\n"


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"Cannot write {path}: {exc}") from exc


def emit_report(
    out_dir: str | Path,
    summary: dict[str, Any],
    trace: EvolutionTrace | None = None,
    fields: dict[str, Field] | None = None,
    extra_csv: dict[str, list[dict[str, Any]]] | None = None,
) -> list[Path]:
    """Write the artifact set and return the written paths."""
    out = Path(out_dir)
    try:
        (out / FIELDS_DIR).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"Cannot create output directory {out}: {exc}") from exc

    written: list[Path] = []
    summary_path = out / SUMMARY_FILE
    _write_text(summary_path, dumps_json(summary))
    written.append(summary_path)

    trace_path = out / TRACE_FILE
    if trace is None:
        try:
            pd.DataFrame(columns=TRACE_COLUMNS).to_csv(trace_path, index=False)
        except OSError as exc:
            raise OSError(f"Cannot write trace CSV to {trace_path}: {exc}") from exc
    else:
        trace.to_csv(trace_path)
    written.append(trace_path)

    for name, fld in sorted((fields or {}).items()):
        path = out / FIELDS_DIR / f"{name}.csv"
        fld.to_csv(path)
        written.append(path)

    for name, rows in sorted((extra_csv or {}).items()):
        path = out / name
        try:
            pd.DataFrame(rows).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        except OSError as exc:
            raise OSError(f"Cannot write {path}: {exc}") from exc
        written.append(path)

    logger.info("Artifacts written to %s (%d files)", out, len(written))
    return written


def load_summary(path: str | Path) -> SummaryModel:
    """Re-parse and re-validate an emitted summary.json."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Summary not found: {path}")
    return SummaryModel.model_validate_json(path.read_text(encoding="utf-8"))

from __future__ import annotations

import json
import logging
import math
import pathlib
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader, StrictUndefined
from pydantic import BaseModel

from app.db.files import write_field

logger = logging.getLogger(__name__)

TEMPLATES_DIR = pathlib.Path(__file__).resolve().parent.parent / "templates"

_env = Environment(
    loader=FileSystemLoader(str(TEMPLATES_DIR)),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
    trim_blocks=True,
    lstrip_blocks=True,
)


# --- PAQUETE DE RESULTADOS ---

@dataclass
class ReportBundle:
    """Todo lo que produce una orden: JSON, tablas CSV, campos nodales y resumen."""

    command: str
    payload: dict
    tables: dict[str, pd.DataFrame] = field(default_factory=dict)
    fields: dict[str, np.ndarray] = field(default_factory=dict)
    summary: list[tuple[str, object]] = field(default_factory=list)
    ok: bool = True


def to_jsonable(obj):
    """Floats por repr; inf/nan como cadenas; modelos pydantic por model_dump."""
    if isinstance(obj, BaseModel):
        return to_jsonable(obj.model_dump())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    return obj


def _format(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def render_summary(bundle: ReportBundle) -> str:
    template = _env.get_template("summary.txt.j2")
    rows = [(key, _format(value)) for key, value in bundle.summary]
    return template.render(
        command=bundle.command, ok=bundle.ok, rows=rows,
        tables=sorted(bundle.tables), fields=sorted(bundle.fields),
    )


def write_bundle(bundle: ReportBundle, out_dir: str | pathlib.Path) -> pathlib.Path:
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    text = json.dumps(to_jsonable(bundle.payload), sort_keys=True, indent=2, allow_nan=False)
    (out / "report.json").write_text(text + "\n", encoding="utf-8")

    for name, table in bundle.tables.items():
        table.to_csv(out / f"{name}.csv", index=False, lineterminator="\n", float_format="%.17g")
    for name, values in bundle.fields.items():
        write_field(values, out / f"{name}.txt")

    (out / "summary.txt").write_text(render_summary(bundle), encoding="utf-8")
    logger.info("wrote %s bundle to %s", bundle.command, out)
    return out

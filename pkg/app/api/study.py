from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd

from app.api.schemas import RunConfig, build_medium, build_mesh
from app.db.reports import ReportBundle
from app.services import dispersion, dual

logger = logging.getLogger(__name__)


def _level_value(config: RunConfig, level: int) -> tuple[float, float | None]:
    """Valor de la magnitud en un nivel y la referencia con la que se compara."""
    block = config.study
    mesh = build_mesh(config.mesh, level)
    medium = build_medium(mesh, config.medium)
    if block.quantity == "half-law":
        ratio = dual.half_law(mesh, medium, [block.epsilon], config.solver)[0].ratio
        return ratio, block.reference
    if block.quantity == "solve-dirichlet":
        report = dispersion.solve_dirichlet(mesh, medium, config.solver)
    else:
        report = dispersion.solve(mesh, medium, config.solver)
    reference = report.upper_bound if block.reference == "upper-bound" else block.reference
    return report.value, reference


def convergence_table(levels: list[int], values: list[float], reference) -> pd.DataFrame:
    """
    Con referencia (un número o uno por nivel): error |v_L - ref_L| y orden log2(e_{L-1}/e_L).
    Sin ella: orden de Richardson log2(|v_{L-1}-v_{L-2}| / |v_L-v_{L-1}|).
    """
    values = np.asarray(values, dtype=float)
    if reference is not None:
        errors = np.abs(values - np.broadcast_to(np.asarray(reference, dtype=float), values.shape))
    else:
        errors = np.full(len(values), np.nan)
    orders = np.full(len(values), np.nan)
    for k in range(1, len(values)):
        if reference is not None:
            if errors[k] > 0 and errors[k - 1] > 0:
                orders[k] = math.log2(errors[k - 1] / errors[k])
        elif k >= 2:
            num, den = abs(values[k - 1] - values[k - 2]), abs(values[k] - values[k - 1])
            if num > 0 and den > 0:
                orders[k] = math.log2(num / den)
    return pd.DataFrame({"level": levels, "value": values, "error": errors, "order": orders})


# --- ORDEN: converge-study ---

def run_converge_study(config: RunConfig, level: int | None, workers: int) -> ReportBundle:
    block = config.study
    levels = list(block.levels)

    def one(lv: int) -> tuple[float, float | None]:
        return _level_value(config, lv)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, levels))
    else:
        rows = [one(lv) for lv in levels]
    values = [v for v, _ in rows]
    references = None if block.reference is None else [r for _, r in rows]

    table = convergence_table(levels, values, references)
    errors = table["error"].to_numpy()
    shrinking = bool(np.all(np.diff(errors) <= 0)) if references is not None else None
    payload = {
        "quantity": block.quantity, "levels": levels, "rows": table.to_dict(orient="records"),
        "reference": block.reference, "level_references": references, "errors_shrink": shrinking,
    }
    summary = [(f"level {lv}", v) for lv, v in zip(levels, values)]
    if references is not None:
        summary += [("max error", float(errors.max())), ("errors shrink", shrinking)]
    logger.info("converge-study %s over levels %s", block.quantity, levels)
    return ReportBundle(command=config.command, payload=payload, tables={"study": table}, summary=summary, ok=shrinking is not False)

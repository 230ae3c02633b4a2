from __future__ import annotations

import logging

from app.api.dispersion import mesh_info
from app.api.schemas import RunConfig, build_mesh
from app.db.reports import ReportBundle
from app.services.errors import InvalidSpecError
from app.services.model import comparison_report, comparison_table, model_radius, model_space, radial_dispersion

logger = logging.getLogger(__name__)


# --- ORDEN: model-compare ---

def run_model_compare(config: RunConfig, level: int | None, workers: int) -> ReportBundle:
    """
    Superficie (FEM 2-D) frente a su espacio modelo (1-D radial).

    Sólo se comprueba que las longitudes de borde coinciden; las hipótesis de
    curvatura las garantiza quien elige la instancia.
    """
    block = config.model
    if block.delta is None:
        raise InvalidSpecError("model-compare needs 'model.delta'")
    if config.medium.phi.kind != "constant":
        raise InvalidSpecError("model-compare needs a constant 'medium.phi'")
    mesh = build_mesh(config.mesh, level)
    space = model_space(block.kappa, block.lam, block.n, block.cutoff)
    medium = config.medium
    report = comparison_report(
        mesh, space, block.delta, medium.p, medium.phi.value, medium.psi.value, config.solver,
    )
    dirichlet_radial = radial_dispersion(space, block.delta, medium.p, medium.phi.value, float("inf"))

    payload = {
        "mesh": mesh_info(mesh), "model": space, "comparison": report,
        "model_dirichlet_value": dirichlet_radial.value, "model_conductor_volume": dirichlet_radial.conductor_volume,
    }
    if block.radius_d is not None:
        payload["model_radii"] = {str(k): model_radius(k, block.n, block.radius_d) for k in (1, 0, -1)}
    summary = [
        ("case", space.case), ("surface", report.surface_value), ("model", report.model_value),
        ("gap", report.gap), ("holds", report.holds),
    ]
    return ReportBundle(command=config.command, payload=payload, tables={"compare": comparison_table(report)}, summary=summary, ok=report.holds)

from __future__ import annotations

import logging
import math

import numpy as np
import pandas as pd

from app.api.dispersion import EXACT_SLACK, mesh_info
from app.api.schemas import RunConfig, SymmetrizationBlock, build_mesh
from app.db.reports import ReportBundle
from app.services import eigen
from app.services.errors import InvalidSpecError
from app.services.model import model_space, radial_eigen

logger = logging.getLogger(__name__)

# holgura superior de Λ/λ en la autofunción Robin
RECYCLE_WINDOW = 1e-4


# --- ORDEN: eigen ---

def run_eigen(config: RunConfig, level: int | None, workers: int) -> ReportBundle:
    """Primer autovalor (Robin o Dirichlet) y, si se pide, el oráculo radial."""
    block = config.eigen
    mesh = build_mesh(config.mesh, level)
    p = config.medium.p
    if block.dirichlet or block.beta is None:
        report = eigen.dirichlet_eigen(mesh, p, block.options)
        beta = math.inf
    else:
        report = eigen.robin_eigen(mesh, p, block.beta, block.options)
        beta = block.beta

    payload = {"mesh": mesh_info(mesh), "report": report}
    summary = [("lambda", report.lam), ("residual", report.residual), ("iterations", report.iterations)]
    ok = not report.flagged
    if block.oracle is not None:
        o = block.oracle
        oracle = radial_eigen(model_space(o.kappa, o.lam, o.n, o.cutoff), p, beta)
        gap = abs(report.lam - oracle) / oracle if oracle else abs(report.lam)
        payload.update({"oracle": oracle, "oracle_relative_gap": gap})
        summary += [("radial oracle", oracle), ("relative gap", gap)]
    if config.reference is not None:
        payload["reference"] = config.reference
        summary.append(("reference", config.reference))
    return ReportBundle(
        command=config.command, payload=payload, fields={"eigenfunction": report.eigenfunction},
        summary=summary, ok=ok,
    )


# --- ORDEN: recycle ---

def _random_witnesses(config: RunConfig, mesh, p: float, beta: float | None, lam: float) -> tuple[float, int]:
    """Cota Λ(u) ≥ λ sobre campos positivos aleatorios (nulos en el borde si es Dirichlet)."""
    rng = np.random.default_rng(config.seed)
    worst, violations = math.inf, 0
    for _ in range(config.eigen.samples):
        u = 0.05 + rng.random(mesh.n_vertices)
        if beta is None:
            u[mesh.boundary_mask] = 0.0
        value = eigen.recycling_value(mesh, p, beta, u, lam)
        worst = min(worst, value / lam if lam else math.inf)
        violations += int(value < lam * (1.0 - EXACT_SLACK))
    return worst, violations


def run_recycle(config: RunConfig, level: int | None, workers: int) -> ReportBundle:
    block = config.eigen
    mesh = build_mesh(config.mesh, level)
    p = config.medium.p
    beta = None if block.dirichlet else block.beta
    if beta is None and not block.epsilons:
        raise InvalidSpecError("Dirichlet recycling needs at least one epsilon in 'eigen.epsilons'")
    reports = eigen.recycling_check(mesh, p, beta, block.epsilons, block.options)
    table = eigen.recycling_table(reports)

    lam = reports[0].lam
    worst, violations = _random_witnesses(config, mesh, p, beta, lam)
    lower_ok = bool((table["ratio"] >= 1.0 - 1e-8).all()) and violations == 0
    ok = lower_ok
    payload = {
        "mesh": mesh_info(mesh), "p": p, "reports": reports,
        "random_fields": {"samples": block.samples, "min_ratio": worst, "violations": violations},
        "lower_bound_holds": lower_ok,
    }
    if beta is not None:
        # en la autofunción Λ = λ salvo el residuo de la ecuación
        at_eigen_ok = bool((table["ratio"] <= 1.0 + RECYCLE_WINDOW).all())
        payload["ratio_window_holds"] = at_eigen_ok
        ok = ok and at_eigen_ok
    else:
        # la razón del testigo suavizado baja al reducir ε
        ratios = [r.ratio for r in sorted(reports, key=lambda r: -r.epsilon)]
        payload["epsilons"] = [r.epsilon for r in reports]
        payload["epsilon_trend_holds"] = bool(np.all(np.diff(ratios) <= 1e-6))
    summary = [("lambda", lam)] + [
        (f"ratio eps={r.epsilon:g}" if r.epsilon is not None else "ratio", r.ratio) for r in reports
    ] + [("random min ratio", worst), ("random violations", violations)]
    fields = {"eigenfunction": reports[0].witness} if beta is not None else {}
    return ReportBundle(command=config.command, payload=payload, tables={"recycle": table}, fields=fields, summary=summary, ok=ok)


# --- ORDEN: symmetrization ---

def run_symmetrization(config: RunConfig, level: int | None, workers: int) -> ReportBundle:
    block = config.symmetrization or SymmetrizationBlock()
    report = eigen.symmetrization_check(block.p, block.beta, block.level if level is None else level)
    table = pd.DataFrame(
        [("square", report.lam_square), ("disk", report.lam_disk), ("disk-radial", report.lam_disk_radial)],
        columns=["domain", "lambda"],
    )
    ok = report.margin > 0 or block.beta == 0
    summary = [("lambda square", report.lam_square), ("lambda disk", report.lam_disk),
               ("lambda disk (radial)", report.lam_disk_radial), ("margin", report.margin)]
    return ReportBundle(command=config.command, payload={"report": report}, tables={"symmetrization": table}, summary=summary, ok=ok)

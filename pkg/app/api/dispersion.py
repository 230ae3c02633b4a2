from __future__ import annotations

import logging

import numpy as np
import pandas as pd

from app.api.schemas import RunConfig, SmootherBlock, build_medium, build_mesh
from app.db.reports import ReportBundle
from app.services import dispersion, dual
from app.services.assembly import energy
from app.services.mesh import TriMesh, generate

logger = logging.getLogger(__name__)

# holgura relativa de las desigualdades exactas
EXACT_SLACK = 1e-10
# holgura sobre el techo (1+2ε)^{p-1} a resolución finita
HALF_LAW_SLACK = 0.02
# distancia relativa máxima entre el mayor Ψ del barrido y el valor Dirichlet
DIRICHLET_GAP = 0.01


def mesh_info(mesh: TriMesh) -> dict:
    return {
        "n_vertices": mesh.n_vertices,
        "n_triangles": len(mesh.triangles),
        "area": mesh.area,
        "perimeter": mesh.perimeter,
        "conductor_area": mesh.conductor_area,
    }


def _relative_error(value: float, reference: float | None) -> float | None:
    if reference is None:
        return None
    return abs(value - reference) / abs(reference) if reference else abs(value)


# --- ORDEN: solve ---

def run_solve(config: RunConfig, level: int | None, workers: int) -> ReportBundle:
    """Minimizador Robin y diagnósticos de la identidad de autoconsistencia."""
    mesh = build_mesh(config.mesh, level)
    medium = build_medium(mesh, config.medium)
    report = dispersion.solve(mesh, medium, config.solver)

    error = _relative_error(report.value, config.reference)
    payload = {"mesh": mesh_info(mesh), "p": medium.p, "report": report, "reference": config.reference, "relative_error": error}
    summary = [
        ("H^d", report.value),
        ("identity_residual", report.identity_residual),
        ("grad_residual", report.grad_residual),
        ("range_violation", report.range_violation),
        ("newton_iterations", report.iterations),
        ("upper_bound", report.upper_bound),
    ]
    if error is not None:
        summary += [("reference", config.reference), ("relative_error", error)]
    return ReportBundle(
        command=config.command, payload=payload, fields={"minimizer": report.minimizer},
        summary=summary, ok=report.converged,
    )


# --- ORDEN: half-law ---

def run_half_law(config: RunConfig, level: int | None, workers: int) -> ReportBundle:
    mesh = build_mesh(config.mesh, level)
    medium = build_medium(mesh, config.medium)
    primal = dispersion.solve(mesh, medium, config.solver)
    reports = dual.half_law(mesh, medium, config.half_law.epsilons, config.solver, primal=primal)
    table = dual.half_law_table(reports)

    lower_ok = bool((table["ratio"] >= 1.0 - EXACT_SLACK).all())
    # la razón baja al reducir ε
    ordered = table.sort_values("epsilon", ascending=False)["ratio"].to_numpy()
    trend_ok = bool(np.all(np.diff(ordered) <= 1e-6))
    if not trend_ok:
        logger.warning("half-law ratios do not decrease with epsilon")
    # techo del minimizador suavizado en el continuo: (1+2ε)^{p-1}
    ceiling = (1.0 + 2.0 * table["epsilon"]) ** (medium.p - 1.0)
    window_ok = bool((table["ratio"] <= ceiling + HALF_LAW_SLACK).all())
    payload = {
        "mesh": mesh_info(mesh), "p": medium.p, "primal": primal, "duals": reports,
        "lower_bound_holds": lower_ok, "epsilon_trend_holds": trend_ok, "window_holds": window_ok,
    }
    summary = [("primal", primal.value), ("identity_residual", primal.identity_residual)]
    summary += [(f"ratio eps={r.epsilon:g}", r.ratio) for r in reports]
    summary += [("lower bound holds", lower_ok), ("window holds", window_ok)]
    return ReportBundle(
        command=config.command, payload=payload, tables={"halflaw": table},
        fields={"minimizer": primal.minimizer}, summary=summary, ok=lower_ok,
    )


# --- ÓRDENES: sweep-psi / sweep-phi ---

def run_sweep_psi(config: RunConfig, level: int | None, workers: int) -> ReportBundle:
    mesh = build_mesh(config.mesh, level)
    medium = build_medium(mesh, config.medium)
    exponents = config.sweep.exponents if config.sweep and config.sweep.exponents is not None else list(range(7))
    table = dispersion.sweep_psi(mesh, medium, exponents, config.solver, workers)

    values = table["value"].to_numpy()
    scale = max(1.0, float(values.max()))
    monotone = bool(np.all(np.diff(values) >= -1e-12 * scale))
    limit = float(table["aux"].iloc[0])
    last = float(values[-1])
    gap = abs(last - limit) / limit if limit else abs(last)
    near_limit = gap <= DIRICHLET_GAP
    payload = {
        "mesh": mesh_info(mesh), "p": medium.p, "rows": table.to_dict(orient="records"),
        "dirichlet_value": limit, "monotone": monotone,
        "last_vs_dirichlet": gap, "near_dirichlet": near_limit,
        "reference": config.reference,
        "dirichlet_relative_error": _relative_error(limit, config.reference),
        "last_relative_error": _relative_error(last, config.reference),
    }
    summary = [
        ("dirichlet_value", limit), ("largest_psi_value", last), ("monotone", monotone),
        ("gap to dirichlet", gap), ("within 1% of dirichlet", near_limit),
    ]
    return ReportBundle(
        command=config.command, payload=payload, tables={"sweep": table}, summary=summary, ok=monotone and near_limit,
    )


def run_sweep_phi(config: RunConfig, level: int | None, workers: int) -> ReportBundle:
    mesh = build_mesh(config.mesh, level)
    medium = build_medium(mesh, config.medium)
    exponents = config.sweep.exponents if config.sweep and config.sweep.exponents is not None else list(range(5))
    table = dispersion.sweep_phi(mesh, medium, exponents, config.solver, workers)

    bound_ok = bool((table["value"] >= table["aux"] * (1.0 - 1e-12)).all())
    positive = table[table["param"] > 0]
    normalized = (positive["value"] / positive["param"]).to_numpy()
    nonincreasing = bool(np.all(np.diff(normalized) <= 1e-10 * max(1.0, float(normalized.max(initial=0.0)))))
    payload = {
        "mesh": mesh_info(mesh), "p": medium.p, "rows": table.to_dict(orient="records"),
        "lower_bound_holds": bound_ok, "normalized_nonincreasing": nonincreasing,
    }
    summary = [("conductor_area", mesh.conductor_area), ("lower_bound_holds", bound_ok), ("value/phi nonincreasing", nonincreasing)]
    return ReportBundle(command=config.command, payload=payload, tables={"sweep": table}, summary=summary, ok=bound_ok)


# --- ORDEN: dual-bound ---

def run_dual_bound(config: RunConfig, level: int | None, workers: int) -> ReportBundle:
    """Cota exacta dual(f) ≥ 2E(f) sobre campos aleatorios en [0, 1]."""
    block = config.dual_bound
    rng = np.random.default_rng(config.seed)
    meshes = [build_mesh(config.mesh, level)] + [generate(spec) for spec in block.meshes]
    rows = []
    for k, mesh in enumerate(meshes):
        for p in block.exponents:
            medium = build_medium(mesh, config.medium, p=p)
            worst, violations = np.inf, 0
            for _ in range(block.samples):
                f = rng.random(mesh.n_vertices)
                twice = 2.0 * energy(mesh, medium, f).total
                margin = dual.dual_value(mesh, medium, f) - twice
                worst = min(worst, margin / max(1.0, twice))
                violations += int(margin < -EXACT_SLACK * max(1.0, twice))
            rows.append((k, p, block.samples, worst, violations))
    table = pd.DataFrame(rows, columns=["mesh", "p", "samples", "min_relative_margin", "violations"])
    ok = bool((table["violations"] == 0).all())
    payload = {"meshes": [mesh_info(m) for m in meshes], "rows": table.to_dict(orient="records"), "holds": ok, "seed": config.seed}
    summary = [("fields checked", int(table["samples"].sum())), ("violations", int(table["violations"].sum())),
               ("min_relative_margin", float(table["min_relative_margin"].min()))]
    return ReportBundle(command=config.command, payload=payload, tables={"dual_bound": table}, summary=summary, ok=ok)


# --- ORDEN: smoother-check ---

def run_smoother_check(config: RunConfig, level: int | None, workers: int) -> ReportBundle:
    block = config.smoother or SmootherBlock()
    rows = []
    for eps in block.epsilons:
        h = dual.make_smoother(eps)
        grid = np.linspace(0.0, 1.0, 20001)
        for p in block.exponents:
            tv = h.total_variation(p)
            exact = 2.0 * h.peak ** (p - 1.0) - 1.0
            rows.append((
                eps, p, h.delta, float(h.h(1.0)), float(h.dh(1.0)), float(h.d2h(h.t1)),
                float(np.max(h.dh(grid))), tv, exact, abs(tv - exact),
            ))
    table = pd.DataFrame(rows, columns=["epsilon", "p", "delta", "h_at_1", "dh_at_1", "d2h_at_t1", "max_dh", "tv", "tv_exact", "tv_error"])
    ok = bool(
        (np.abs(table["h_at_1"] - 1.0) <= 1e-10).all()
        and (np.abs(table["dh_at_1"]) <= 1e-10).all()
        and (np.abs(table["d2h_at_t1"]) <= 1e-10).all()
        and (table["tv_error"] <= 1e-8).all()
    )
    payload = {"rows": table.to_dict(orient="records"), "holds": ok}
    summary = [("max tv_error", float(table["tv_error"].max())), ("certificate", ok)]
    return ReportBundle(command=config.command, payload=payload, tables={"smoother": table}, summary=summary, ok=ok)

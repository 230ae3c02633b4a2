"""
Dispersión térmica discreta H^d_{p,Φ,Ψ}(K, M): minimización con f = 1 en el
conductor, diagnósticos de autoconsistencia y los dos barridos extremos
(Ψ → ∞ y Φ → ∞).
"""
from __future__ import annotations

import logging
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import sparse

from app.services import newton
from app.services.assembly import (
    EnergyBreakdown,
    MassData,
    Medium,
    energy,
    gradient,
    hessian,
    lumped_action,
    masses,
    regularized_energy,
    stiffness_action,
    weighted_stiffness,
)
from app.services.errors import InvalidSpecError, NoConvergenceError
from app.services.mesh import TriMesh

logger = logging.getLogger(__name__)

# tolerancia de las etapas intermedias (sólo preparan el punto de partida)
STAGE_TOL = 1e-6


# --- DTOs ---

class SolveOptions(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    grad_tol: float = 1e-10
    max_newton_iters: int = 200
    eps_schedule: tuple[float, ...] = (1e-2, 1e-4, 1e-6)
    eps_final: float = 1e-8
    p_continuation: bool = True
    p_step: float = 0.5

    @field_validator("grad_tol", "eps_final", "p_step")
    @classmethod
    def _positive(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("must be positive")
        return value

    @field_validator("max_newton_iters")
    @classmethod
    def _positive_iters(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be at least 1")
        return value

    @field_validator("eps_schedule")
    @classmethod
    def _positive_schedule(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if any(not e > 0 for e in value):
            raise ValueError("regularization levels must be positive")
        return value


class DispersionReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    value: float
    minimizer: np.ndarray = Field(exclude=True)
    breakdown: EnergyBreakdown
    identity_residual: float
    range_violation: float
    converged: bool
    iterations: int
    grad_residual: float
    upper_bound: float
    dirichlet: bool = False


# --- PLAN DE CONTINUACIÓN ---

def _stages(p: float, opts: SolveOptions, diameter: float) -> list[tuple[float, float, float]]:
    """Etapas (p, ε, tolerancia) desde p = 2 hasta el exponente pedido."""
    stages: list[tuple[float, float, float]] = []
    if opts.p_continuation and abs(p - 2.0) > opts.p_step:
        n = math.ceil(abs(p - 2.0) / opts.p_step - 1e-12)
        first_eps = (opts.eps_schedule[0] if opts.eps_schedule else opts.eps_final) / diameter
        for k in range(1, n):
            stages.append((2.0 + (p - 2.0) * k / n, first_eps, STAGE_TOL))
    if p != 2.0:
        stages += [(p, e / diameter, STAGE_TOL) for e in opts.eps_schedule]
    final_eps = 0.0 if p >= 2.0 else opts.eps_final / diameter
    stages.append((p, final_eps, opts.grad_tol))
    return stages


def _initial_guess(mesh: TriMesh, medium: Medium, md: MassData, fixed: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Extensión p = 2 (con Φ y Ψ) de los valores fijados."""
    mat = weighted_stiffness(mesh) + sparse.diags(md.m * medium.phi + md.b * medium.psi)
    mat = sparse.csr_matrix(mat)
    free = np.flatnonzero(~fixed)
    fix = np.flatnonzero(fixed)
    rhs = -(mat[free][:, fix] @ f[fix])
    out = f.copy()
    out[free] = newton.solve_sparse(newton.restrict(mat, free), rhs)
    return out


def _residual_scale(mesh: TriMesh, medium: Medium, md: MassData, eps: float) -> Callable[[np.ndarray], float]:
    """
    Escala del residuo sobre todos los vértices.

    Restringida a los libres se anula con el propio residuo cuando Φ = Ψ = 0
    (solve Dirichlet); el flujo hacia K y hacia ∂M la mantiene positiva.
    """
    p = medium.p

    def scale(f: np.ndarray) -> float:
        stiff = stiffness_action(mesh, p, f, eps)
        lumped = lumped_action(mesh, medium, f, md)
        return float(p * (np.linalg.norm(stiff) + np.linalg.norm(lumped)))

    return scale


def _minimize(mesh: TriMesh, medium: Medium, f0: np.ndarray, fixed: np.ndarray, opts: SolveOptions, label: str):
    md = masses(mesh)
    free = ~fixed
    f = _initial_guess(mesh, medium, md, fixed, f0)
    total_iters = 0
    result = None
    stages = _stages(medium.p, opts, mesh.diameter)
    for k, (pk, eps, tol) in enumerate(stages):
        stage_medium = medium.with_values(p=pk)
        result = newton.minimize(
            f, free,
            energy=lambda x, m=stage_medium, e=eps: regularized_energy(mesh, m, x, e),
            grad=lambda x, m=stage_medium, e=eps: gradient(mesh, m, x, e),
            hess=lambda x, m=stage_medium, e=eps: hessian(mesh, m, x, e),
            scale=_residual_scale(mesh, stage_medium, md, eps),
            tol=tol,
            max_iter=opts.max_newton_iters,
            label=f"{label} p={pk:.3g} eps={eps:.1e}",
        )
        total_iters += result.iterations
        f = result.x
        last = k == len(stages) - 1
        if not result.converged:
            if last and result.iterations >= opts.max_newton_iters:
                raise NoConvergenceError(
                    f"{label}: Newton reached {opts.max_newton_iters} iterations (residual {result.residual:.3e})"
                )
            logger.warning("%s: stage p=%.3g eps=%.1e stopped at residual %.3e", label, pk, eps, result.residual)
    return f, result, total_iters, md


def _report(
    mesh: TriMesh, medium: Medium, f: np.ndarray, md: MassData, converged: bool, iterations: int,
    residual: float, identity: float, dirichlet: bool,
) -> DispersionReport:
    parts = energy(mesh, medium, f)
    value = parts.total
    upper = float(np.sum(md.m * medium.phi) + np.sum(md.b * medium.psi))
    violation = float(max(0.0, -f.min(), f.max() - 1.0))
    if violation > 1e-8:
        logger.warning("minimizer leaves [0, 1] by %.3e", violation)
    return DispersionReport(
        value=value,
        minimizer=f,
        breakdown=parts,
        identity_residual=abs(value - identity) / max(value, 1.0),
        range_violation=violation,
        converged=converged,
        iterations=iterations,
        grad_residual=residual,
        upper_bound=upper,
        dirichlet=dirichlet,
    )


# --- OPERACIONES ---

def solve(mesh: TriMesh, medium: Medium, opts: SolveOptions | None = None) -> DispersionReport:
    """Minimizador de la energía con f = 1 en los vértices del conductor."""
    opts = opts or SolveOptions()
    fixed = mesh.conductor_mask
    if not fixed.any():
        raise InvalidSpecError("dispersion needs a nonempty conductor region")
    md = masses(mesh)
    ones = np.ones(mesh.n_vertices)

    if medium.is_vanishing:
        # f ≡ 1 es admisible y de energía nula
        zero = EnergyBreakdown.from_parts(0.0, 0.0, 0.0)
        return DispersionReport(
            value=0.0, minimizer=ones, breakdown=zero, identity_residual=0.0, range_violation=0.0,
            converged=True, iterations=0, grad_residual=0.0, upper_bound=0.0,
        )
    if fixed.all():
        return _report(mesh, medium, ones, md, True, 0, 0.0, energy(mesh, medium, ones).total, dirichlet=False)

    f, result, iters, md = _minimize(mesh, medium, ones, fixed, opts, "solve")
    # E(f*) = Σ (mΦ + bΨ) f*^{p-1}, pareando el gradiente nulo con f* - 1
    identity = float(np.sum(lumped_action(mesh, medium, f, md)))
    report = _report(mesh, medium, f, md, result.converged, iters, result.residual, identity, dirichlet=False)
    logger.info("solve p=%.3g: H=%.12g (%d Newton steps)", medium.p, report.value, iters)
    return report


def solve_dirichlet(mesh: TriMesh, medium: Medium, opts: SolveOptions | None = None) -> DispersionReport:
    """Límite Ψ → ∞: el borde de M queda fijado a 0."""
    opts = opts or SolveOptions()
    cond = mesh.conductor_mask
    if not cond.any():
        raise InvalidSpecError("dispersion needs a nonempty conductor region")
    if (cond & mesh.boundary_mask).any():
        raise InvalidSpecError("hard Dirichlet solve needs a conductor away from the boundary")
    medium = medium.with_values(psi=np.zeros_like(medium.psi))
    f0 = cond.astype(float)
    f, result, iters, md = _minimize(mesh, medium, f0, cond | mesh.boundary_mask, opts, "solve_dirichlet")
    # con f = 0 en ∂M la energía es el flujo que sale de K
    flux = stiffness_action(mesh, medium.p, f) + lumped_action(mesh, medium, f, md)
    identity = float(np.sum(flux[cond]))
    report = _report(mesh, medium, f, md, result.converged, iters, result.residual, identity, dirichlet=True)
    logger.info("solve_dirichlet p=%.3g: H=%.12g", medium.p, report.value)
    return report


def _run_rows(fn: Callable[[float], tuple[float, float]], params: list[float], workers: int) -> list[tuple[float, float]]:
    if workers <= 1:
        return [fn(v) for v in params]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, params))


def sweep_psi(
    mesh: TriMesh, medium: Medium, exponents=range(7), opts: SolveOptions | None = None, workers: int = 1,
) -> pd.DataFrame:
    """Filas Ψ = 0, 10^k con Φ = 0; ``aux`` es el valor con borde Dirichlet."""
    zeros = np.zeros(mesh.n_vertices)
    base = medium.with_values(phi=zeros, psi=zeros)
    params = [0.0] + [10.0 ** k for k in exponents]
    limit = solve_dirichlet(mesh, base, opts).value

    def row(psi: float) -> tuple[float, float]:
        return psi, solve(mesh, base.with_values(psi=np.full(mesh.n_vertices, psi)), opts).value

    rows = _run_rows(row, params, workers)
    table = pd.DataFrame(rows, columns=["param", "value"])
    table["aux"] = limit
    return table


def sweep_phi(
    mesh: TriMesh, medium: Medium, exponents=range(5), opts: SolveOptions | None = None, workers: int = 1,
) -> pd.DataFrame:
    """Filas Φ = 0, 10^k con Ψ = 0; ``aux`` = Φ·área(K) es cota inferior."""
    zeros = np.zeros(mesh.n_vertices)
    base = medium.with_values(phi=zeros, psi=zeros)
    params = [0.0] + [10.0 ** k for k in exponents]

    def row(phi: float) -> tuple[float, float]:
        return phi, solve(mesh, base.with_values(phi=np.full(mesh.n_vertices, phi)), opts).value

    rows = _run_rows(row, params, workers)
    table = pd.DataFrame(rows, columns=["param", "value"])
    table["aux"] = table["param"] * mesh.conductor_area
    bad = table[table["value"] < table["aux"] * (1 - 1e-12)]
    if len(bad):
        logger.warning("sweep_phi: %d rows below the conductor lower bound", len(bad))
    return table

"""
Primer autovalor del p-laplaciano con condición de Robin (β) o de Dirichlet,
funcional de reciclaje Λ y el ejemplo plano de simetrización.

p = 2: iteración inversa con desplazamiento sobre la matriz factorizada.
p ≠ 2: continuación en p desde la autofunción lineal con pasos de Newton
sobre el sistema ampliado (u, λ) y renormalización Σ m|u|^p = 1.
"""
from __future__ import annotations

import logging
import math

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import sparse
from scipy.sparse.linalg import splu

from app.services import newton
from app.services.assembly import (
    Medium,
    check_field,
    hessian,
    masses,
    signed_power,
    stiffness_action,
    weighted_stiffness,
)
from app.services.dual import make_smoother
from app.services.errors import (
    IndefiniteQuotientError,
    InvalidSpecError,
    NoConvergenceError,
    ZeroDenominatorError,
)
from app.services.mesh import MeshSpec, TriMesh, generate
from app.services.model import model_space, radial_eigen

logger = logging.getLogger(__name__)

STAGE_TOL = 1e-8
# Λ por debajo de esto es redondeo de A_p sobre constantes
ZERO_VALUE = 1e-12


# --- DTOs ---

class EigenOptions(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    tol: float = 1e-10
    max_iter: int = 500
    p_step: float = 0.5
    shift: float = 1e-6

    @field_validator("tol", "p_step")
    @classmethod
    def _positive(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("must be positive")
        return value


class RayleighParts(BaseModel):
    model_config = ConfigDict(frozen=True)

    dirichlet: float
    boundary: float
    mass: float


class EigenReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lam: float
    eigenfunction: np.ndarray = Field(exclude=True)
    rayleigh_parts: RayleighParts
    residual: float
    iterations: int
    beta: float
    p: float
    dirichlet: bool = False
    flagged: bool = False


class RecyclingReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    Lambda: float
    lam: float
    ratio: float
    witness: np.ndarray = Field(exclude=True)
    beta: float
    epsilon: float | None = None


class SymmetrizationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: float
    beta: float
    level: int
    lam_square: float
    lam_disk: float
    lam_disk_radial: float
    margin: float


# --- COCIENTE DE RAYLEIGH ---

def rayleigh_parts(mesh: TriMesh, p: float, beta: float, u) -> RayleighParts:
    u = check_field(mesh, u)
    md = masses(mesh)
    au = np.abs(u) ** p
    dirichlet = float(u @ stiffness_action(mesh, p, u))
    return RayleighParts(dirichlet=dirichlet, boundary=float(beta * np.sum(md.b * au)), mass=float(np.sum(md.m * au)))


def rayleigh_quotient(mesh: TriMesh, p: float, beta: float, u) -> float:
    """(Σ|∇u|^p area + β Σ b|u|^p) / Σ m|u|^p."""
    parts = rayleigh_parts(mesh, p, beta, u)
    if parts.mass == 0.0:
        raise ZeroDenominatorError("Rayleigh quotient of the zero field")
    return (parts.dirichlet + parts.boundary) / parts.mass


def _normalize(u: np.ndarray, m: np.ndarray, p: float) -> np.ndarray:
    u = u / np.sum(m * np.abs(u) ** p) ** (1.0 / p)
    return u if u.sum() >= 0 else -u


def _residual(mesh: TriMesh, p: float, beta: float, u: np.ndarray, lam: float, rows: np.ndarray) -> float:
    md = masses(mesh)
    stiff = stiffness_action(mesh, p, u)[rows]
    bdry = (beta * md.b * signed_power(u, p))[rows]
    mass = (lam * md.m * signed_power(u, p))[rows]
    ref = np.linalg.norm(stiff) + np.linalg.norm(bdry) + np.linalg.norm(mass)
    res = np.linalg.norm(stiff + bdry - mass)
    return float(res / ref) if ref > 0 else float(res)


# --- p = 2: ITERACIÓN INVERSA ---

def _inverse_iteration(mesh: TriMesh, beta: float, free: np.ndarray, opts: EigenOptions) -> tuple[np.ndarray, float, int, float]:
    md = masses(mesh)
    sigma = max(0.0, -beta) * float(np.max(md.b / md.m)) + opts.shift
    idx = np.flatnonzero(free)
    shifted = weighted_stiffness(mesh) + sparse.diags(beta * md.b + sigma * md.m)
    lu = splu(sparse.csc_matrix(newton.restrict(shifted, idx)))

    u = np.zeros(mesh.n_vertices)
    u[idx] = 1.0
    u = _normalize(u, md.m, 2.0)
    lam, res = math.nan, math.inf
    for it in range(1, opts.max_iter + 1):
        v = np.zeros_like(u)
        v[idx] = lu.solve(md.m[idx] * u[idx])
        u = _normalize(v, md.m, 2.0)
        lam = rayleigh_quotient(mesh, 2.0, beta, u)
        res = _residual(mesh, 2.0, beta, u, lam, idx)
        logger.debug("inverse iteration it=%d lambda=%.14g residual=%.3e", it, lam, res)
        if res <= opts.tol:
            return u, lam, it, res
    raise NoConvergenceError(f"inverse iteration stopped at residual {res:.3e} after {opts.max_iter} steps")


# --- p ≠ 2: NEWTON AMPLIADO CON CONTINUACIÓN ---

def _eigen_newton(
    mesh: TriMesh, p: float, beta: float, u: np.ndarray, free: np.ndarray, tol: float, max_iter: int,
) -> tuple[np.ndarray, float, int, float]:
    md = masses(mesh)
    idx = np.flatnonzero(free)
    n = idx.size
    plain = Medium.uniform(mesh, p)
    eps = 0.0 if p >= 2 else 1e-8 / mesh.diameter

    def state(x: np.ndarray) -> tuple[np.ndarray, float, float]:
        x = _normalize(x, md.m, p)
        lam = rayleigh_quotient(mesh, p, beta, x)
        return x, lam, _residual(mesh, p, beta, x, lam, idx)

    u, lam, res = state(u)
    for it in range(max_iter + 1):
        logger.debug("eigen newton p=%.3g it=%d lambda=%.14g residual=%.3e", p, it, lam, res)
        if res <= tol:
            return u, lam, it, res
        if it == max_iter:
            break
        mphi = md.m * signed_power(u, p)
        absu = np.abs(u)
        if p < 2:
            absu = np.maximum(absu, eps * mesh.diameter)
        lumped = (p - 1.0) * (beta * md.b - lam * md.m) * absu ** (p - 2.0)
        juu = hessian(mesh, plain, u, eps) / p + sparse.diags(lumped)
        jac = sparse.bmat([
            [newton.restrict(juu, idx), sparse.csr_matrix(-mphi[idx][:, None])],
            [sparse.csr_matrix(p * mphi[idx][None, :]), None],
        ], format="csc")
        eq = stiffness_action(mesh, p, u) + beta * md.b * signed_power(u, p) - lam * mphi
        rhs = -np.concatenate([eq[idx], [0.0]])
        step = newton.solve_sparse(jac, rhs)[:n]

        t = 1.0
        while True:
            trial = u.copy()
            trial[idx] += t * step
            cand, cand_lam, cand_res = state(trial)
            if cand_res <= (1.0 - 1e-4 * t) * res:
                break
            t *= 0.5
            if t < 1e-8:
                raise NoConvergenceError(f"eigen Newton stalled at residual {res:.3e} (p={p})")
        u, lam, res = cand, cand_lam, cand_res
    raise NoConvergenceError(f"eigen Newton reached {max_iter} iterations (residual {res:.3e}, p={p})")


def _check_sign(u: np.ndarray, free: np.ndarray, beta: float) -> bool:
    """True si la autofunción cambia de signo en los vértices libres."""
    sign_change = bool((u[free] <= 0).any())
    if sign_change and beta < 0:
        raise IndefiniteQuotientError(f"beta={beta}: the quotient limit changes sign")
    if sign_change:
        logger.warning("first eigenfunction is not strictly positive on this mesh")
    return sign_change


def _solve_eigen(mesh: TriMesh, p: float, beta: float, free: np.ndarray, opts: EigenOptions, dirichlet: bool) -> EigenReport:
    u, lam, iters, res = _inverse_iteration(mesh, beta, free, opts)
    if p != 2.0:
        n = max(1, math.ceil(abs(p - 2.0) / opts.p_step - 1e-12))
        for k in range(1, n + 1):
            pk = 2.0 + (p - 2.0) * k / n
            tol = opts.tol if k == n else STAGE_TOL
            u, lam, it, res = _eigen_newton(mesh, pk, beta, u, free, tol, opts.max_iter)
            iters += it
    flagged = _check_sign(u, free, beta) or beta < 0
    report = EigenReport(
        lam=lam, eigenfunction=u, rayleigh_parts=rayleigh_parts(mesh, p, 0.0 if dirichlet else beta, u),
        residual=res, iterations=iters, beta=beta, p=p, dirichlet=dirichlet, flagged=flagged,
    )
    logger.info("eigen p=%.3g beta=%s: lambda=%.12g", p, "inf" if dirichlet else beta, lam)
    return report


def robin_eigen(mesh: TriMesh, p: float, beta: float, opts: EigenOptions | None = None) -> EigenReport:
    opts = opts or EigenOptions()
    if not p > 1:
        raise InvalidSpecError(f"exponent p must be > 1 (got {p})")
    if not mesh.boundary_mask.any():
        raise InvalidSpecError("Robin eigenproblem needs a mesh with boundary")
    if beta == 0.0:
        md = masses(mesh)
        u = _normalize(np.ones(mesh.n_vertices), md.m, p)
        return EigenReport(
            lam=0.0, eigenfunction=u, rayleigh_parts=rayleigh_parts(mesh, p, 0.0, u),
            residual=0.0, iterations=0, beta=0.0, p=p,
        )
    if beta < 0:
        logger.warning("beta=%s < 0: coercivity is not guaranteed", beta)
    return _solve_eigen(mesh, p, float(beta), np.ones(mesh.n_vertices, dtype=bool), opts, dirichlet=False)


def dirichlet_eigen(mesh: TriMesh, p: float, opts: EigenOptions | None = None) -> EigenReport:
    opts = opts or EigenOptions()
    if not p > 1:
        raise InvalidSpecError(f"exponent p must be > 1 (got {p})")
    free = ~mesh.boundary_mask
    if not free.any():
        raise InvalidSpecError("Dirichlet eigenproblem needs interior vertices")
    return _solve_eigen(mesh, p, 0.0, free, opts, dirichlet=True)


# --- RECICLAJE ---

def recycling_value(mesh: TriMesh, p: float, beta: float | None, u, lam: float) -> float:
    """
    Λ(u) = [Σ m|d + λ u^{p-1}| + β Σ b u^{p-1}] / Σ m u^{p-1}.

    ``beta=None`` es la variante de Dirichlet: sin término de borde, u = 0 en
    ∂M y la suma recorre todos los vértices (las filas del borde llevan el
    flujo discreto saliente).
    """
    u = check_field(mesh, u)
    if (u < 0).any():
        raise InvalidSpecError("recycling functional needs a nonnegative field")
    md = masses(mesh)
    if beta is None and np.any(u[mesh.boundary_mask] != 0.0):
        raise InvalidSpecError("Dirichlet recycling needs u = 0 on the boundary")
    b = 0.0 if beta is None else beta
    up = u ** (p - 1.0)
    denom = float(np.sum(md.m * up))
    if denom == 0.0:
        raise ZeroDenominatorError("sum of m u^{p-1} vanishes")
    d = (-stiffness_action(mesh, p, u) - b * md.b * up) / md.m
    return float((np.sum(md.m * np.abs(d + lam * up)) + b * np.sum(md.b * up)) / denom)


def recycling_check(
    mesh: TriMesh, p: float, beta: float | None, epsilons=(), opts: EigenOptions | None = None,
) -> list[RecyclingReport]:
    """Robin: Λ en la autofunción. Dirichlet (``beta=None``): Λ en h_low(u/max u)·max u por ε."""
    if beta is not None:
        eig = robin_eigen(mesh, p, beta, opts)
        lam_value = recycling_value(mesh, p, beta, eig.eigenfunction, eig.lam)
        return [RecyclingReport(
            Lambda=lam_value, lam=eig.lam, ratio=_ratio(lam_value, eig.lam),
            witness=eig.eigenfunction, beta=beta,
        )]

    eig = dirichlet_eigen(mesh, p, opts)
    u = np.clip(eig.eigenfunction, 0.0, None)
    top = float(u.max())
    reports = []
    for eps in epsilons:
        h = make_smoother(eps, "lower")
        w = np.asarray(h.h(u / top), dtype=float) * top
        w[mesh.boundary_mask] = 0.0
        lam_value = recycling_value(mesh, p, None, w, eig.lam)
        reports.append(RecyclingReport(
            Lambda=lam_value, lam=eig.lam, ratio=_ratio(lam_value, eig.lam),
            witness=w, beta=math.inf, epsilon=float(eps),
        ))
    return reports


def _ratio(value: float, lam: float) -> float:
    if lam == 0.0:
        return 1.0 if abs(value) <= ZERO_VALUE else math.inf
    return value / lam


def recycling_table(reports: list[RecyclingReport]) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.beta, r.lam, r.Lambda, r.ratio) for r in reports],
        columns=["beta", "lambda", "Lambda", "ratio"],
    )


# --- SIMETRIZACIÓN PLANA ---

def symmetrization_check(p: float = 2.0, beta: float = 1.0, level: int = 2, opts: EigenOptions | None = None) -> SymmetrizationReport:
    """Cuadrado de área π frente al disco unidad (κ = 0)."""

    square = generate(MeshSpec(generator="square", side=math.sqrt(math.pi), resolution=level))
    disk = generate(MeshSpec(generator="disk", radius=1.0, resolution=level))
    lam_square = robin_eigen(square, p, beta, opts).lam
    lam_disk = robin_eigen(disk, p, beta, opts).lam
    oracle = radial_eigen(model_space(0.0, 1.0, 2), p, beta)
    margin = lam_square - lam_disk
    if margin <= 0:
        logger.warning("symmetrization: square does not exceed the disk (margin %.3e)", margin)
    return SymmetrizationReport(
        p=p, beta=beta, level=level, lam_square=lam_square, lam_disk=lam_disk,
        lam_disk_radial=oracle, margin=margin,
    )

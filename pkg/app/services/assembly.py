"""
Ensamblado P1 de la energía de dispersión térmica

    E(f) = Σ_T |∇f|_T^p · area_T + Σ_i m_i Φ_i |f_i|^p + Σ_i b_i Ψ_i |f_i|^p

con sus derivadas primera y segunda y la acción de rigidez p-laplaciana.
Todas las reducciones usan ``np.bincount`` sobre la tabla de triángulos, de
modo que el orden de suma es fijo.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import sparse

from app.services.errors import InvalidSpecError, NumericalDegeneracyError
from app.services.mesh import TriMesh


# --- TIPOS DEL DOMINIO ---

@dataclass(frozen=True, eq=False)
class Medium:
    """Exponente p y coeficientes Φ (volumen) y Ψ (borde) por vértice."""

    p: float
    phi: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=float))
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=float))
        if not self.p > 1:
            raise InvalidSpecError(f"exponent p must be > 1 (got {self.p})")
        if self.phi.shape != self.psi.shape:
            raise InvalidSpecError("phi and psi must have one entry per vertex")
        for name, arr in (("phi", self.phi), ("psi", self.psi)):
            if not np.isfinite(arr).all() or (arr < 0).any():
                raise InvalidSpecError(f"{name} must be finite and nonnegative")

    @classmethod
    def uniform(cls, mesh: TriMesh, p: float, phi: float = 0.0, psi: float = 0.0) -> Medium:
        nv = mesh.n_vertices
        return cls(p, np.full(nv, float(phi)), np.full(nv, float(psi)))

    def with_values(self, **changes) -> Medium:
        return replace(self, **changes)

    @property
    def is_vanishing(self) -> bool:
        return not self.phi.any() and not self.psi.any()


@dataclass(frozen=True, eq=False)
class MassData:
    m: np.ndarray  # área agrupada por vértice
    b: np.ndarray  # longitud de borde agrupada (0 en vértices interiores)


class EnergyBreakdown(BaseModel):
    model_config = ConfigDict(frozen=True)

    dirichlet: float
    bulk: float
    boundary: float
    total: float

    @classmethod
    def from_parts(cls, dirichlet: float, bulk: float, boundary: float) -> EnergyBreakdown:
        return cls(dirichlet=dirichlet, bulk=bulk, boundary=boundary, total=dirichlet + bulk + boundary)


# --- UTILIDADES ---

def check_field(mesh: TriMesh, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (mesh.n_vertices,):
        raise InvalidSpecError(f"nodal field has shape {f.shape}, expected ({mesh.n_vertices},)")
    return f


def signed_power(x: np.ndarray, q: float) -> np.ndarray:
    """|x|^{q-1} x, con 0 ↦ 0."""
    return np.sign(x) * np.abs(x) ** (q - 1.0)


def tri_gradients(mesh: TriMesh, f: np.ndarray) -> np.ndarray:
    """
    Gradiente constante (nt, 3) del interpolante lineal en cada triángulo.

    Se usan diferencias respecto al primer vértice (Σ_k ∇φ_k = 0), así un
    campo constante da gradiente exactamente nulo.
    """
    vals = f[mesh.triangles]
    diffs = vals[:, 1:] - vals[:, :1]
    return np.einsum("tkd,tk->td", mesh.hat_gradients[:, 1:], diffs)


def _scatter(mesh: TriMesh, local: np.ndarray) -> np.ndarray:
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


def _weight(norm2: np.ndarray, p: float, eps: float) -> np.ndarray:
    """(ε² + |∇f|²)^{(p-2)/2}; sin regularizar, nulo donde ∇f = 0."""
    if eps > 0:
        return (eps * eps + norm2) ** (0.5 * (p - 2.0))
    w = np.zeros_like(norm2)
    nz = norm2 > 0
    w[nz] = norm2[nz] ** (0.5 * (p - 2.0))
    return w


# --- OPERACIONES ---

def masses(mesh: TriMesh) -> MassData:
    m = np.bincount(mesh.triangles.ravel(), weights=np.repeat(mesh.areas, 3), minlength=mesh.n_vertices) / 3.0
    b = np.bincount(
        mesh.boundary_edges.ravel(), weights=np.repeat(mesh.boundary_lengths, 2), minlength=mesh.n_vertices,
    ) / 2.0
    return MassData(m=m, b=b)


def stiffness_action(mesh: TriMesh, p: float, f, eps: float = 0.0) -> np.ndarray:
    """Σ_T w_T (∇f·∇φ_i)_T area_T con w = |∇f|^{p-2} (o su versión regularizada)."""
    f = check_field(mesh, f)
    g = tri_gradients(mesh, f)
    norm2 = np.einsum("td,td->t", g, g)
    w = _weight(norm2, p, eps) * mesh.areas
    local = np.einsum("tkd,td->tk", mesh.hat_gradients, g) * w[:, None]
    return _scatter(mesh, local)


def energy(mesh: TriMesh, medium: Medium, f) -> EnergyBreakdown:
    f = check_field(mesh, f)
    md = masses(mesh)
    g = tri_gradients(mesh, f)
    norm2 = np.einsum("td,td->t", g, g)
    p = medium.p
    af = np.abs(f) ** p
    return EnergyBreakdown.from_parts(
        dirichlet=float(np.sum(norm2 ** (0.5 * p) * mesh.areas)),
        bulk=float(np.sum(md.m * medium.phi * af)),
        boundary=float(np.sum(md.b * medium.psi * af)),
    )


def regularized_energy(mesh: TriMesh, medium: Medium, f: np.ndarray, eps: float) -> float:
    """Energía cuyo gradiente es ``gradient(..., eps)``; coincide con ``energy`` si ε = 0."""
    if eps == 0:
        return energy(mesh, medium, f).total
    md = masses(mesh)
    g = tri_gradients(mesh, f)
    norm2 = np.einsum("td,td->t", g, g)
    p = medium.p
    af = np.abs(f) ** p
    dirichlet = np.sum((eps * eps + norm2) ** (0.5 * p) * mesh.areas)
    return float(dirichlet + np.sum(md.m * medium.phi * af) + np.sum(md.b * medium.psi * af))


def lumped_action(mesh: TriMesh, medium: Medium, f: np.ndarray, md: MassData | None = None) -> np.ndarray:
    """(MΦ + BΨ) |f|^{p-2} f."""
    md = md or masses(mesh)
    return (md.m * medium.phi + md.b * medium.psi) * signed_power(f, medium.p)


def gradient(mesh: TriMesh, medium: Medium, f, eps_reg: float = 0.0) -> np.ndarray:
    f = check_field(mesh, f)
    p = medium.p
    grad = p * (stiffness_action(mesh, p, f, eps_reg) + lumped_action(mesh, medium, f))
    if not np.isfinite(grad).all():
        raise NumericalDegeneracyError("nonfinite gradient (degenerate gradient with p < 2 and eps_reg = 0)")
    return grad


def _assemble(mesh: TriMesh, local: np.ndarray, diagonal: np.ndarray | None = None) -> sparse.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    nv = mesh.n_vertices
    mat = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    if diagonal is not None:
        mat = mat + sparse.diags(diagonal, format="csr")
    return mat


def weighted_stiffness(mesh: TriMesh, weights: np.ndarray | float = 1.0) -> sparse.csr_matrix:
    """Matriz de rigidez lineal Σ_T w_T area_T ∇φ_k·∇φ_l."""
    G = mesh.hat_gradients
    scale = mesh.areas * weights
    local = np.einsum("tkd,tld->tkl", G, G) * scale[:, None, None]
    return _assemble(mesh, local)


def hessian(mesh: TriMesh, medium: Medium, f, eps_reg: float = 0.0) -> sparse.csr_matrix:
    """Segunda derivada de la energía (regularizada) como matriz dispersa simétrica."""
    f = check_field(mesh, f)
    p = medium.p
    if p < 2 and eps_reg <= 0:
        raise NumericalDegeneracyError("hessian with p < 2 requires eps_reg > 0")
    G = mesh.hat_gradients
    g = tri_gradients(mesh, f)
    r2 = np.einsum("td,td->t", g, g) + eps_reg * eps_reg
    if p == 2:
        w = np.ones_like(r2)
    else:
        w = _weight(r2, p, 0.0)
    local = np.einsum("tkd,tld->tkl", G, G) * w[:, None, None]
    if p != 2:
        s = np.zeros_like(r2)
        nz = r2 > 0
        s[nz] = (p - 2.0) * r2[nz] ** (0.5 * (p - 4.0))
        proj = np.einsum("tkd,td->tk", G, g)
        local += np.einsum("tk,tl->tkl", proj, proj) * s[:, None, None]
    local *= (p * mesh.areas)[:, None, None]

    md = masses(mesh)
    coef = md.m * medium.phi + md.b * medium.psi
    af = np.abs(f)
    if p < 2:
        af = np.maximum(af, eps_reg * mesh.diameter)
    diagonal = np.zeros_like(f)
    active = coef > 0
    diagonal[active] = p * (p - 1.0) * coef[active] * af[active] ** (p - 2.0)

    mat = _assemble(mesh, local, diagonal)
    if not np.isfinite(mat.data).all():
        raise NumericalDegeneracyError("nonfinite hessian entries")
    return mat

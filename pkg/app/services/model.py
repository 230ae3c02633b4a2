"""
Espacios modelo de producto alabeado M_{κ,λ} = [t0, t_end] × S^{n-1} con
métrica dt² + s(t)² g_S, donde s'' + κ s = 0, s(0) = 1, s'(0) = -λ.

La coordenada t es la distancia al borde (el borde está en t = t0) y el
conductor modelo es K* = {t ≥ t0 + δ}. Todo es unidimensional: cuadraturas
cerradas, un FEM radial P1 y disparo para el primer autovalor.
"""
from __future__ import annotations

import logging
import math
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate, optimize, sparse, special

from app.services import newton
from app.services.dispersion import SolveOptions, solve
from app.services.errors import (
    AmbiguousCaseError,
    BoundaryMeasureMismatchError,
    InvalidSpecError,
    MissingCutoffError,
    NoConvergenceError,
    RootNotBracketedError,
)
from app.services.assembly import Medium
from app.services.mesh import TriMesh

logger = logging.getLogger(__name__)

Case = Literal["ball", "exterior", "horosphere", "tube"]

CASE_TOL = 1e-9
RADIAL_NODES = 2000
QUAD_TOL = 1e-12
MEASURE_TOL = 0.01


# --- ALABEO ---

def warp(kappa: float, lam: float, t):
    """s_{κ,λ}(t): solución de s'' + κ s = 0 con s(0) = 1, s'(0) = -λ."""
    t = np.asarray(t, dtype=float)
    if kappa > 0:
        k = math.sqrt(kappa)
        return np.cos(k * t) - (lam / k) * np.sin(k * t)
    if kappa < 0:
        k = math.sqrt(-kappa)
        return np.cosh(k * t) - (lam / k) * np.sinh(k * t)
    return 1.0 - lam * t


def dwarp(kappa: float, lam: float, t):
    t = np.asarray(t, dtype=float)
    if kappa > 0:
        k = math.sqrt(kappa)
        return -k * np.sin(k * t) - lam * np.cos(k * t)
    if kappa < 0:
        k = math.sqrt(-kappa)
        return k * np.sinh(k * t) - lam * np.cosh(k * t)
    return np.full_like(t, -lam)


def sphere_measure(n: int) -> float:
    """ω_{n-1} = |S^{n-1}|."""
    return 2.0 * math.pi ** (0.5 * n) / special.gamma(0.5 * n)


class ModelSpace(BaseModel):
    model_config = ConfigDict(frozen=True)

    kappa: float
    lam: float
    n: int
    case: Case
    t0: float
    t_end: float
    compact: bool
    boundary_measure: float
    # parámetro de la ecuación del alabeo efectivamente usada (0 en el tubo)
    warp_lam: float

    def warp(self, t):
        return warp(self.kappa, self.warp_lam, t)

    def dwarp(self, t):
        return dwarp(self.kappa, self.warp_lam, t)

    @property
    def section(self) -> float:
        """Factor σ con |{t} × S^{n-1}| = σ s(t)^{n-1}."""
        return self.boundary_measure / float(self.warp(self.t0)) ** (self.n - 1)

    def volume(self, a: float, b: float) -> float:
        value, _ = integrate.quad(
            lambda t: float(self.warp(t)) ** (self.n - 1), a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200,
        )
        return self.section * value


def model_space(
    kappa: float, lam: float, n: int = 2, cutoff: float | None = None,
    boundary_measure: float | None = None, tol: float = CASE_TOL,
) -> ModelSpace:
    """Clasifica (κ, λ) en bola, exterior, horosfera o tubo y fija los extremos."""
    if n < 2:
        raise InvalidSpecError(f"model dimension must be >= 2 (got {n})")
    root = math.sqrt(abs(kappa))
    gap = abs(abs(lam) - root)
    if kappa <= 0 and 0 < gap <= tol:
        raise AmbiguousCaseError(f"|lambda| = {abs(lam)} is within {tol} of sqrt|kappa| = {root}")

    t0, warp_lam = 0.0, lam
    if kappa > 0:
        case, t_end = "ball", math.atan2(root, lam) / root
    elif lam > root:
        case = "ball"
        t_end = 1.0 / lam if kappa == 0 else math.atanh(root / lam) / root
    elif gap == 0:
        case, t_end = "horosphere", math.inf
    elif lam < -root:
        case, t_end = "exterior", math.inf
    else:
        case, t_end = "tube", math.inf
        warp_lam = 0.0
        t0 = math.atanh(-lam / root) / root

    compact = case == "ball"
    if not compact:
        if cutoff is None or not cutoff > 0:
            raise MissingCutoffError(f"case '{case}' is noncompact and needs a positive cutoff T")
        t_end = t0 + cutoff

    if boundary_measure is None:
        omega = sphere_measure(n)
        if compact:
            boundary_measure = omega * (lam * lam + kappa) ** (-0.5 * (n - 1))
        else:
            boundary_measure = omega * float(warp(kappa, warp_lam, t0)) ** (n - 1)
    return ModelSpace(
        kappa=kappa, lam=lam, n=n, case=case, t0=t0, t_end=t_end, compact=compact,
        boundary_measure=boundary_measure, warp_lam=warp_lam,
    )


# --- RADIOS MODELO ---

def _sine_integral(n: int) -> float:
    value, _ = integrate.quad(lambda th: math.sin(th) ** (n - 1), 0.0, math.pi, epsabs=QUAD_TOL, epsrel=QUAD_TOL)
    return value


def model_radius(kappa: int, n: int, d: float) -> float:
    if not d > 0 or n < 2:
        raise InvalidSpecError("model_radius needs d > 0 and n >= 2")
    if kappa == 1:
        return 1.0
    area = _sine_integral(n)
    if kappa == 0:
        return d / ((1.0 + n * area) ** (1.0 / n) - 1.0)
    if kappa != -1:
        raise InvalidSpecError(f"model_radius is tabulated for kappa in {{1, 0, -1}} (got {kappa})")

    def balance(u: float) -> float:
        value, _ = integrate.quad(
            lambda t: (math.cosh(t) + u * math.sinh(t)) ** (n - 1), 0.0, d, epsabs=QUAD_TOL, epsrel=QUAD_TOL,
        )
        return u * value - area

    hi = 1.0
    for _ in range(60):
        if balance(hi) > 0:
            break
        hi *= 2.0
    else:
        raise RootNotBracketedError(f"c(d) not bracketed up to {hi}")
    c = optimize.brentq(balance, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return 1.0 / c


# --- DISPERSIÓN RADIAL ---

class RadialReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    value: float
    profile_t: np.ndarray = Field(exclude=True)
    profile_u: np.ndarray = Field(exclude=True)
    conductor_volume: float
    method: Literal["quadrature-closed-form", "1d-fem", "trivial", "symbolic"]


def _closed_form(model: ModelSpace, delta: float, p: float, psi: float, samples: int = 201) -> tuple[float, np.ndarray, np.ndarray]:
    """Φ = 0: primera integral s^{n-1}|u'|^{p-2}u' = C y una cuadratura."""
    n, t0 = model.n, model.t0
    q = 1.0 / (p - 1.0)

    def inv_weight(t: float) -> float:
        return float(model.warp(t)) ** (-(n - 1) * q)

    grid = np.linspace(t0, t0 + delta, samples)
    pieces = [
        integrate.quad(inv_weight, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)[0]
        for a, b in zip(grid[:-1], grid[1:])
    ]
    cumulative = np.concatenate([[0.0], np.cumsum(pieces)])
    total = cumulative[-1]
    w0 = float(model.warp(t0)) ** (n - 1)
    if math.isinf(psi):
        u0, slope = 0.0, 1.0 / total
        value = model.section * slope ** (p - 1.0)
    else:
        u0 = 1.0 / (1.0 + (psi * w0) ** q * total)
        slope = (psi * w0) ** q * u0
        value = model.section * psi * w0 * u0 ** (p - 1.0)
    return value, grid, u0 + slope * cumulative


def _stiffness_weight(g: np.ndarray, p: float, eps: float) -> np.ndarray:
    """d²/dg² de (ε² + g²)^{p/2} / p, nulo donde ε = g = 0 y p > 2."""
    if p == 2:
        return np.ones_like(g)
    r2 = eps * eps + g * g
    out = np.zeros_like(g)
    nz = r2 > 0
    out[nz] = r2[nz] ** (0.5 * p - 2.0) * (r2[nz] + (p - 2.0) * g[nz] ** 2)
    return out


def _radial_fem(model: ModelSpace, delta: float, p: float, phi: float, psi: float) -> tuple[float, np.ndarray, np.ndarray]:
    """P1 sobre [t0, t0 + δ] con u = 1 en el extremo del conductor."""
    t = np.linspace(model.t0, model.t0 + delta, RADIAL_NODES + 1)
    h = np.diff(t)
    wmid = np.asarray(model.warp(0.5 * (t[:-1] + t[1:])), dtype=float) ** (model.n - 1)
    wnode = np.asarray(model.warp(t), dtype=float) ** (model.n - 1)
    mass = np.zeros_like(t)
    mass[:-1] += 0.5 * h * wnode[:-1]
    mass[1:] += 0.5 * h * wnode[1:]
    dirichlet = math.isinf(psi)
    coef = phi * mass
    if not dirichlet:
        coef[0] += psi * wnode[0]
    fixed = np.zeros_like(t, dtype=bool)
    fixed[-1] = True
    fixed[0] = dirichlet
    free = np.flatnonzero(~fixed)

    def tridiag(k: np.ndarray, extra: np.ndarray) -> sparse.csr_matrix:
        diag = extra.copy()
        diag[:-1] += k
        diag[1:] += k
        return sparse.diags([diag, -k, -k], [0, 1, -1], format="csr")

    def flux_action(u, pk, eps):
        g = np.diff(u) / h
        flux = pk * wmid * (eps * eps + g * g) ** (0.5 * pk - 1.0) * g
        out = np.zeros_like(u)
        out[:-1] -= flux
        out[1:] += flux
        return out

    def stage(pk: float, eps: float):
        def energy(u):
            g = np.diff(u) / h
            return float(np.sum(wmid * h * (eps * eps + g * g) ** (0.5 * pk)) + np.sum(coef * np.abs(u) ** pk))

        def grad(u):
            return flux_action(u, pk, eps) + pk * coef * np.sign(u) * np.abs(u) ** (pk - 1.0)

        def hess(u):
            k = pk * wmid / h * _stiffness_weight(np.diff(u) / h, pk, eps)
            au = np.abs(u) if pk >= 2 else np.maximum(np.abs(u), 1e-12)
            return tridiag(k, pk * (pk - 1.0) * coef * au ** (pk - 2.0))

        def scale(u):
            # sobre todos los nodos: el flujo en los extremos fijados no se anula
            lumped = pk * coef * np.abs(u) ** (pk - 1.0)
            return float(np.linalg.norm(flux_action(u, pk, eps)) + np.linalg.norm(lumped))

        return energy, grad, hess, scale

    # arranque lineal p = 2
    lin = tridiag(wmid / h, coef)
    u = np.where(fixed, 0.0, 1.0)
    u[-1] = 1.0
    rhs = -(lin[free][:, [len(t) - 1]] @ np.array([1.0]))
    u[free] = newton.solve_sparse(newton.restrict(lin, free), rhs)

    opts = SolveOptions()
    schedule = [] if p == 2 else [e / delta for e in opts.eps_schedule]
    schedule.append(0.0 if p >= 2 else opts.eps_final / delta)
    for k, eps in enumerate(schedule):
        last = k == len(schedule) - 1
        energy, grad, hess, scale = stage(p, eps)
        result = newton.minimize(
            u, ~fixed, energy, grad, hess, scale,
            tol=opts.grad_tol if last else 1e-6, max_iter=opts.max_newton_iters, label="radial",
        )
        u = result.x
        if last and not result.converged and result.iterations >= opts.max_newton_iters:
            raise NoConvergenceError(f"radial Newton stopped at residual {result.residual:.3e}")
    g = np.diff(u) / h
    value = float(np.sum(wmid * h * np.abs(g) ** p) + np.sum(coef * np.abs(u) ** p))
    return model.section * value, t, u


def radial_dispersion(model: ModelSpace, delta: float, p: float, phi: float = 0.0, psi: float = 0.0) -> RadialReport:
    """
    H^d(K*, M_{κ,λ}) para Φ, Ψ constantes; ``psi=math.inf`` es el límite de Dirichlet.

    Φ = 0 usa la forma cerrada; Φ > 0 el FEM radial más Φ·vol(K*).
    """
    if not p > 1:
        raise InvalidSpecError(f"exponent p must be > 1 (got {p})")
    if not 0 < delta < model.t_end - model.t0:
        raise InvalidSpecError(f"delta must lie in (0, {model.t_end - model.t0})")
    if phi < 0 or psi < 0:
        raise InvalidSpecError("phi and psi must be nonnegative")

    if model.compact:
        cond_volume = model.volume(model.t0 + delta, model.t_end)
    else:
        cond_volume = math.inf

    if phi == 0 and psi == 0:
        t = np.array([model.t0, model.t0 + delta])
        return RadialReport(value=0.0, profile_t=t, profile_u=np.ones(2), conductor_volume=cond_volume, method="trivial")
    if phi > 0 and not model.compact:
        logger.info("noncompact model with phi > 0: dispersion is infinite")
        t = np.array([model.t0, model.t0 + delta])
        return RadialReport(value=math.inf, profile_t=t, profile_u=np.ones(2), conductor_volume=cond_volume, method="symbolic")

    if phi == 0:
        value, t, u = _closed_form(model, delta, p, psi)
        method = "quadrature-closed-form"
    else:
        value, t, u = _radial_fem(model, delta, p, phi, psi)
        value += phi * cond_volume
        method = "1d-fem"
    logger.info("radial dispersion (%s, %s): %.12g", model.case, method, value)
    return RadialReport(value=value, profile_t=t, profile_u=u, conductor_volume=cond_volume, method=method)


# --- AUTOVALOR RADIAL (DISPARO) ---

def radial_eigen(model: ModelSpace, p: float, beta: float, rtol: float = 1e-10) -> float:
    """
    Primer autovalor radial por disparo desde el centro; ``beta=math.inf`` es Dirichlet.

    En r = t_end - t se integra u' = φ_{p'}(v / S^{n-1}), v' = -λ S^{n-1} φ_p(u)
    con u(0) = 1, v(0) = 0.
    """
    if not model.compact:
        raise InvalidSpecError("radial_eigen needs a compact model")
    if beta < 0:
        raise InvalidSpecError("radial eigen oracle covers beta >= 0")
    if beta == 0:
        return 0.0
    n = model.n
    length = model.t_end - model.t0

    def radius(r):
        return float(model.warp(model.t_end - r))

    start = 1e-7 * length
    slope0 = abs(float(model.dwarp(model.t_end)))

    def mismatch(lam: float) -> float:
        def rhs(r, y):
            s = radius(r) ** (n - 1)
            flux = y[1] / s
            du = np.sign(flux) * abs(flux) ** (1.0 / (p - 1.0))
            return [du, -lam * s * np.sign(y[0]) * abs(y[0]) ** (p - 1.0)]

        v_start = -lam * slope0 ** (n - 1) * start ** n / n
        sol = integrate.solve_ivp(rhs, (start, length), [1.0, v_start], method="DOP853", rtol=rtol, atol=1e-13)
        if not sol.success:
            raise NoConvergenceError(f"shooting failed at lambda={lam}: {sol.message}")
        u_end, v_end = sol.y[0, -1], sol.y[1, -1]
        if math.isinf(beta):
            return float(u_end)
        s_end = radius(length) ** (n - 1)
        return float(v_end / s_end + beta * np.sign(u_end) * abs(u_end) ** (p - 1.0))

    step = 0.25 * length ** (-p)
    lo, f_lo = 0.0, mismatch(0.0)
    for _ in range(4000):
        hi = lo + step
        f_hi = mismatch(hi)
        if f_lo * f_hi <= 0:
            return float(optimize.brentq(mismatch, lo, hi, xtol=1e-13, rtol=1e-13, maxiter=200))
        lo, f_lo = hi, f_hi
    raise RootNotBracketedError("no sign change of the shooting mismatch in the scanned range")


# --- COMPARACIÓN SUPERFICIE / MODELO ---

class ComparisonReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    surface_value: float
    model_value: float
    gap: float
    holds: bool
    kappa: float
    lam: float
    delta: float
    boundary_length: float
    model_boundary: float


def comparison_report(
    mesh: TriMesh, model: ModelSpace, delta: float, p: float, phi: float = 0.0, psi: float = 0.0,
    opts: SolveOptions | None = None, tol: float = 0.015,
) -> ComparisonReport:
    """H^d(K, M) en la superficie frente a H^d(K*, M_{κ,λ}); sólo se verifica |∂M| = |∂M_{κ,λ}|."""
    mismatch = abs(mesh.perimeter - model.boundary_measure) / model.boundary_measure
    if mismatch > MEASURE_TOL:
        raise BoundaryMeasureMismatchError(
            f"boundary length {mesh.perimeter:.6g} differs from the model's {model.boundary_measure:.6g} by {100 * mismatch:.2f}%"
        )
    surface = solve(mesh, Medium.uniform(mesh, p, phi, psi), opts).value
    radial = radial_dispersion(model, delta, p, phi, psi).value
    if math.isinf(radial):
        gap = math.inf
    elif radial == 0.0:
        gap = 0.0 if surface == 0.0 else -math.inf
    else:
        gap = (radial - surface) / radial
    return ComparisonReport(
        surface_value=surface, model_value=radial, gap=gap, holds=surface <= radial * (1.0 + tol),
        kappa=model.kappa, lam=model.lam, delta=delta, boundary_length=mesh.perimeter,
        model_boundary=model.boundary_measure,
    )


def comparison_table(report: ComparisonReport) -> pd.DataFrame:
    return pd.DataFrame(
        [("surface", report.surface_value, report.gap, report.holds),
         ("model", report.model_value, report.gap, report.holds)],
        columns=["side", "value", "gap", "flag"],
    )

"""
Funcional dual L¹ de la dispersión y ley de la mitad.

El suavizador ``h`` aplana el minimizador cerca de 1 (orientación ``upper``)
o cerca de 0 (``lower``) con derivada segunda continua. La densidad
p-laplaciana por vértice absorbe en el borde el flujo de Robin -Ψ f^{p-1}.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate

from app.services import dispersion
from app.services.assembly import Medium, check_field, masses, signed_power, stiffness_action, tri_gradients
from app.services.errors import SmootherRangeError
from app.services.mesh import TriMesh, level_set_segments

logger = logging.getLogger(__name__)

Orientation = Literal["upper", "lower"]
EPS_MAX = 0.2
# un dual por debajo de esto es ruido de redondeo de A_p(1)
DUAL_ZERO = 1e-12


# --- SUAVIZADOR C² ---

@dataclass(frozen=True)
class SmootherH:
    epsilon: float
    orientation: Orientation = "upper"
    a: float = field(init=False)
    delta: float = field(init=False)
    omega: float = field(init=False)

    def __post_init__(self):
        eps = self.epsilon
        a = 2.0 * eps * eps * math.pi / (1.0 - 2.0 * eps)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "delta", a + eps * math.pi)
        object.__setattr__(self, "omega", (1.0 - 2.0 * eps) / (2.0 * eps * eps))

    @property
    def t1(self) -> float:
        return 1.0 - self.delta

    @property
    def t2(self) -> float:
        return 1.0 - self.a

    @property
    def peak(self) -> float:
        """max h' = 1 + 2ε."""
        return 1.0 + 2.0 * self.epsilon

    # piezas de la orientación superior

    def _pieces(self, t: np.ndarray):
        eps, t1, t2 = self.epsilon, self.t1, self.t2
        amp = 0.5 * self.peak
        s = (t - t1) / eps
        u = self.omega * (t - t2)
        first = t <= t1
        middle = (t > t1) & (t <= t2)
        return eps, t1, t2, amp, s, u, first, middle

    def _h_up(self, t):
        t = np.asarray(t, dtype=float)
        eps, t1, t2, amp, s, u, first, middle = self._pieces(t)
        last = t2 + eps * eps * math.pi + amp * ((t - t2) + np.sin(u) / self.omega)
        return np.where(first, t, np.where(middle, t + eps * (t - t1) - eps * eps * np.sin(s), last))

    def _dh_up(self, t):
        t = np.asarray(t, dtype=float)
        eps, t1, t2, amp, s, u, first, middle = self._pieces(t)
        return np.where(first, 1.0, np.where(middle, 1.0 + eps * (1.0 - np.cos(s)), amp * (1.0 + np.cos(u))))

    def _d2h_up(self, t):
        t = np.asarray(t, dtype=float)
        eps, t1, t2, amp, s, u, first, middle = self._pieces(t)
        return np.where(first, 0.0, np.where(middle, np.sin(s), -amp * self.omega * np.sin(u)))

    # evaluadores públicos

    def h(self, t):
        if self.orientation == "upper":
            return self._h_up(t)
        return 1.0 - self._h_up(1.0 - np.asarray(t, dtype=float))

    def dh(self, t):
        if self.orientation == "upper":
            return self._dh_up(t)
        return self._dh_up(1.0 - np.asarray(t, dtype=float))

    def d2h(self, t):
        if self.orientation == "upper":
            return self._d2h_up(t)
        return -self._d2h_up(1.0 - np.asarray(t, dtype=float))

    def total_variation(self, p: float) -> float:
        """∫ |(h'^{p-1})'| dt sobre la zona de transición; vale 2(1+2ε)^{p-1} - 1."""

        def integrand(t: float) -> float:
            slope = float(self._dh_up(t))
            if slope <= 0.0:
                return 0.0
            return (p - 1.0) * slope ** (p - 2.0) * abs(float(self._d2h_up(t)))

        total = 0.0
        for lo, hi in ((self.t1, self.t2), (self.t2, 1.0)):
            value, _ = integrate.quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
            total += value
        return total


def make_smoother(epsilon: float, orientation: Orientation = "upper") -> SmootherH:
    if not 0.0 < epsilon < EPS_MAX:
        raise SmootherRangeError(f"epsilon must lie in (0, {EPS_MAX}) (got {epsilon})")
    smoother = SmootherH(float(epsilon), orientation)
    if not smoother.delta < 1.0:
        raise SmootherRangeError(f"epsilon {epsilon} gives a transition width {smoother.delta:.4f} >= 1")
    return smoother


def apply_smoother(h: SmootherH, f, conductor: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Devuelve ``(h(clip(f)), magnitud del recorte)``."""
    f = np.asarray(f, dtype=float)
    clamp = float(max(0.0, -f.min(), f.max() - 1.0))
    if clamp > 0:
        logger.debug("apply_smoother: clamped field by %.3e", clamp)
    w = np.asarray(h.h(np.clip(f, 0.0, 1.0)), dtype=float)
    if conductor is not None and h.orientation == "upper":
        w[conductor] = 1.0
    return w, clamp


# --- FUNCIONAL DUAL ---

class DualReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    epsilon: float
    dual_value: float
    density: np.ndarray = Field(exclude=True)
    primal_value: float
    ratio: float
    clamp: float


def plap_density(mesh: TriMesh, medium: Medium, f) -> np.ndarray:
    """d_i = [-A_p(f)_i - b_i Ψ_i φ_p(f_i)] / m_i (b = 0 fuera del borde)."""
    f = check_field(mesh, f)
    md = masses(mesh)
    p = medium.p
    flux = -stiffness_action(mesh, p, f) - md.b * medium.psi * signed_power(f, p)
    return flux / md.m


def dual_value(mesh: TriMesh, medium: Medium, f) -> float:
    f = check_field(mesh, f)
    if f.min() < 0.0 or f.max() > 1.0:
        logger.warning("dual_value: field clamped into [0, 1] by %.3e", max(-f.min(), f.max() - 1.0))
        f = np.clip(f, 0.0, 1.0)
    md = masses(mesh)
    p = medium.p
    d = plap_density(mesh, medium, f)
    fp = f ** (p - 1.0)
    bulk = medium.phi * fp
    return float(np.sum(md.m * (np.abs(d - bulk) + bulk)) + np.sum(md.b * medium.psi * fp))


def _ratio(dual: float, primal: float) -> float:
    if primal == 0.0:
        return 1.0 if dual <= DUAL_ZERO else math.inf
    return dual / (2.0 * primal)


def half_law(
    mesh: TriMesh,
    medium: Medium,
    epsilons,
    opts: dispersion.SolveOptions | None = None,
    primal: dispersion.DispersionReport | None = None,
) -> list[DualReport]:
    """Un solve y, para cada ε, el dual de h_ε(f*) frente a 2·H^d."""
    primal = primal or dispersion.solve(mesh, medium, opts)
    reports = []
    for eps in epsilons:
        w, clamp = apply_smoother(make_smoother(eps, "upper"), primal.minimizer, mesh.conductor_mask)
        dual = dual_value(mesh, medium, w)
        reports.append(DualReport(
            epsilon=float(eps),
            dual_value=dual,
            density=plap_density(mesh, medium, w),
            primal_value=primal.value,
            ratio=_ratio(dual, primal.value),
            clamp=clamp,
        ))
        logger.info("half_law eps=%.4g: ratio %.10g", eps, reports[-1].ratio)
    return reports


def half_law_table(reports: list[DualReport]) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.epsilon, r.primal_value, r.dual_value, r.ratio) for r in reports],
        columns=["epsilon", "primal", "dual", "ratio"],
    )


def level_set_flux(mesh: TriMesh, f, p: float, t: float) -> float:
    """∫_{f=t} |∇f|^{p-1} sobre la polilínea de nivel."""
    f = check_field(mesh, f)
    poly = level_set_segments(mesh, f, t)
    g = tri_gradients(mesh, f)[poly.triangles]
    norms = np.linalg.norm(g, axis=1)
    return float(np.sum(norms ** (p - 1.0) * poly.lengths))

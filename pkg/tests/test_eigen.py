import math

import numpy as np
import pytest
from scipy import optimize, special

from app.services.eigen import (
    EigenOptions,
    dirichlet_eigen,
    rayleigh_quotient,
    recycling_check,
    recycling_table,
    recycling_value,
    robin_eigen,
    symmetrization_check,
)
from app.services.errors import InvalidSpecError, ZeroDenominatorError

# ==========================================
# SUITE DE PRUEBAS: AUTOVALORES Y RECICLAJE
# Objetivo: primer autovalor Robin/Dirichlet, ley de reciclaje y simetrización plana.
# ==========================================

J01_SQUARED = special.jn_zeros(0, 1)[0] ** 2


def _robin_disk_oracle(beta: float) -> float:
    """Raíz de √λ J1(√λ) = β J0(√λ) para el disco unidad."""
    x = optimize.brentq(lambda s: s * special.j1(s) - beta * special.j0(s), 0.5, 2.0, xtol=1e-14)
    return x * x


def test_robin_beta_zero_is_neumann(square1):
    """
    [Edge Case] β = 0: λ = 0 con autofunción constante.
    """
    report = robin_eigen(square1, 2.0, 0.0)
    assert report.lam == 0.0
    assert np.ptp(report.eigenfunction) == 0.0


def test_robin_disk_against_bessel(disk2):
    """
    [Oracle] Disco unidad, p = 2, β = 1: λ cerca de la raíz de √λ J1 = J0.
    """
    report = robin_eigen(disk2, 2.0, 1.0)
    exact = _robin_disk_oracle(1.0)
    assert abs(report.lam - exact) / exact < 0.02, f"λ={report.lam} frente a {exact}"
    assert not report.flagged
    assert np.all(report.eigenfunction > 0)
    assert report.residual <= 1e-10


def test_dirichlet_disk_against_bessel(disk2):
    """
    [Oracle] Disco unidad Dirichlet: λ ≈ j01² y autofunción nula en el borde.
    """
    report = dirichlet_eigen(disk2, 2.0)
    assert abs(report.lam - J01_SQUARED) / J01_SQUARED < 0.03
    assert np.all(report.eigenfunction[disk2.boundary_mask] == 0.0)


def test_lambda_is_rayleigh_quotient(square1):
    """
    [Property] λ coincide con el cociente de Rayleigh de la autofunción.
    """
    report = robin_eigen(square1, 2.0, 1.0)
    q = rayleigh_quotient(square1, 2.0, 1.0, report.eigenfunction)
    assert abs(q - report.lam) <= 1e-10 * report.lam


def test_robin_p3_continuation(square1):
    """
    [Happy Path] p = 3 por continuación desde p = 2 con Newton ampliado.
    """
    report = robin_eigen(square1, 3.0, 1.0)
    assert report.residual <= EigenOptions().tol
    assert report.lam > 0
    q = rayleigh_quotient(square1, 3.0, 1.0, report.eigenfunction)
    assert abs(q - report.lam) <= 1e-8 * report.lam


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_recycling_at_eigenfunction(square1, p):
    """
    [Property] Λ(autofunción) / λ = 1 salvo el residuo de la ecuación.
    """
    (report,) = recycling_check(square1, p, 1.0)
    assert 1.0 - 1e-8 <= report.ratio <= 1.0 + 1e-4, f"ratio={report.ratio}"
    table = recycling_table([report])
    assert list(table.columns) == ["beta", "lambda", "Lambda", "ratio"]


@pytest.mark.parametrize("lam", [0.1, 1.0, 25.0])
def test_recycling_lower_bound_any_lambda(square1, lam):
    """
    [Property] Λ(u) ≥ λ para campos positivos arbitrarios y cualquier λ.
    """
    rng = np.random.default_rng(99)
    for _ in range(10):
        u = 0.05 + rng.random(square1.n_vertices)
        assert recycling_value(square1, 3.0, 1.0, u, lam) >= lam * (1 - 1e-10)


def test_dirichlet_recycling_trend(disk2):
    """
    [Happy Path] Testigo suavizado Dirichlet: ratio ≥ 1 y no crece al reducir ε.
    """
    reports = recycling_check(disk2, 2.0, None, [0.1, 0.05, 0.025])
    ratios = [r.ratio for r in reports]
    assert all(r >= 1.0 - 1e-10 for r in ratios), ratios
    assert ratios[-1] <= ratios[0] + 1e-6, ratios
    assert all(math.isinf(r.beta) for r in reports)


def test_recycling_rejects_bad_fields(square1):
    """
    [Edge Case] Campo negativo, campo nulo y Dirichlet con borde no nulo.
    """
    u = np.ones(square1.n_vertices)
    with pytest.raises(InvalidSpecError):
        recycling_value(square1, 2.0, 1.0, -u, 1.0)
    with pytest.raises(ZeroDenominatorError):
        recycling_value(square1, 2.0, 1.0, 0 * u, 1.0)
    with pytest.raises(InvalidSpecError):
        recycling_value(square1, 2.0, None, u, 1.0)


def test_symmetrization_square_exceeds_disk():
    """
    [Oracle] κ = 0: el cuadrado de área π tiene λ Robin mayor que el disco unidad.
    """
    report = symmetrization_check(p=2.0, beta=1.0, level=1)
    assert report.margin > 0, f"margen {report.margin}"
    assert abs(report.lam_disk_radial - _robin_disk_oracle(1.0)) < 1e-6


def test_invalid_exponent(square1):
    """
    [Edge Case] p ≤ 1 no define un autoproblema.
    """
    with pytest.raises(InvalidSpecError):
        robin_eigen(square1, 1.0, 1.0)


def test_robin_eigenvalue_grows_with_beta_below_dirichlet(square1):
    """
    [Property] λ_β crece con β y queda por debajo del autovalor Dirichlet.
    """
    lams = [robin_eigen(square1, 2.0, beta).lam for beta in (0.1, 1.0, 10.0, 1e3)]
    dirichlet = dirichlet_eigen(square1, 2.0).lam
    assert all(a < b for a, b in zip(lams, lams[1:])), f"No monótono: {lams}"
    assert lams[-1] <= dirichlet * (1 + 1e-10), f"{lams[-1]} > {dirichlet}"

import numpy as np
import pytest

from app.services.assembly import (
    Medium,
    energy,
    gradient,
    hessian,
    masses,
    regularized_energy,
    stiffness_action,
    tri_gradients,
    weighted_stiffness,
)
from app.services.errors import InvalidSpecError, NumericalDegeneracyError

# ==========================================
# SUITE DE PRUEBAS: ENSAMBLADO P1
# Objetivo: masas agrupadas, energía y sus derivadas contra diferencias finitas.
# ==========================================


def _random_field(mesh, seed=0):
    rng = np.random.default_rng(seed)
    return 0.2 + 0.8 * rng.random(mesh.n_vertices)


def test_lumped_masses_partition(condenser1):
    """
    [Property] Σ m = área(M) y Σ b = longitud(∂M); b se anula en vértices interiores.
    """
    md = masses(condenser1)
    assert abs(md.m.sum() - condenser1.area) < 1e-12
    assert abs(md.b.sum() - condenser1.perimeter) < 1e-12
    assert not md.b[~condenser1.boundary_mask].any()


def test_energy_of_constant_field(condenser1):
    """
    [Oracle] Con f ≡ 1 sólo quedan los términos agrupados: Φ·área + Ψ·perímetro.
    """
    medium = Medium.uniform(condenser1, 2.0, phi=3.0, psi=0.5)
    parts = energy(condenser1, medium, np.ones(condenser1.n_vertices))
    assert parts.dirichlet == 0.0
    assert abs(parts.bulk - 3.0 * condenser1.area) < 1e-12
    assert abs(parts.boundary - 0.5 * condenser1.perimeter) < 1e-12
    assert parts.total == parts.dirichlet + parts.bulk + parts.boundary


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_linear_field_dirichlet_energy(square1, p):
    """
    [Oracle] f = x tiene |∇f| = 1, así que Σ|∇f|^p·área = 1 en el cuadrado unidad.
    """
    medium = Medium.uniform(square1, p)
    parts = energy(square1, medium, square1.vertices[:, 0])
    assert abs(parts.dirichlet - 1.0) < 1e-12


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_stiffness_euler_identity(condenser1, p):
    """
    [Property] f·A_p(f) = Σ|∇f|^p·área (homogeneidad de grado p).
    """
    f = _random_field(condenser1)
    medium = Medium.uniform(condenser1, p)
    lhs = float(f @ stiffness_action(condenser1, p, f))
    rhs = energy(condenser1, medium, f).dirichlet
    assert abs(lhs - rhs) <= 1e-12 * rhs


def test_stiffness_action_is_linear_for_p2(condenser1):
    """
    [Property] Para p = 2 la acción coincide con la matriz de rigidez ensamblada.
    """
    f = _random_field(condenser1, seed=3)
    assert np.allclose(stiffness_action(condenser1, 2.0, f), weighted_stiffness(condenser1) @ f, rtol=1e-12, atol=1e-12)


def test_constants_in_stiffness_kernel(condenser1):
    """
    [Property] Las constantes están en el núcleo: Σ_i A_p(f)_i = 0 para cualquier f.
    """
    f = _random_field(condenser1, seed=5)
    action = stiffness_action(condenser1, 3.0, f)
    assert abs(action.sum()) < 1e-10 * np.abs(action).sum()


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_gradient_matches_finite_differences(square1, p):
    """
    [Property] Derivada direccional de la energía frente a diferencias centradas.
    """
    medium = Medium.uniform(square1, p, phi=1.0, psi=2.0)
    rng = np.random.default_rng(11)
    f = _random_field(square1, seed=7)
    v = rng.standard_normal(square1.n_vertices)
    h = 1e-6
    fd = (energy(square1, medium, f + h * v).total - energy(square1, medium, f - h * v).total) / (2 * h)
    exact = float(gradient(square1, medium, f) @ v)
    assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact)), f"FD={fd} exacto={exact}"


def test_hessian_matches_gradient_differences(square1):
    """
    [Property] H·v frente a la diferencia centrada del gradiente (p = 3).
    """
    medium = Medium.uniform(square1, 3.0, phi=1.0, psi=1.0)
    rng = np.random.default_rng(13)
    f = _random_field(square1, seed=17)
    v = rng.standard_normal(square1.n_vertices)
    h = 1e-6
    fd = (gradient(square1, medium, f + h * v) - gradient(square1, medium, f - h * v)) / (2 * h)
    hv = hessian(square1, medium, f) @ v
    assert np.linalg.norm(fd - hv) <= 1e-5 * np.linalg.norm(hv)


def test_regularized_energy_reduces_to_energy(square1):
    """
    [Property] Con ε = 0 la energía regularizada es la energía exacta.
    """
    medium = Medium.uniform(square1, 3.0, phi=1.0, psi=1.0)
    f = _random_field(square1, seed=19)
    assert regularized_energy(square1, medium, f, 0.0) == energy(square1, medium, f).total
    assert regularized_energy(square1, medium, f, 1e-2) > energy(square1, medium, f).total


def test_hessian_needs_regularization_below_two(square1):
    """
    [Edge Case] Para p < 2 sin ε el hessiano no existe: numerical-degeneracy.
    """
    medium = Medium.uniform(square1, 1.5)
    with pytest.raises(NumericalDegeneracyError):
        hessian(square1, medium, _random_field(square1), 0.0)


@pytest.mark.parametrize("p, phi", [(1.0, 0.0), (2.0, -1.0), (2.0, np.nan)])
def test_invalid_medium(square1, p, phi):
    """
    [Edge Case] p ≤ 1 o coeficientes negativos / no finitos → invalid-spec.
    """
    with pytest.raises(InvalidSpecError):
        Medium.uniform(square1, p, phi=phi)


def test_field_length_checked(square1):
    """
    [Edge Case] Un campo con longitud distinta del número de vértices se rechaza.
    """
    with pytest.raises(InvalidSpecError):
        energy(square1, Medium.uniform(square1, 2.0), np.ones(3))


@pytest.mark.parametrize("level", [0.37, 1.0, -2.5])
def test_constant_field_has_exactly_zero_gradient(condenser1, level):
    """
    [Edge Case] Un campo constante no deja residuo de redondeo en ∇f ni en A_p f.
    """
    f = np.full(condenser1.n_vertices, level)
    assert not tri_gradients(condenser1, f).any()
    assert not stiffness_action(condenser1, 3.0, f).any()
    assert energy(condenser1, Medium.uniform(condenser1, 2.0), f).total == 0.0


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_energy_is_convex(condenser1, p):
    """
    [Property] E((f + g)/2) ≤ (E(f) + E(g))/2 sobre pares de campos aleatorios.
    """
    medium = Medium.uniform(condenser1, p, phi=1.0, psi=1.0)
    rng = np.random.default_rng(31)
    for _ in range(20):
        f = rng.normal(size=condenser1.n_vertices)
        g = rng.normal(size=condenser1.n_vertices)
        mid = energy(condenser1, medium, 0.5 * (f + g)).total
        avg = 0.5 * (energy(condenser1, medium, f).total + energy(condenser1, medium, g).total)
        assert mid <= avg * (1 + 1e-12), f"p={p}: {mid} > {avg}"

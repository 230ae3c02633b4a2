import math

import numpy as np
import pytest

from app.db.files import read_field, read_mesh, write_field, write_mesh
from app.services.errors import InvalidSpecError, LevelEmptyError, MeshIOError
from app.services.mesh import ConductorSpec, MeshSpec, TriMesh, generate, level_set_segments, refine

# ==========================================
# SUITE DE PRUEBAS: MALLAS
# Objetivo: generadores, refinamiento 1→4, validación y curvas de nivel.
# ==========================================


def test_square_level0_counts():
    """
    [Happy Path] El cuadrado de nivel 0 es una rejilla 5x5 partida en 32 triángulos.
    """
    mesh = generate(MeshSpec(generator="square", side=1.0))
    assert mesh.n_vertices == 25
    assert len(mesh.triangles) == 32
    assert abs(mesh.area - 1.0) < 1e-14, f"Área inesperada: {mesh.area}"
    assert abs(mesh.perimeter - 4.0) < 1e-14


def test_refine_square_keeps_area(square1):
    """
    [Property] Refinar una malla de aristas rectas conserva el área y cuadruplica los triángulos.
    """
    fine = refine(square1)
    assert len(fine.triangles) == 4 * len(square1.triangles)
    assert fine.n_vertices == square1.n_vertices + len(square1.edges)
    assert abs(fine.area - square1.area) < 1e-13
    assert len(fine.boundary_edges) == 2 * len(square1.boundary_edges)


def test_disk_converges_to_circle(disk2):
    """
    [Property] Los vértices de borde se reproyectan al círculo: área y perímetro tienden a π y 2π.
    """
    radii = np.linalg.norm(disk2.vertices[disk2.boundary_vertices, :2], axis=1)
    assert np.allclose(radii, 1.0, atol=1e-14), "Hay vértices de borde fuera del círculo"
    assert abs(disk2.area - math.pi) / math.pi < 1e-3
    assert abs(disk2.perimeter - 2 * math.pi) / (2 * math.pi) < 1e-3


def test_condenser_conductor_is_interior(condenser1):
    """
    [Happy Path] El conductor del condensador es conexo, no toca el borde y ocupa el disco r < 1.
    """
    assert condenser1.conductor_mask.any()
    assert not (condenser1.conductor_mask & condenser1.boundary_mask).any()
    radii = np.linalg.norm(condenser1.vertices[condenser1.conductor_vertices, :2], axis=1)
    assert radii.max() <= 1.0 + 1e-12
    assert 0.9 * math.pi < condenser1.conductor_area < math.pi


def test_spherical_cap_vertices_on_sphere():
    """
    [Happy Path] El casquete hemisférico vive en la esfera unidad y su borde mide ~2π.
    """
    mesh = generate(MeshSpec(
        generator="spherical_cap", theta_max=math.pi / 2, theta_k=0.5, resolution=2,
        conductor=ConductorSpec(kind="cap"),
    ))
    assert mesh.on_sphere
    assert np.allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0, atol=1e-14)
    assert abs(mesh.perimeter - 2 * math.pi) / (2 * math.pi) < 1e-3
    assert mesh.conductor_mask.any()


def test_annulus_has_two_boundary_loops():
    """
    [Happy Path] La corona tiene borde exterior (etiqueta 1) e interior (etiqueta 2).
    """
    mesh = generate(MeshSpec(generator="annulus", inner_radius=1.0, radius=2.0, resolution=1))
    assert set(np.unique(mesh.boundary_tags)) == {1, 2}
    assert abs(mesh.perimeter - 6 * math.pi) / (6 * math.pi) < 1e-2


def test_conductor_touching_boundary_rejected():
    """
    [Edge Case] Un conductor que toca ∂M se rechaza con invalid-spec.
    """
    # vértices 0, 1, 5, 6: la celda de la esquina inferior izquierda
    spec = MeshSpec(generator="square", side=1.0, conductor=ConductorSpec(kind="vertices", vertices=[0, 1, 5, 6]))
    with pytest.raises(InvalidSpecError):
        generate(spec)


def test_interior_vertex_conductor():
    """
    [Happy Path] Una celda interior marcada por vértices da exactamente dos triángulos de conductor.
    """
    spec = MeshSpec(generator="square", side=1.0, conductor=ConductorSpec(kind="vertices", vertices=[6, 7, 11, 12]))
    mesh = generate(spec)
    assert int(mesh.region.sum()) == 2
    assert abs(mesh.conductor_area - 1.0 / 16) < 1e-14


@pytest.mark.parametrize("spec", [
    MeshSpec(generator="disk", radius=2.0, conductor=ConductorSpec(kind="disk", radius=3.0)),
    MeshSpec(generator="annulus", inner_radius=2.0, radius=1.0),
    MeshSpec(generator="square", side=-1.0),
    MeshSpec(generator="spherical_cap", theta_max=4.0),
    MeshSpec(generator="square", side=1.0, conductor=ConductorSpec(kind="cap", radius=0.1)),
])
def test_invalid_generator_parameters(spec):
    """
    [Edge Case] Parámetros imposibles del generador → invalid-spec.
    """
    with pytest.raises(InvalidSpecError):
        generate(spec)


def test_inconsistent_orientation_rejected():
    """
    [Edge Case] Dos triángulos que recorren la misma arista en el mismo sentido.
    """
    vertices = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, -1, 0]], dtype=float)
    triangles = np.array([[0, 1, 2], [0, 1, 3]])
    with pytest.raises(InvalidSpecError):
        TriMesh(vertices, triangles, np.empty((0, 2)), np.empty(0), np.zeros(2))


def test_level_set_of_linear_field(square1):
    """
    [Oracle] La curva {x = 0.3} atraviesa el cuadrado unidad con longitud 1.
    """
    f = square1.vertices[:, 0]
    poly = level_set_segments(square1, f, 0.3)
    assert abs(poly.total_length - 1.0) < 1e-12, f"Longitud de nivel: {poly.total_length}"


def test_level_set_outside_range(square1):
    """
    [Edge Case] Un nivel fuera del rango abierto del campo es level-empty.
    """
    with pytest.raises(LevelEmptyError):
        level_set_segments(square1, square1.vertices[:, 0], 2.0)


def test_mesh_file_roundtrip(tmp_path, condenser1):
    """
    [Integration Test] Escritura y lectura del formato de texto conservan geometría y regiones.
    """
    path = tmp_path / "condenser.mesh"
    write_mesh(condenser1, path)
    back = read_mesh(path)
    assert np.array_equal(back.triangles, condenser1.triangles)
    assert np.array_equal(back.region, condenser1.region)
    assert np.allclose(back.vertices, condenser1.vertices, rtol=0, atol=0)

    field = np.linspace(0.0, 1.0, condenser1.n_vertices)
    write_field(field, tmp_path / "f.txt")
    assert np.array_equal(read_field(tmp_path / "f.txt", condenser1.n_vertices), field)


def test_malformed_mesh_file(tmp_path):
    """
    [Edge Case] Un fichero truncado produce mesh-io, no un error genérico.
    """
    path = tmp_path / "broken.mesh"
    path.write_text("3 1 3\n0 0 0\n1 0 0\n", encoding="utf-8")
    with pytest.raises(MeshIOError):
        read_mesh(path)

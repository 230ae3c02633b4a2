"""
Superficies trianguladas con borde: generación estructurada, refinamiento
uniforme 1→4, etiquetado del conductor y curvas de nivel de campos P1.

Convenciones:
- ``vertices`` es (nv, 3); las mallas planas tienen z = 0.
- ``region`` vale 1 en los triángulos del conductor K y 0 en el aislante.
- ``curves`` asocia una etiqueta de borde con el radio del círculo que
  aproxima (radio euclídeo alrededor del origen, o ángulo polar en la esfera).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from app.services.errors import InvalidSpecError, LevelEmptyError

logger = logging.getLogger(__name__)

# Espaciado radial del nivel 0 en fracciones del radio exterior (4 anillos).
BASE_RINGS = 4


# --- ESPECIFICACIÓN DE MALLAS (DTOs) ---

class ConductorSpec(BaseModel):
    """Descriptor del conductor K (conjunto de triángulos completos)."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["none", "disk", "cap", "vertices", "whole"] = "none"
    radius: float | None = None  # radio del disco o ángulo del casquete
    vertices: list[int] | None = None  # índices de la malla de nivel 0


class MeshSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    generator: Literal["disk", "annulus", "square", "square_with_hole", "spherical_cap"]
    radius: float | None = None        # disk(R), annulus(r0, R)
    inner_radius: float | None = None  # annulus(r0, R)
    side: float | None = None          # square, square_with_hole
    hole_radius: float | None = None   # square_with_hole
    theta_max: float | None = None     # spherical_cap
    theta_k: float | None = None       # atajo para conductor "cap"
    resolution: int = 0
    conductor: ConductorSpec = ConductorSpec()


# --- TIPOS DEL DOMINIO ---

@dataclass(frozen=True, eq=False)
class LevelPolyline:
    """Segmentos de {f = t}: extremos, longitudes y triángulo de origen."""

    p1: np.ndarray
    p2: np.ndarray
    lengths: np.ndarray
    triangles: np.ndarray

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    region: np.ndarray
    curves: tuple[tuple[int, float], ...] = ()
    interface_radius: float | None = None
    on_sphere: bool = False

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "triangles", np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "boundary_edges", np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "boundary_tags", np.ascontiguousarray(self.boundary_tags, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "region", np.ascontiguousarray(self.region, dtype=np.int8).reshape(-1))
        self._validate()

    # --- VALIDACIÓN DE INVARIANTES ---

    def _validate(self) -> None:
        nv, nt = len(self.vertices), len(self.triangles)
        if nt == 0:
            raise InvalidSpecError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= nv:
            raise InvalidSpecError("triangle index out of range")
        if len(self.region) != nt or not np.isin(self.region, (0, 1)).all():
            raise InvalidSpecError("region must hold one label in {0, 1} per triangle")
        if len(self.boundary_tags) != len(self.boundary_edges):
            raise InvalidSpecError("one tag per boundary edge is required")

        bad = np.flatnonzero(self.areas <= 0.0)
        if bad.size:
            raise InvalidSpecError(f"{bad.size} triangles with nonpositive area (first: {int(bad[0])})")

        counts = np.bincount(self._edge_inverse.ravel())
        if counts.max() > 2:
            raise InvalidSpecError("edge shared by more than two triangles")
        directed = self._directed_codes
        if np.unique(directed).size != directed.size:
            raise InvalidSpecError("inconsistent triangle orientation")

        topo = self.edges[counts == 1]
        given = np.unique(np.sort(self.boundary_edges, axis=1), axis=0) if len(self.boundary_edges) else np.empty((0, 2), dtype=np.int64)
        if len(given) != len(self.boundary_edges) or not np.array_equal(topo, given):
            raise InvalidSpecError("boundary_edges differ from the edges incident to exactly one triangle")

        if self.region.any() and self._conductor_components() != 1:
            raise InvalidSpecError("conductor region is not edge-connected")

    def _conductor_components(self) -> int:
        cond = np.flatnonzero(self.region == 1)
        a, b = self.triangle_pairs
        keep = (self.region[a] == 1) & (self.region[b] == 1)
        local = np.full(len(self.triangles), -1)
        local[cond] = np.arange(cond.size)
        graph = sparse.coo_matrix(
            (np.ones(int(keep.sum())), (local[a[keep]], local[b[keep]])),
            shape=(cond.size, cond.size),
        )
        n_comp, _ = connected_components(graph, directed=False)
        return int(n_comp)

    # --- TOPOLOGÍA ---

    @cached_property
    def _local_edges(self) -> np.ndarray:
        """(nt, 3, 2): aristas (0,1), (1,2), (2,0) de cada triángulo."""
        t = self.triangles
        return np.stack([t, t[:, [1, 2, 0]]], axis=-1)

    @cached_property
    def _directed_codes(self) -> np.ndarray:
        e = self._local_edges.reshape(-1, 2)
        return e[:, 0] * len(self.vertices) + e[:, 1]

    @cached_property
    def _edge_codes(self) -> tuple[np.ndarray, np.ndarray]:
        key = np.sort(self._local_edges, axis=-1).reshape(-1, 2)
        codes = key[:, 0] * len(self.vertices) + key[:, 1]
        uniq, inverse = np.unique(codes, return_inverse=True)
        return uniq, inverse.reshape(-1, 3)

    @property
    def _edge_inverse(self) -> np.ndarray:
        return self._edge_codes[1]

    @cached_property
    def edges(self) -> np.ndarray:
        """Aristas únicas (ne, 2) ordenadas lexicográficamente."""
        uniq = self._edge_codes[0]
        nv = len(self.vertices)
        return np.column_stack([uniq // nv, uniq % nv])

    @cached_property
    def triangle_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Pares de triángulos que comparten una arista interior."""
        inv = self._edge_inverse.ravel()
        owner = np.repeat(np.arange(len(self.triangles)), 3)
        order = np.argsort(inv, kind="stable")
        inv_s, own_s = inv[order], owner[order]
        same = np.flatnonzero(inv_s[1:] == inv_s[:-1])
        return own_s[same], own_s[same + 1]

    # --- GEOMETRÍA ---

    @cached_property
    def areas(self) -> np.ndarray:
        v0, v1, v2 = (self.vertices[self.triangles[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)

    @cached_property
    def hat_gradients(self) -> np.ndarray:
        """(nt, 3, 3): gradiente constante de cada función sombrero por triángulo."""
        x0, x1, x2 = (self.vertices[self.triangles[:, k]] for k in range(3))
        n = np.cross(x1 - x0, x2 - x0)
        nn = np.einsum("ij,ij->i", n, n)[:, None]
        g0 = np.cross(n, x2 - x1) / nn
        g1 = np.cross(n, x0 - x2) / nn
        g2 = np.cross(n, x1 - x0) / nn
        return np.stack([g0, g1, g2], axis=1)

    @cached_property
    def boundary_lengths(self) -> np.ndarray:
        a, b = self.boundary_edges[:, 0], self.boundary_edges[:, 1]
        return np.linalg.norm(self.vertices[a] - self.vertices[b], axis=1)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @property
    def perimeter(self) -> float:
        return float(self.boundary_lengths.sum())

    @cached_property
    def diameter(self) -> float:
        span = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.linalg.norm(span))

    @property
    def conductor_area(self) -> float:
        return float(self.areas[self.region == 1].sum())

    @cached_property
    def conductor_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.vertices), dtype=bool)
        mask[self.triangles[self.region == 1].ravel()] = True
        return mask

    @property
    def conductor_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.conductor_mask)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.vertices), dtype=bool)
        mask[self.boundary_edges.ravel()] = True
        return mask

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def with_region(self, region: np.ndarray) -> TriMesh:
        """Copia con otro etiquetado de conductor (misma geometría)."""
        return TriMesh(
            self.vertices, self.triangles, self.boundary_edges, self.boundary_tags,
            region, self.curves, self.interface_radius, self.on_sphere,
        )


# --- PROYECCIONES SOBRE CURVAS ---

def _project(points: np.ndarray, radius: float, on_sphere: bool) -> np.ndarray:
    if on_sphere:
        phi = np.arctan2(points[:, 1], points[:, 0])
        return np.column_stack([
            math.sin(radius) * np.cos(phi),
            math.sin(radius) * np.sin(phi),
            np.full(len(points), math.cos(radius)),
        ])
    out = points.copy()
    rho = np.linalg.norm(points[:, :2], axis=1)
    out[:, :2] *= (radius / rho)[:, None]
    return out


# --- REFINAMIENTO ---

def refine(mesh: TriMesh) -> TriMesh:
    """Divide cada triángulo en 4 por los puntos medios de sus aristas."""
    nv = mesh.n_vertices
    edges = mesh.edges
    inv = mesh._edge_inverse
    uniq = mesh._edge_codes[0]

    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    if mesh.on_sphere:
        mid /= np.linalg.norm(mid, axis=1)[:, None]

    # Aristas de borde: posición en la tabla de aristas únicas
    bkey = np.sort(mesh.boundary_edges, axis=1)
    bpos = np.searchsorted(uniq, bkey[:, 0] * nv + bkey[:, 1])
    for tag, radius in mesh.curves:
        sel = bpos[mesh.boundary_tags == tag]
        if sel.size:
            mid[sel] = _project(mid[sel], radius, mesh.on_sphere)

    if mesh.interface_radius is not None and mesh.region.any():
        flat = inv.ravel()
        hits = np.bincount(flat, minlength=len(edges))
        cond = np.bincount(flat, weights=np.repeat(mesh.region, 3).astype(float), minlength=len(edges))
        sel = np.flatnonzero((hits == 2) & (cond == 1))
        if sel.size:
            mid[sel] = _project(mid[sel], mesh.interface_radius, mesh.on_sphere)

    e01, e12, e20 = (inv[:, k] + nv for k in range(3))
    t = mesh.triangles
    t1 = np.column_stack((t[:, 0], e01, e20))
    t2 = np.column_stack((t[:, 1], e12, e01))
    t3 = np.column_stack((t[:, 2], e20, e12))
    t4 = np.column_stack((e01, e12, e20))
    tnew = np.concatenate((t1, t2, t3, t4), axis=1).reshape(-1, 3)

    bmid = bpos + nv
    bnew = np.column_stack((
        np.column_stack((mesh.boundary_edges[:, 0], bmid)),
        np.column_stack((bmid, mesh.boundary_edges[:, 1])),
    )).reshape(-1, 2)

    return TriMesh(
        vertices=np.vstack((mesh.vertices, mid)),
        triangles=tnew,
        boundary_edges=bnew,
        boundary_tags=np.repeat(mesh.boundary_tags, 2),
        region=np.repeat(mesh.region, 4),
        curves=mesh.curves,
        interface_radius=mesh.interface_radius,
        on_sphere=mesh.on_sphere,
    )


# --- GENERADORES ESTRUCTURADOS (NIVEL 0) ---

def _stitch(inner: np.ndarray, inner_theta: np.ndarray, outer: np.ndarray, outer_theta: np.ndarray) -> list[tuple[int, int, int]]:
    """Une dos anillos concéntricos avanzando por ángulo (orientación CCW)."""
    ni, no = len(inner), len(outer)
    ti = np.append(inner_theta, inner_theta[0] + 2 * math.pi)
    to = np.append(outer_theta, outer_theta[0] + 2 * math.pi)
    tris = []
    i = j = 0
    while i < ni or j < no:
        if j < no and (i >= ni or to[j + 1] <= ti[i + 1]):
            tris.append((inner[i % ni], outer[j % no], outer[(j + 1) % no]))
            j += 1
        else:
            tris.append((inner[i % ni], outer[j % no], inner[(i + 1) % ni]))
            i += 1
    return tris


def _ring_counts(radii: np.ndarray, spacing: np.ndarray) -> np.ndarray:
    return 6 * np.maximum(1, np.rint(radii / spacing)).astype(int)


def _polar_rings(radii: list[float], spacings: list[float], with_center: bool):
    """Vértices (r, θ) por anillo y triángulos entre anillos consecutivos."""
    radii_a = np.asarray(radii)
    counts = _ring_counts(radii_a, np.asarray(spacings))
    coords: list[tuple[float, float]] = []
    rings: list[tuple[np.ndarray, np.ndarray]] = []
    if with_center:
        coords.append((0.0, 0.0))
    for r, n in zip(radii_a, counts):
        theta = 2 * math.pi * np.arange(n) / n
        start = len(coords)
        coords.extend((float(r), float(th)) for th in theta)
        rings.append((np.arange(start, start + n), theta))

    tris: list[tuple[int, int, int]] = []
    ring_of_tri: list[int] = []  # índice del anillo exterior de cada triángulo
    if with_center:
        idx, _ = rings[0]
        for j in range(len(idx)):
            tris.append((0, int(idx[j]), int(idx[(j + 1) % len(idx)])))
            ring_of_tri.append(0)
    for k in range(len(rings) - 1):
        new = _stitch(rings[k][0], rings[k][1], rings[k + 1][0], rings[k + 1][1])
        tris.extend(new)
        ring_of_tri.extend([k + 1] * len(new))
    return np.asarray(coords), rings, np.asarray(tris, dtype=np.int64), np.asarray(ring_of_tri)


def _ring_edges(idx: np.ndarray) -> np.ndarray:
    return np.column_stack((idx, np.roll(idx, -1)))


def _radial_layout(outer: float, conductor: float | None, inner: float = 0.0) -> tuple[list[float], list[float], int]:
    """Radios y espaciados; el radio del conductor (si existe) es un anillo."""
    h0 = outer / BASE_RINGS
    radii, spacings = [], []
    n_core = 0
    start = inner
    if conductor is not None:
        n_core = max(1, round((conductor - inner) / h0))
        hk = (conductor - inner) / n_core
        radii += [inner + hk * k for k in range(1, n_core + 1)]
        spacings += [hk] * n_core
        start = conductor
    nb = max(1, round((outer - start) / h0))
    hb = (outer - start) / nb
    radii += [start + hb * k for k in range(1, nb + 1)]
    spacings += [hb] * nb
    return radii, spacings, n_core


def _disk_like(outer: float, conductor: float | None, on_sphere: bool) -> TriMesh:
    radii, spacings, n_core = _radial_layout(outer, conductor)
    coords, rings, tris, ring_of_tri = _polar_rings(radii, spacings, with_center=True)
    r, th = coords[:, 0], coords[:, 1]
    if on_sphere:
        xyz = np.column_stack((np.sin(r) * np.cos(th), np.sin(r) * np.sin(th), np.cos(r)))
    else:
        xyz = np.column_stack((r * np.cos(th), r * np.sin(th), np.zeros_like(r)))
    region = (ring_of_tri < n_core).astype(np.int8) if conductor is not None else np.zeros(len(tris), dtype=np.int8)
    bnd = _ring_edges(rings[-1][0])
    return TriMesh(
        vertices=xyz, triangles=tris, boundary_edges=bnd,
        boundary_tags=np.ones(len(bnd), dtype=np.int64), region=region,
        curves=((1, outer),), interface_radius=conductor, on_sphere=on_sphere,
    )


def _annulus(inner: float, outer: float) -> TriMesh:
    h0 = outer / BASE_RINGS
    nb = max(1, round((outer - inner) / h0))
    hb = (outer - inner) / nb
    radii = [inner + hb * k for k in range(nb + 1)]
    coords, rings, tris, _ = _polar_rings(radii, [hb] * len(radii), with_center=False)
    r, th = coords[:, 0], coords[:, 1]
    xyz = np.column_stack((r * np.cos(th), r * np.sin(th), np.zeros_like(r)))
    outer_edges = _ring_edges(rings[-1][0])
    inner_edges = _ring_edges(rings[0][0])
    bnd = np.vstack((outer_edges, inner_edges))
    tags = np.concatenate((np.ones(len(outer_edges)), 2 * np.ones(len(inner_edges)))).astype(np.int64)
    return TriMesh(
        vertices=xyz, triangles=tris, boundary_edges=bnd, boundary_tags=tags,
        region=np.zeros(len(tris), dtype=np.int8), curves=((1, outer), (2, inner)),
    )


def _square(side: float, cells: int = BASE_RINGS) -> TriMesh:
    ticks = side * np.arange(cells + 1) / cells
    xx, yy = np.meshgrid(ticks, ticks, indexing="xy")
    xyz = np.column_stack((xx.ravel(), yy.ravel(), np.zeros(xx.size)))
    vid = np.arange(xx.size).reshape(cells + 1, cells + 1)  # vid[fila j, columna i]
    v00, v10 = vid[:-1, :-1].ravel(), vid[:-1, 1:].ravel()
    v01, v11 = vid[1:, :-1].ravel(), vid[1:, 1:].ravel()
    tris = np.concatenate((np.column_stack((v00, v10, v11)), np.column_stack((v00, v11, v01))))
    loop = np.concatenate((vid[0, :-1], vid[:-1, -1], vid[-1, :0:-1], vid[:0:-1, 0]))
    bnd = _ring_edges(loop)
    return TriMesh(
        vertices=xyz, triangles=tris, boundary_edges=bnd,
        boundary_tags=np.ones(len(bnd), dtype=np.int64), region=np.zeros(len(tris), dtype=np.int8),
    )


def _square_with_hole(side: float, hole: float, per_side: int = BASE_RINGS, layers: int = BASE_RINGS) -> TriMesh:
    a = 0.5 * side
    u = np.arange(per_side) / per_side
    outline = np.concatenate((
        np.column_stack((np.full(per_side, a), -a + side * u)),
        np.column_stack((a - side * u, np.full(per_side, a))),
        np.column_stack((np.full(per_side, -a), a - side * u)),
        np.column_stack((-a + side * u, np.full(per_side, -a))),
    ))
    phi = np.arctan2(outline[:, 1], outline[:, 0])
    circle = hole * np.column_stack((np.cos(phi), np.sin(phi)))
    n = len(outline)
    pts = []
    for layer in range(layers + 1):
        s = layer / layers
        pts.append((1 - s) * circle + s * outline)
    xy = np.vstack(pts)
    xyz = np.column_stack((xy, np.zeros(len(xy))))
    def ring(layer: int) -> np.ndarray:
        return layer * n + np.arange(n)

    tris = []
    for layer in range(layers):
        inner, outer = ring(layer), ring(layer + 1)
        for j in range(n):
            jn = (j + 1) % n
            tris.append((inner[j], outer[j], outer[jn]))
            tris.append((inner[j], outer[jn], inner[jn]))
    outer_edges, inner_edges = _ring_edges(ring(layers)), _ring_edges(ring(0))
    bnd = np.vstack((outer_edges, inner_edges))
    tags = np.concatenate((np.ones(n), 2 * np.ones(n))).astype(np.int64)
    return TriMesh(
        vertices=xyz, triangles=np.asarray(tris, dtype=np.int64), boundary_edges=bnd,
        boundary_tags=tags, region=np.zeros(2 * n * layers, dtype=np.int8), curves=((2, hole),),
    )


def _require_positive(spec: MeshSpec, *names: str) -> list[float]:
    values = []
    for name in names:
        value = getattr(spec, name)
        if value is None or not value > 0:
            raise InvalidSpecError(f"{spec.generator}: parameter '{name}' must be positive (got {value})")
        values.append(float(value))
    return values


def _base_mesh(spec: MeshSpec) -> TriMesh:
    cond = spec.conductor
    disk_radius = None
    if cond.kind == "disk":
        if spec.generator != "disk":
            raise InvalidSpecError(f"conductor 'disk' is not available for generator '{spec.generator}'")
        disk_radius = cond.radius
    cap_angle = spec.theta_k if cond.kind in ("none", "cap") else None
    if cond.kind == "cap":
        if spec.generator != "spherical_cap":
            raise InvalidSpecError("conductor 'cap' requires the spherical_cap generator")
        cap_angle = cond.radius if cond.radius is not None else spec.theta_k

    if spec.generator == "disk":
        (R,) = _require_positive(spec, "radius")
        if disk_radius is not None and not 0 < disk_radius < R:
            raise InvalidSpecError(f"conductor radius {disk_radius} must lie strictly inside (0, {R})")
        return _disk_like(R, disk_radius, on_sphere=False)
    if spec.generator == "annulus":
        r0, R = _require_positive(spec, "inner_radius", "radius")
        if r0 >= R:
            raise InvalidSpecError("annulus requires inner_radius < radius")
        return _annulus(r0, R)
    if spec.generator == "square":
        (side,) = _require_positive(spec, "side")
        return _square(side)
    if spec.generator == "square_with_hole":
        side, hole = _require_positive(spec, "side", "hole_radius")
        if hole >= 0.5 * side:
            raise InvalidSpecError("hole_radius must be smaller than side / 2")
        return _square_with_hole(side, hole)
    (theta_max,) = _require_positive(spec, "theta_max")
    if theta_max >= math.pi:
        raise InvalidSpecError("theta_max must be below pi")
    if cap_angle is not None and not 0 < cap_angle < theta_max:
        raise InvalidSpecError(f"cap conductor angle {cap_angle} must lie strictly inside (0, {theta_max})")
    return _disk_like(theta_max, cap_angle, on_sphere=True)


def _tag_vertices(mesh: TriMesh, vertices: list[int] | None) -> TriMesh:
    if not vertices:
        raise InvalidSpecError("conductor 'vertices' needs a nonempty vertex list")
    listed = np.zeros(mesh.n_vertices, dtype=bool)
    ids = np.asarray(vertices, dtype=np.int64)
    if ids.min() < 0 or ids.max() >= mesh.n_vertices:
        raise InvalidSpecError("conductor vertex index out of range")
    listed[ids] = True
    region = listed[mesh.triangles].all(axis=1).astype(np.int8)
    if not region.any():
        raise InvalidSpecError("conductor vertex list contains no whole triangle")
    return mesh.with_region(region)


def generate(spec: MeshSpec) -> TriMesh:
    """Construye la malla de nivel 0 y aplica ``resolution`` refinamientos."""
    if spec.resolution < 0:
        raise InvalidSpecError("resolution must be a nonnegative refinement level")
    mesh = _base_mesh(spec)
    kind = spec.conductor.kind
    if kind == "vertices":
        mesh = _tag_vertices(mesh, spec.conductor.vertices)
    elif kind == "whole":
        mesh = mesh.with_region(np.ones(len(mesh.triangles), dtype=np.int8))

    if kind != "whole" and (mesh.conductor_mask & mesh.boundary_mask).any():
        raise InvalidSpecError("conductor touches the boundary of M")

    for _ in range(spec.resolution):
        mesh = refine(mesh)
    logger.debug(
        "generated %s level %d: nv=%d nt=%d", spec.generator, spec.resolution,
        mesh.n_vertices, len(mesh.triangles),
    )
    return mesh


# --- CURVAS DE NIVEL ---

def level_set_segments(mesh: TriMesh, f: np.ndarray, t: float) -> LevelPolyline:
    """Polilínea {f = t} del interpolante lineal a trozos de ``f``."""
    f = np.asarray(f, dtype=float)
    if f.shape != (mesh.n_vertices,):
        raise InvalidSpecError("nodal field length differs from the vertex count")
    if not f.min() < t < f.max():
        raise LevelEmptyError(f"level {t} outside the open range ({f.min()}, {f.max()})")

    above = f[mesh.triangles] > t
    n_above = above.sum(axis=1)
    crossed = np.flatnonzero((n_above == 1) | (n_above == 2))
    tri = mesh.triangles[crossed]
    above = above[crossed]
    # el vértice aislado queda marcado como True
    flip = n_above[crossed] == 2
    above[flip] = ~above[flip]
    single = np.argmax(above, axis=1)
    rows = np.arange(len(tri))
    g0 = tri[rows, single]
    g1 = tri[rows, (single + 1) % 3]
    g2 = tri[rows, (single + 2) % 3]
    x1 = (t - f[g0]) / (f[g1] - f[g0])
    x2 = (t - f[g0]) / (f[g2] - f[g0])
    v = mesh.vertices
    p1 = (1 - x1)[:, None] * v[g0] + x1[:, None] * v[g1]
    p2 = (1 - x2)[:, None] * v[g0] + x2[:, None] * v[g2]
    lengths = np.linalg.norm(p1 - p2, axis=1)
    keep = lengths > 0
    return LevelPolyline(p1[keep], p2[keep], lengths[keep], crossed[keep])

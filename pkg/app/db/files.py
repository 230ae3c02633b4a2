"""
Formato de texto de mallas y campos nodales.

Malla:
    nv nt nbe
    x y z            (nv líneas)
    i j k region     (nt líneas)
    i j tag          (nbe líneas)

Campo nodal: un real por línea (``%.17g``), uno por vértice.
"""
from __future__ import annotations

import logging
import pathlib

import numpy as np

from app.services.errors import HDError, MeshIOError
from app.services.mesh import TriMesh

logger = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"


def write_mesh(mesh: TriMesh, path: str | pathlib.Path) -> None:
    path = pathlib.Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{mesh.n_vertices} {len(mesh.triangles)} {len(mesh.boundary_edges)}\n")
            np.savetxt(fh, mesh.vertices, fmt=FLOAT_FMT)
            np.savetxt(fh, np.column_stack([mesh.triangles, mesh.region]), fmt="%d")
            np.savetxt(fh, np.column_stack([mesh.boundary_edges, mesh.boundary_tags]), fmt="%d")
    except OSError as exc:
        raise MeshIOError(f"cannot write mesh to {path}: {exc}") from exc


def read_mesh(path: str | pathlib.Path) -> TriMesh:
    path = pathlib.Path(path)
    try:
        lines = [ln.split() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    except OSError as exc:
        raise MeshIOError(f"cannot read mesh file {path}: {exc}") from exc
    try:
        nv, nt, nbe = (int(x) for x in lines[0])
        body = lines[1:]
        if len(body) != nv + nt + nbe:
            raise ValueError(f"expected {nv + nt + nbe} data lines, found {len(body)}")
        vertices = np.array(body[:nv], dtype=float)
        tris = np.array(body[nv:nv + nt], dtype=np.int64).reshape(-1, 4)
        bnd = np.array(body[nv + nt:], dtype=np.int64).reshape(-1, 3)
    except (ValueError, IndexError) as exc:
        raise MeshIOError(f"malformed mesh file {path}: {exc}") from exc
    if vertices.shape != (nv, 3):
        raise MeshIOError(f"malformed mesh file {path}: vertices need three coordinates")
    try:
        return TriMesh(vertices, tris[:, :3], bnd[:, :2], bnd[:, 2], tris[:, 3])
    except HDError as exc:
        raise MeshIOError(f"invalid mesh in {path}: {exc.message}") from exc


def write_field(values: np.ndarray, path: str | pathlib.Path) -> None:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        np.savetxt(fh, np.asarray(values, dtype=float).reshape(-1), fmt=FLOAT_FMT)


def read_field(path: str | pathlib.Path, n_vertices: int | None = None) -> np.ndarray:
    path = pathlib.Path(path)
    try:
        values = np.loadtxt(path, dtype=float, ndmin=1)
    except (OSError, ValueError) as exc:
        raise MeshIOError(f"cannot read nodal field {path}: {exc}") from exc
    if n_vertices is not None and values.shape != (n_vertices,):
        raise MeshIOError(f"nodal field {path} has {values.size} entries, expected {n_vertices}")
    return values

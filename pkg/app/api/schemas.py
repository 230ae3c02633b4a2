from __future__ import annotations

import json
import logging
import pathlib
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.db.files import read_mesh
from app.services.assembly import Medium
from app.services.dispersion import SolveOptions
from app.services.eigen import EigenOptions
from app.services.errors import ConfigParseError, InvalidSpecError
from app.services.mesh import MeshSpec, TriMesh, generate, refine

logger = logging.getLogger(__name__)

Command = Literal[
    "solve", "half-law", "sweep-psi", "sweep-phi", "eigen", "recycle", "model-compare",
    "converge-study", "smoother-check", "dual-bound", "symmetrization",
]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# --- MEDIO (Φ, Ψ) ---

class PhiSpec(_Strict):
    kind: Literal["constant", "radial-step"] = "constant"
    value: float = Field(default=0.0, ge=0)
    # radial-step: Φ = inner dentro de |x| < radius, outer fuera
    radius: float | None = Field(default=None, gt=0)
    inner: float = Field(default=0.0, ge=0)
    outer: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _radius_for_step(self):
        if self.kind == "radial-step" and self.radius is None:
            raise ValueError("radial-step needs 'radius'")
        return self


class PsiSpec(_Strict):
    kind: Literal["constant"] = "constant"
    value: float = Field(default=0.0, ge=0)


class MediumSpec(_Strict):
    p: float = Field(default=2.0, gt=1)
    phi: PhiSpec = PhiSpec()
    psi: PsiSpec = PsiSpec()

    @field_validator("phi", "psi", mode="before")
    @classmethod
    def _bare_number(cls, value):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return {"kind": "constant", "value": value}
        return value


class MeshFile(_Strict):
    path: str


# --- BLOQUES POR ORDEN ---

class HalfLawBlock(_Strict):
    epsilons: list[float] = [0.1, 0.05, 0.025]


class SweepBlock(_Strict):
    exponents: list[int] | None = None


class ModelBlock(_Strict):
    kappa: float
    lam: float
    n: int = Field(default=2, ge=2)
    cutoff: float | None = None
    delta: float | None = Field(default=None, gt=0)
    # distancia d para los radios modelo R_κ (opcional)
    radius_d: float | None = Field(default=None, gt=0)


class EigenBlock(_Strict):
    beta: float | None = 1.0
    dirichlet: bool = False
    epsilons: list[float] = [0.1, 0.05, 0.025]
    samples: int = Field(default=20, ge=0)
    options: EigenOptions = EigenOptions()
    oracle: ModelBlock | None = None


class StudyBlock(_Strict):
    quantity: Literal["solve", "solve-dirichlet", "half-law"] = "solve"
    levels: list[int] = [0, 1, 2, 3]
    # "upper-bound": Σ mΦ + Σ bΨ de la malla de cada nivel (igualdad cuando K = M)
    reference: float | Literal["upper-bound"] | None = None
    epsilon: float = 0.05

    @model_validator(mode="after")
    def _upper_bound_needs_solve(self):
        if self.reference == "upper-bound" and self.quantity == "half-law":
            raise ValueError("reference 'upper-bound' applies to solve quantities only")
        return self


class DualBoundBlock(_Strict):
    samples: int = Field(default=100, ge=1)
    exponents: list[float] = [1.5, 2.0, 3.0]
    meshes: list[MeshSpec] = []


class SmootherBlock(_Strict):
    epsilons: list[float] = [0.02, 0.05, 0.1]
    exponents: list[float] = [1.5, 2.0, 3.0]


class SymmetrizationBlock(_Strict):
    beta: float = 1.0
    p: float = Field(default=2.0, gt=1)
    level: int = Field(default=2, ge=0)


REQUIRED_BLOCKS = {
    "half-law": "half_law",
    "model-compare": "model",
    "converge-study": "study",
    "eigen": "eigen",
    "recycle": "eigen",
}
NEEDS_MESH = {"solve", "half-law", "sweep-psi", "sweep-phi", "eigen", "recycle", "model-compare", "converge-study", "dual-bound"}


class RunConfig(_Strict):
    command: Command
    mesh: MeshSpec | MeshFile | None = None
    medium: MediumSpec = MediumSpec()
    solver: SolveOptions = SolveOptions()
    reference: float | None = None
    half_law: HalfLawBlock | None = None
    sweep: SweepBlock | None = None
    eigen: EigenBlock | None = None
    model: ModelBlock | None = None
    study: StudyBlock | None = None
    dual_bound: DualBoundBlock | None = None
    smoother: SmootherBlock | None = None
    symmetrization: SymmetrizationBlock | None = None
    out: str | None = None
    seed: int = 0

    @model_validator(mode="after")
    def _command_blocks(self):
        block = REQUIRED_BLOCKS.get(self.command)
        if block and getattr(self, block) is None:
            raise ValueError(f"command '{self.command}' needs a '{block}' block")
        if self.command in NEEDS_MESH and self.mesh is None:
            raise ValueError(f"command '{self.command}' needs a 'mesh' block")
        if self.command == "converge-study" and not isinstance(self.mesh, MeshSpec):
            raise ValueError("converge-study needs a generator mesh, not a mesh file")
        return self


# --- CARGA ---

def _describe(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        where = ".".join(str(x) for x in err["loc"]) or "<root>"
        parts.append(f"{where}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigParseError(_describe(exc)) from exc


def load_config(path: str | pathlib.Path) -> RunConfig:
    path = pathlib.Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigParseError(f"{path}: top-level JSON value must be an object")
    config = parse_config(data)
    logger.info("config %s: command %s", path, config.command)
    return config


# --- CONSTRUCCIÓN DE MALLA Y MEDIO ---

def build_mesh(spec: MeshSpec | MeshFile | None, level: int | None = None) -> TriMesh:
    if spec is None:
        raise InvalidSpecError("this command needs a mesh")
    if isinstance(spec, MeshFile):
        mesh = read_mesh(spec.path)
        for _ in range(level or 0):
            mesh = refine(mesh)
        return mesh
    if level is not None:
        spec = spec.model_copy(update={"resolution": level})
    return generate(spec)


def _radial_distance(mesh: TriMesh) -> np.ndarray:
    v = mesh.vertices
    if mesh.on_sphere:
        return np.arccos(np.clip(v[:, 2], -1.0, 1.0))
    return np.hypot(v[:, 0], v[:, 1])


def build_medium(mesh: TriMesh, spec: MediumSpec, p: float | None = None) -> Medium:
    nv = mesh.n_vertices
    if spec.phi.kind == "radial-step":
        phi = np.where(_radial_distance(mesh) < spec.phi.radius, spec.phi.inner, spec.phi.outer)
    else:
        phi = np.full(nv, spec.phi.value)
    return Medium(spec.p if p is None else p, phi, np.full(nv, spec.psi.value))

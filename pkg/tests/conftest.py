import os
import sys

import pytest

# --- CONFIGURACIÓN DEL ENTORNO DE TEST ---
# Insertamos la raíz del proyecto en el path para importar los módulos de la app
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from app.services.mesh import ConductorSpec, MeshSpec, generate  # noqa: E402


# --- MALLAS COMPARTIDAS (niveles 0-2, cacheadas por sesión) ---

def condenser_spec(level: int) -> MeshSpec:
    """Disco R = 2 con conductor r0 = 1 (condensador anular)."""
    return MeshSpec(generator="disk", radius=2.0, resolution=level, conductor=ConductorSpec(kind="disk", radius=1.0))


@pytest.fixture(scope="session")
def square1():
    return generate(MeshSpec(generator="square", side=1.0, resolution=1))


@pytest.fixture(scope="session")
def condenser1():
    return generate(condenser_spec(1))


@pytest.fixture(scope="session")
def condenser2():
    return generate(condenser_spec(2))


@pytest.fixture(scope="session")
def disk2():
    return generate(MeshSpec(generator="disk", radius=1.0, resolution=2))

import json
import pathlib

import pytest

from app.api.schemas import build_medium, build_mesh, load_config, parse_config
from app.api.study import convergence_table
from app.main import HANDLERS, main, run
from app.services.errors import ConfigParseError

# ==========================================
# SUITE DE PRUEBAS: CONFIGURACIÓN Y CLI
# Objetivo: diagnósticos de configuración, despacho de órdenes, códigos de
# salida y salidas byte a byte idénticas en modo determinista.
# ==========================================

SMALL_SOLVE = {
    "command": "solve",
    "mesh": {"generator": "disk", "radius": 2.0, "resolution": 0, "conductor": {"kind": "disk", "radius": 1.0}},
    "medium": {"p": 2.0, "phi": 0.0, "psi": 1.0},
}
CONFIG_DIR = pathlib.Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_every_command_has_a_handler():
    """
    [Happy Path] La tabla de despacho cubre todas las órdenes de la configuración.
    """
    assert set(HANDLERS) == {
        "solve", "half-law", "sweep-psi", "sweep-phi", "eigen", "recycle", "model-compare",
        "converge-study", "smoother-check", "dual-bound", "symmetrization",
    }


def test_unknown_key_is_named():
    """
    [Edge Case] Una clave desconocida produce config-parse con la ruta de la clave.
    """
    data = {**SMALL_SOLVE, "medium": {"p": 2.0, "psi": 1.0, "gamma": 3.0}}
    with pytest.raises(ConfigParseError) as exc:
        parse_config(data)
    assert "medium.gamma" in str(exc.value)


def test_missing_command_block():
    """
    [Edge Case] half-law sin bloque 'half_law' se rechaza al cargar.
    """
    with pytest.raises(ConfigParseError) as exc:
        parse_config({**SMALL_SOLVE, "command": "half-law"})
    assert "half_law" in str(exc.value)


def test_exponent_must_exceed_one():
    """
    [Edge Case] p ≤ 1 es un error de configuración, no numérico.
    """
    with pytest.raises(ConfigParseError):
        parse_config({**SMALL_SOLVE, "medium": {"p": 1.0}})


def test_radial_step_medium():
    """
    [Happy Path] Φ escalonado radial: inner dentro del radio, outer fuera; Ψ admite un número.
    """
    config = parse_config({
        **SMALL_SOLVE,
        "medium": {"p": 2.0, "phi": {"kind": "radial-step", "radius": 1.5, "inner": 2.0, "outer": 0.5}, "psi": 3},
    })
    mesh = build_mesh(config.mesh)
    medium = build_medium(mesh, config.medium)
    assert medium.phi[0] == 2.0  # centro del disco
    assert set(medium.phi[mesh.boundary_mask]) == {0.5}
    assert set(medium.psi) == {3.0}


def test_run_returns_bundle():
    """
    [Integration Test] run() despacha a la orden y devuelve un paquete completo.
    """
    bundle = run(parse_config(SMALL_SOLVE))
    assert bundle.command == "solve"
    assert bundle.ok
    assert "minimizer" in bundle.fields
    assert bundle.payload["report"].identity_residual <= 1e-8


def test_command_mismatch_exit_code(tmp_path, capsys):
    """
    [Edge Case] La orden posicional debe coincidir con config.command (estado 2).
    """
    path = _write(tmp_path, SMALL_SOLVE)
    status = main(["eigen", "--config", str(path), "--out", str(tmp_path / "out")])
    assert status == 2
    assert "[config-parse]" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    """
    [Edge Case] Fichero inexistente → config-parse.
    """
    assert main(["solve", "--config", str(tmp_path / "nope.json")]) == 2


def test_invalid_mesh_exit_code(tmp_path, capsys):
    """
    [Edge Case] Conductor fuera del disco: invalid-spec con estado 2.
    """
    data = {**SMALL_SOLVE, "mesh": {"generator": "disk", "radius": 2.0, "conductor": {"kind": "disk", "radius": 3.0}}}
    path = _write(tmp_path, data)
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "out")]) == 2
    assert "[invalid-spec]" in capsys.readouterr().err


def test_model_compare_rejects_step_medium(tmp_path, capsys):
    """
    [Edge Case] El modelo radial sólo admite Φ constante.
    """
    data = {
        **SMALL_SOLVE,
        "command": "model-compare",
        "medium": {"p": 2.0, "phi": {"kind": "radial-step", "radius": 1.5, "inner": 1.0}, "psi": 1.0},
        "model": {"kappa": 0.0, "lam": 1.0, "delta": 0.5},
    }
    path = _write(tmp_path, data)
    assert main(["model-compare", "--config", str(path), "--out", str(tmp_path / "out")]) == 2
    assert "[invalid-spec]" in capsys.readouterr().err


def test_solve_writes_outputs(tmp_path):
    """
    [Integration Test] report.json, minimizer.txt y summary.txt en el directorio de salida.
    """
    path = _write(tmp_path, SMALL_SOLVE)
    out = tmp_path / "out"
    assert main(["solve", "--config", str(path), "--out", str(out), "--deterministic"]) == 0
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["report"]["converged"] is True
    assert "minimizer" not in report["report"]
    assert (out / "minimizer.txt").exists()
    assert (out / "summary.txt").read_text(encoding="utf-8").startswith("HD Lab :: solve")


@pytest.mark.parametrize("data", [
    SMALL_SOLVE,
    {"command": "smoother-check", "smoother": {"epsilons": [0.05], "exponents": [2.0, 3.0]}},
])
def test_deterministic_runs_are_identical(tmp_path, data):
    """
    [Property] Dos ejecuciones --deterministic producen ficheros idénticos byte a byte.
    """
    path = _write(tmp_path, data)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main([data["command"], "--config", str(path), "--out", str(out), "--deterministic"]) == 0
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), f"{name} difiere"


def test_refine_override(tmp_path):
    """
    [Happy Path] --refine fija el nivel de la malla generada.
    """
    path = _write(tmp_path, SMALL_SOLVE)
    out = tmp_path / "out"
    assert main(["solve", "--config", str(path), "--out", str(out), "--refine", "1", "--deterministic"]) == 0
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    coarse = build_mesh(parse_config(SMALL_SOLVE).mesh)
    assert report["mesh"]["n_triangles"] == 4 * len(coarse.triangles)


def test_convergence_table_orders():
    """
    [Oracle] Errores que se dividen por 4 en cada nivel dan orden observado 2.
    """
    table = convergence_table([0, 1, 2], [1.1, 1.025, 1.00625], 1.0)
    assert list(table.columns) == ["level", "value", "error", "order"]
    assert abs(table["order"].iloc[2] - 2.0) < 1e-9
    richardson = convergence_table([0, 1, 2], [1.1, 1.025, 1.00625], None)
    assert abs(richardson["order"].iloc[2] - 2.0) < 1e-9


def test_shipped_configs_cover_every_run():
    """
    [Integration Test] Cada configuración de configs/ se valida y su orden tiene manejador.
    """
    paths = sorted(CONFIG_DIR.glob("*.json"))
    assert paths
    seen = set()
    for path in paths:
        config = load_config(path)
        assert config.command in HANDLERS, path.name
        if config.command == "half-law":
            seen.add((config.medium.p, config.medium.phi.value))
        if config.command == "recycle" and not config.eigen.dirichlet:
            seen.add((config.mesh.generator, config.medium.p))
    expected = {(p, phi) for p in (1.5, 2.0, 3.0) for phi in (0.0, 1.0)}
    expected |= {(g, p) for g in ("disk", "square") for p in (2.0, 3.0)}
    assert expected <= seen, f"faltan: {sorted(expected - seen, key=str)}"


def test_whole_conductor_study_has_zero_error():
    """
    [Oracle] K = M: H^d es Σ mΦ + Σ bΨ de la propia malla, error 0 en cada nivel.
    """
    config = parse_config({
        "command": "converge-study",
        "mesh": {"generator": "disk", "radius": 1.0, "conductor": {"kind": "whole"}},
        "medium": {"p": 2.0, "phi": 1.0, "psi": 1.0},
        "study": {"quantity": "solve", "levels": [0, 1, 2], "reference": "upper-bound"},
    })
    bundle = run(config)
    assert (bundle.tables["study"]["error"] == 0.0).all()
    assert bundle.ok


def test_upper_bound_reference_needs_solve_quantity():
    """
    [Edge Case] La referencia por nivel no tiene sentido para la razón del half-law.
    """
    with pytest.raises(ConfigParseError):
        parse_config({
            "command": "converge-study",
            "mesh": SMALL_SOLVE["mesh"],
            "study": {"quantity": "half-law", "reference": "upper-bound"},
        })


def test_sweep_psi_ok_requires_dirichlet_proximity():
    """
    [Integration Test] sweep-psi sólo es correcto si el mayor Ψ queda a menos del 1 % del valor Dirichlet.
    """
    base = {**SMALL_SOLVE, "command": "sweep-psi", "medium": {"p": 2.0}}
    far = run(parse_config({**base, "sweep": {"exponents": [0]}}))
    near = run(parse_config({**base, "sweep": {"exponents": [0, 3, 6]}}))
    assert not far.ok and not far.payload["near_dirichlet"]
    assert near.ok and near.payload["near_dirichlet"]


def test_recycle_reports_ratio_window():
    """
    [Integration Test] recycle Robin: la razón en la autofunción entra en [1, 1 + 1e-4].
    """
    config = parse_config({
        "command": "recycle",
        "mesh": {"generator": "square", "side": 1.0, "resolution": 1},
        "medium": {"p": 2.0},
        "eigen": {"beta": 1.0, "epsilons": [], "samples": 5},
        "seed": 3,
    })
    bundle = run(config)
    assert bundle.payload["ratio_window_holds"]
    assert bundle.ok

from __future__ import annotations

import argparse
import logging
import pathlib
import sys
from collections.abc import Callable

from app.api import dispersion, eigen, model, study
from app.api.schemas import RunConfig, load_config
from app.db.reports import ReportBundle, write_bundle
from app.services.errors import ConfigParseError, HDError
from app.settings import get_settings

logger = logging.getLogger("app")

# --- 1. RUTAS ---
# Sin --out ni config.out los resultados van a out/<orden>
DEFAULT_OUT = pathlib.Path("out")

Handler = Callable[[RunConfig, "int | None", int], ReportBundle]

# --- 2. TABLA DE ÓRDENES ---
# Cada orden tiene su manejador en app/api; todos devuelven un ReportBundle.
HANDLERS: dict[str, Handler] = {
    "solve": dispersion.run_solve,
    "half-law": dispersion.run_half_law,
    "sweep-psi": dispersion.run_sweep_psi,
    "sweep-phi": dispersion.run_sweep_phi,
    "dual-bound": dispersion.run_dual_bound,
    "smoother-check": dispersion.run_smoother_check,
    "eigen": eigen.run_eigen,
    "recycle": eigen.run_recycle,
    "symmetrization": eigen.run_symmetrization,
    "model-compare": model.run_model_compare,
    "converge-study": study.run_converge_study,
}


def run(config: RunConfig, level: int | None = None, workers: int = 1) -> ReportBundle:
    """Ejecuta una configuración completa y devuelve su paquete de resultados."""
    return HANDLERS[config.command](config, level, workers)


# --- 3. LÍNEA DE ÓRDENES ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hd", description="HD Lab: heat dispersion laboratory on triangulated surfaces.")
    parser.add_argument("command", choices=sorted(HANDLERS), help="pipeline to run (must match config.command)")
    parser.add_argument("--config", required=True, type=pathlib.Path, help="JSON run configuration")
    parser.add_argument("--out", type=pathlib.Path, default=None, help="output directory (default: config.out or out/<command>)")
    parser.add_argument("--refine", type=int, default=None, metavar="L", help="mesh refinement level override")
    parser.add_argument("--deterministic", action="store_true", help="single thread, fixed seeds, reproducible files")
    return parser


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    _configure_logging(settings.log_level)
    deterministic = args.deterministic or settings.deterministic
    workers = 1 if deterministic else settings.threads

    try:
        config = load_config(args.config)
        if config.command != args.command:
            raise ConfigParseError(f"command: CLI asked for '{args.command}' but the config declares '{config.command}'")
        if args.refine is not None and args.refine < 0:
            raise ConfigParseError("--refine must be a nonnegative level")
        bundle = run(config, args.refine, workers)
        out = args.out or (pathlib.Path(config.out) if config.out else DEFAULT_OUT / config.command)
        write_bundle(bundle, out)
    except HDError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return exc.exit_status
    except Exception as exc:  # noqa: BLE001
        logger.exception("unexpected failure")
        print(f"❌ [unexpected] {exc}", file=sys.stderr)
        return 1

    if bundle.ok:
        print(f"✅ {config.command}: results in {out}")
    else:
        print(f"⚠️ {config.command}: finished, but a check failed (see {out / 'summary.txt'})")
    return 0


if __name__ == "__main__":
    sys.exit(main())

from __future__ import annotations


# --- JERARQUÍA DE ERRORES DEL LABORATORIO ---
# Cada clase lleva un código estable (aparece en el diagnóstico de la CLI)
# y el estado de salida del proceso, igual que un HTTPException lleva su status.

class HDError(Exception):
    """Error base de todos los módulos numéricos y de E/S."""

    code = "hd-error"
    exit_status = 4

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


class InvalidSpecError(HDError):
    code = "invalid-spec"
    exit_status = 2


class ConfigParseError(HDError):
    code = "config-parse"
    exit_status = 2


class MeshIOError(HDError):
    code = "mesh-io"
    exit_status = 3


class LevelEmptyError(HDError):
    code = "level-empty"


class NumericalDegeneracyError(HDError):
    code = "numerical-degeneracy"


class NoConvergenceError(HDError):
    code = "no-convergence"


class IndefiniteQuotientError(HDError):
    code = "indefinite-quotient"


class ZeroDenominatorError(HDError):
    code = "zero-denominator"


class SmootherRangeError(HDError):
    code = "epsilon-out-of-range"


class RootNotBracketedError(HDError):
    code = "root-not-bracketed"


class AmbiguousCaseError(HDError):
    code = "ambiguous-case"


class MissingCutoffError(HDError):
    code = "missing-cutoff"


class BoundaryMeasureMismatchError(HDError):
    code = "boundary-measure-mismatch"

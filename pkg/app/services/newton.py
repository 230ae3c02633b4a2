"""Newton amortiguado con búsqueda lineal de Armijo sobre los grados de libertad libres."""
from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from app.services.errors import NumericalDegeneracyError

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MIN_STEP = 1e-12
# holgura de redondeo en la comparación de energías
ROUNDOFF_SLACK = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class NewtonResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual: float


def solve_sparse(mat: sparse.spmatrix, rhs: np.ndarray) -> np.ndarray:
    sol = spsolve(sparse.csc_matrix(mat), rhs)
    sol = np.atleast_1d(sol)
    if not np.isfinite(sol).all():
        raise NumericalDegeneracyError("singular or ill-conditioned Newton system")
    return sol


def restrict(mat: sparse.spmatrix, idx: np.ndarray) -> sparse.csr_matrix:
    return sparse.csr_matrix(mat)[idx][:, idx]


def minimize(
    x0: np.ndarray,
    free: np.ndarray,
    energy: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    hess: Callable[[np.ndarray], sparse.spmatrix],
    scale: Callable[[np.ndarray], float],
    tol: float,
    max_iter: int,
    label: str = "newton",
) -> NewtonResult:
    """
    Minimiza ``energy`` variando sólo las entradas ``free`` de ``x0``.

    El criterio de parada es ``‖grad_free‖ / scale(x) ≤ tol``. Si la dirección
    de Newton no es de descenso se toma el gradiente negativo.
    """
    x = np.array(x0, dtype=float)
    idx = np.flatnonzero(free)
    if idx.size == 0:
        return NewtonResult(x, 0, True, 0.0)

    residual = np.inf
    for it in range(max_iter + 1):
        g = grad(x)[idx]
        ref = scale(x)
        gnorm = float(np.linalg.norm(g))
        residual = gnorm / ref if ref > 0 else gnorm
        logger.debug("%s it=%d residual=%.3e", label, it, residual)
        if residual <= tol:
            return NewtonResult(x, it, True, residual)
        if it == max_iter:
            break

        step = solve_sparse(restrict(hess(x), idx), -g)
        slope = float(g @ step)
        if not slope < 0:
            step, slope = -g, -gnorm * gnorm

        e0 = energy(x)
        t = 1.0
        while True:
            trial = x.copy()
            trial[idx] += t * step
            e1 = energy(trial)
            if np.isfinite(e1) and e1 <= e0 + ARMIJO_C * t * slope + ROUNDOFF_SLACK * abs(e0):
                break
            t *= 0.5
            if t < MIN_STEP:
                logger.warning("%s: line search stalled at residual %.3e", label, residual)
                return NewtonResult(x, it, False, residual)
        x = trial

    return NewtonResult(x, max_iter, False, residual)

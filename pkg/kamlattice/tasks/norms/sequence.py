import logging
from typing import TypeVar

import numpy as np
from scipy.linalg import svdvals

from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.norms.types import LatticeOperator

logger = logging.getLogger(__name__)

Majorizable = TypeVar("Majorizable", HamiltonianPoly, LatticeOperator, np.ndarray)


def default_weights(n: int) -> np.ndarray:
    """Weights ``|j| = 1..n`` of a one-dimensional lattice of positive modes."""
    return np.arange(1, n + 1, dtype=float)


def hp_norm(z: np.ndarray, p: float, weights: np.ndarray | None = None) -> float:
    """
    ``‖z‖_p = sqrt(Σ_j |z_j|² |j|^{2p})`` with the convention ``|j| = 1`` at ``j = 0``.

    Leading axes of ``z`` are treated as a batch; the norm is taken along the last axis.
    """
    z = np.asarray(z)
    w = default_weights(z.shape[-1]) if weights is None else np.maximum(np.asarray(weights, dtype=float), 1.0)
    return np.sqrt(np.sum(np.abs(z) ** 2 * w ** (2 * p), axis=-1))


def majorant(obj: Majorizable) -> Majorizable:
    """Coefficientwise (polynomials) or entrywise (vectors, operators) absolute value."""
    if isinstance(obj, HamiltonianPoly):
        return obj.majorant()
    if isinstance(obj, LatticeOperator):
        return obj.majorant()
    return np.abs(np.asarray(obj))


def op_norm(
    A: LatticeOperator | np.ndarray,
    p_in: float,
    q_out: float,
    row_weights: np.ndarray | None = None,
    col_weights: np.ndarray | None = None,
) -> float:
    """
    Induced norm ``‖A‖_{h_p → h_q}``: the spectral norm of ``diag(|i|^q) A diag(|j|^{−p})``.

    Args:
        A: Operator (weights taken from it) or plain matrix (weights given or ``1..n``).
        p_in: Exponent of the domain space.
        q_out: Exponent of the target space.
    """
    if isinstance(A, LatticeOperator):
        entries, rw, cw = A.entries, A.row_weights, A.col_weights
    else:
        entries = np.asarray(A)
        rw = default_weights(entries.shape[0]) if row_weights is None else np.asarray(row_weights, dtype=float)
        cw = rw if col_weights is None and entries.shape[0] == entries.shape[1] else (
            default_weights(entries.shape[1]) if col_weights is None else np.asarray(col_weights, dtype=float)
        )
    if entries.size == 0:
        return 0.0
    rw = np.maximum(rw, 1.0)
    cw = np.maximum(cw, 1.0)
    scaled = (rw ** q_out)[:, None] * entries * (cw ** (-p_in))[None, :]
    return float(svdvals(scaled)[0])

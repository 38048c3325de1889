import logging

import numpy as np

from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.algebra.types import PhasePoint

logger = logging.getLogger(__name__)


def hamiltonian_vector_field(H: HamiltonianPoly, point: PhasePoint) -> PhasePoint:
    """
    Evaluate ``X_H = (∂_y H, −∂_x H, −i ∂_z̄ H, i ∂_z H)`` at a phase point (batched along leading axes).

    The field belongs to the symplectic form ``dy∧dx + i Σ dz̄_j∧dz_j``, so ``i ż_j = ∂H/∂z̄_j``.
    """
    grad = H.gradient(point)
    return PhasePoint(grad.y, -grad.x, -1j * grad.zbar, 1j * grad.z)


def real_point(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> PhasePoint:
    """Phase point on the real subspace: ``z̄`` is the complex conjugate of ``z``."""
    z = np.asarray(z, dtype=complex)
    return PhasePoint(np.asarray(x, dtype=float), np.asarray(y, dtype=float), z, np.conj(z))


def finite_difference_field(H: HamiltonianPoly, point: PhasePoint, step: float = 1e-6) -> PhasePoint:
    """
    Central-difference approximation of ``X_H``; used to cross-check :func:`hamiltonian_vector_field`.

    ``z`` and ``z̄`` are perturbed independently, as the polynomial treats them as independent variables.
    """
    parts = [np.array(a, dtype=complex) for a in point]
    grads = []
    for slot in range(4):
        g = np.zeros_like(parts[slot])
        for i in range(parts[slot].shape[-1]):
            plus = [p.copy() for p in parts]
            minus = [p.copy() for p in parts]
            plus[slot][..., i] += step
            minus[slot][..., i] -= step
            g[..., i] = (H.evaluate(PhasePoint(*plus)) - H.evaluate(PhasePoint(*minus))) / (2.0 * step)
        grads.append(g)
    gx, gy, gz, gzb = grads
    return PhasePoint(gy, -gx, -1j * gzb, 1j * gz)

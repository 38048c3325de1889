import logging

import numpy as np

from kamlattice.tasks.algebra.bracket import poisson_bracket
from kamlattice.tasks.algebra.poly import HamiltonianPoly, weighted_degree
from kamlattice.tasks.kam.split import blocks_from_poly, is_low
from kamlattice.tasks.kam.types import LowBlocks

logger = logging.getLogger(__name__)

# a bracket with a low-order generator lowers the weighted degree by at most two
JET_DEGREE = 4


def bracket_corrections(
    F_partial: HamiltonianPoly,
    P_tilde: HamiltonianPoly,
    sites: tuple[int, ...],
    fourier_radius: float | None = None,
) -> LowBlocks:
    """
    Low-order blocks ``R₊`` of ``{P̃, F}`` for a low-order generator ``F``.

    Each block is a partial derivative of ``{P̃, F}`` at ``y = 0, z = z̄ = 0``: ``R₊^y = ∂_y{P̃,F}``,
    ``R₊^z = ∂_z{P̃,F}``, ``R₊^{zz} = ½∂_z²{P̃,F}`` and so on. Only the jet of ``P̃`` of weighted degree
    at most four contributes, so the bracket is formed on that jet alone.

    Args:
        F_partial: Generator of weighted degree at most two (typically ``F^x + ⟨F^z,z⟩ + ⟨F^z̄,z̄⟩``).
        P_tilde: ``R^{(3)} + P``.
        sites: Normal sites indexing the blocks.
        fourier_radius: Largest ``|k|₁`` kept.
    """
    jet = P_tilde.filter(lambda key: weighted_degree(key) <= JET_DEGREE)
    bracket = poisson_bracket(jet, F_partial, max_y_degree=1, max_z_degree=2, fourier_radius=fourier_radius)
    low = bracket.filter(is_low)
    return blocks_from_poly(low, sites)


def frequency_and_operator_update(
    omega: np.ndarray,
    B: np.ndarray,
    blocks: LowBlocks,
    corrections: LowBlocks | None = None,
) -> tuple[np.ndarray, np.ndarray, dict[str, float]]:
    """
    ``ω̃ = ω + R̂^y(0) + R̂₊^y(0)`` and ``B̃ = B + R̂^{zz̄}(0) + R̂₊^{zz̄}(0)``.

    Returns:
        tuple[np.ndarray, np.ndarray, dict[str, float]]: ``ω̃``, ``B̃`` and the sizes of the updates
        (``omega``, ``B``) with the imaginary part discarded from ``ω̃`` (``omega_imag``).
    """
    zero = (0,) * len(omega)
    d_omega = blocks.y[zero].copy()
    d_B = blocks.zzbar[zero].copy()
    if corrections is not None:
        d_omega = d_omega + corrections.y[zero]
        d_B = d_B + corrections.zzbar[zero]
    new_omega = np.asarray(omega, dtype=float) + d_omega.real
    new_B = np.asarray(B, dtype=complex) + d_B
    sizes = {
        "omega": float(np.abs(d_omega).max(initial=0.0)),
        "omega_imag": float(np.abs(d_omega.imag).max(initial=0.0)),
        "B": float(np.linalg.norm(d_B, 2)) if d_B.size else 0.0,
    }
    logger.debug(f"Normal form update: |Δω| = {sizes['omega']:.3e}, ‖ΔB‖ = {sizes['B']:.3e}")
    return new_omega, new_B, sizes

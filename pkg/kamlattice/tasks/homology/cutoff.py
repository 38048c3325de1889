from typing import TypeVar

from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.homology.types import FourierOperatorSeries, FourierVectorSeries

Truncatable = TypeVar("Truncatable", FourierVectorSeries, FourierOperatorSeries, HamiltonianPoly)


def cutoff(f: Truncatable, K: float) -> Truncatable:
    """
    Projection ``Γ_K`` onto the Fourier modes ``|k|₁ ≤ K``.

    Raises:
        ValueError: if ``K`` is not positive.
    """
    if K <= 0:
        raise ValueError(f"Cut-off radius must be positive, got {K}")
    return f.cutoff(K)

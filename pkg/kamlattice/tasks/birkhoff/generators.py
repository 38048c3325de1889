import logging

import numpy as np

from kamlattice.tasks.algebra.bracket import poisson_bracket
from kamlattice.tasks.algebra.poly import HamiltonianPoly, z_degree
from kamlattice.tasks.algebra.types import TermKey, exponent_sites
from kamlattice.tasks.birkhoff.divisors import DEFAULT_FLOOR, cubic_divisor
from kamlattice.tasks.exceptions import ModelDomainError, SmallDivisorError
from kamlattice.tasks.model.bbm import bbm_hamiltonian
from kamlattice.tasks.model.types import CubicCoeffs, Equation, FrequencyModel

logger = logging.getLogger(__name__)


def monomial_divisor(key: TermKey, frequencies: np.ndarray) -> float:
    """``λ·(β − α)``: the factor ``{H₀, m} = i λ·(β − α) m`` of an angle-free monomial."""
    total = 0.0
    for site, power in key.beta:
        total += power * frequencies[site]
    for site, power in key.alpha:
        total -= power * frequencies[site]
    return float(total)


def touches(key: TermKey, sites: set[int]) -> bool:
    return bool(sites.intersection(exponent_sites(key.alpha)) or sites.intersection(exponent_sites(key.beta)))


def is_resonant(key: TermKey) -> bool:
    """``z^α z̄^β`` with ``α = β``: a product of actions ``|z_k|²``."""
    return key.alpha == key.beta


def cancellation_residual(R: HamiltonianPoly, H0: HamiltonianPoly, F: HamiltonianPoly) -> float:
    """Largest coefficient of ``R + {H₀, F}``."""
    return (R + poisson_bracket(H0, F)).max_abs()


def _signed_modes(key: TermKey, model: FrequencyModel) -> tuple[int, ...]:
    modes = []
    for site, power in key.alpha:
        modes += [model.sites[site][0]] * power
    for site, power in key.beta:
        modes += [-model.sites[site][0]] * power
    return tuple(modes)


def third_order_generator(cubic: CubicCoeffs, model: FrequencyModel, floor: float = DEFAULT_FLOOR) -> HamiltonianPoly:
    """
    ``F^{(3)}`` with ``iF_{jkl} = R_{jkl} / (λ_j + λ_k + λ_l)`` for every cubic BBM term, so that
    ``R + {H₀, F^{(3)}} = 0``.

    Raises:
        ModelDomainError: for a model other than BBM.
        SmallDivisorError: listing the signed triples whose divisor is below ``floor``.
    """
    if model.equation is not Equation.BBM:
        raise ModelDomainError(f"Cubic normal form is defined for BBM only, got {model.equation.value}")
    H0, R = bbm_hamiltonian(model, cubic)
    tau = model.tau[0]
    F: dict[TermKey, complex] = {}
    offending = []
    smallest = np.inf
    for key, c in R.items():
        triple = _signed_modes(key, model)
        divisor = cubic_divisor(*triple, tau)
        smallest = min(smallest, abs(divisor))
        if abs(divisor) < floor:
            offending.append(triple)
            continue
        F[key] = -1j * c / divisor
    if offending:
        raise SmallDivisorError(f"{len(offending)} cubic divisors below {floor:.1e}: {offending[:8]}", offending)
    generator = HamiltonianPoly(0, F)
    logger.debug(f"Third-order generator: {len(generator)} terms, smallest divisor {smallest:.3e}")
    return generator


def resonant_table(poly: HamiltonianPoly, n_sites: int, sites: set[int] | None = None) -> np.ndarray:
    """
    Symmetric table ``G`` with ``Σ_{k,l} G_{kl} |z_k|²|z_l|²`` equal to the quartic resonant terms of ``poly``
    (restricted to terms touching ``sites`` when given).
    """
    table = np.zeros((n_sites, n_sites), dtype=complex)
    for key, c in poly.items():
        if z_degree(key) != 4 or not is_resonant(key) or any(key.k):
            continue
        if sites is not None and not touches(key, sites):
            continue
        if len(key.alpha) == 1:
            k = key.alpha[0][0]
            table[k, k] += c
        else:
            (k, _), (l, _) = key.alpha
            table[k, l] += 0.5 * c
            table[l, k] += 0.5 * c
    imag = float(np.abs(table.imag).max(initial=0.0))
    if imag > 1e-12 * max(1.0, float(np.abs(table).max(initial=0.0))):
        logger.warning(f"Resonant quartic table has imaginary part {imag:.3e}")
    return table.real


def fourth_order_reduction(
    R4: HamiltonianPoly,
    model: FrequencyModel,
    J: tuple[int, ...] | None = None,
    floor: float = DEFAULT_FLOOR,
) -> tuple[np.ndarray, HamiltonianPoly, HamiltonianPoly]:
    """
    Split the quartic part ``R⁴`` by its relation to the tangent positions ``J``.

    Resonant terms ``|z_k|²|z_l|²`` touching ``J`` go to ``Ḡ``; the other terms touching ``J`` are removed
    by ``F^{(4)} = iR/(λ·(β−α))``; terms not touching ``J`` are kept as ``Ĝ``.

    Args:
        R4: Polynomial whose quartic part is reduced (other degrees are ignored).
        model: Supplies the frequencies of every site position.
        J: Tangent site positions (default the model's).
        floor: Smallest divisor accepted.

    Returns:
        tuple[np.ndarray, HamiltonianPoly, HamiltonianPoly]: ``Ḡ`` table, ``F^{(4)}`` and ``Ĝ``.

    Raises:
        SmallDivisorError: listing the exponents ``(α, β)`` whose divisor is below ``floor``.
    """
    J = set(model.tangent_indices if J is None else J)
    freqs = model.frequency_array
    quartic = R4.homogeneous(4)
    if len(quartic) != len(R4):
        logger.debug(f"Quartic reduction ignores {len(R4) - len(quartic)} terms of other degrees")
    F: dict[TermKey, complex] = {}
    hat: dict[TermKey, complex] = {}
    offending = []
    smallest = np.inf
    for key, c in quartic.items():
        if not touches(key, J):
            hat[key] = c
        elif is_resonant(key):
            continue
        else:
            divisor = monomial_divisor(key, freqs)
            smallest = min(smallest, abs(divisor))
            if abs(divisor) < floor:
                offending.append((key.alpha, key.beta))
                continue
            F[key] = 1j * c / divisor
    if offending:
        raise SmallDivisorError(f"{len(offending)} quartic divisors below {floor:.1e}: {offending[:8]}", offending)
    G_bar = resonant_table(quartic, model.n_sites, J)
    logger.debug(
        f"Quartic reduction: {len(F)} terms removed (smallest divisor {smallest:.3e}), "
        f"{int(np.count_nonzero(G_bar))} resonant entries, {len(hat)} tangent-free terms"
    )
    return G_bar, HamiltonianPoly(R4.n_angles, F), HamiltonianPoly(R4.n_angles, hat)

import logging
from itertools import product

import numpy as np

from kamlattice.tasks.algebra.poly import HamiltonianPoly, frequency_hamiltonian
from kamlattice.tasks.algebra.types import TermKey, make_exponent
from kamlattice.tasks.exceptions import ConfigurationError, ModelDomainError
from kamlattice.tasks.model.types import CubicCoeffs, Equation, FrequencyModel

logger = logging.getLogger(__name__)


def bbm_normal_frequency(j: int, tau: float) -> float:
    """
    Normal frequency ``λ_j = τj / (1 + τ²j²)`` of the BBM mode ``j``.

    Raises:
        ModelDomainError: for the zero mode, which is excluded from the phase space.
    """
    if j == 0:
        raise ModelDomainError("The zero mode is excluded from the BBM phase space")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return tau * j / (1.0 + tau * tau * j * j)


def bbm_weight(j: int, tau: float, T: float | None = None) -> float:
    """
    Weight ``δ_j = sqrt(τ|j| / (1 + τ²j²))``, so that ``δ_j² = |λ_j|``.

    ``T`` is accepted for symmetry with the cubic table; it must match ``2π/τ`` when given.
    """
    if j == 0:
        raise ModelDomainError("The zero mode is excluded from the BBM phase space")
    if T is not None and not np.isclose(tau * T, 2.0 * np.pi):
        raise ValueError(f"tau={tau} and T={T} are inconsistent (tau must equal 2π/T)")
    return float(np.sqrt(tau * abs(j) / (1.0 + tau * tau * j * j)))


def bbm_cubic_table(radius: int, tau: float, T: float) -> CubicCoeffs:
    """
    Cubic coefficients ``G_{jkl} = δ_j δ_k δ_l / (6√T)`` over all ordered triples of nonzero modes
    with ``j + k + l = 0`` and ``max(|j|, |k|, |l|) ≤ radius``.
    """
    if radius < 2:
        raise ValueError(f"radius must be at least 2, got {radius}")
    delta = {j: bbm_weight(j, tau) for j in range(-radius, radius + 1) if j != 0}
    norm = 6.0 * np.sqrt(T)
    entries = {}
    for j, k in product(delta, repeat=2):
        l = -(j + k)
        if l == 0 or abs(l) > radius:
            continue
        entries[(j, k, l)] = delta[j] * delta[k] * delta[l] / norm
    logger.debug(f"BBM cubic table: {len(entries)} ordered triples up to radius {radius}")
    return CubicCoeffs(radius, entries)


def bbm_model(
    radius: int,
    tau: float,
    tangent_sites: tuple[int, ...],
    param_box: tuple[tuple[float, ...], tuple[float, ...]] | None = None,
) -> FrequencyModel:
    """
    Frequency model of the BBM lattice in paired coordinates ``u_j = z_j`` (``z_{−j} = ū_j``), ``j = 1..radius``.

    The default parameter box spans ±10% around the tangent frequencies.
    """
    if radius < 2:
        raise ValueError(f"radius must be at least 2, got {radius}")
    for j in tangent_sites:
        if j <= 0 or j > radius:
            raise ConfigurationError(f"Tangent site {j} must lie in 1..{radius}")
    sites = tuple((j,) for j in range(1, radius + 1))
    frequencies = tuple(bbm_normal_frequency(j, tau) for j in range(1, radius + 1))
    if param_box is None:
        centre = np.array([bbm_normal_frequency(j, tau) for j in tangent_sites])
        param_box = (tuple(0.9 * centre), tuple(1.1 * centre))
    return FrequencyModel(
        equation=Equation.BBM,
        dim_d=1,
        tau=(tau,),
        period=(2.0 * np.pi / tau,),
        limit_point=0.0,
        kappa=1.0,
        lattice_radius=radius,
        sites=sites,
        frequencies=frequencies,
        tangent_sites=tuple((j,) for j in tangent_sites),
        param_box=param_box,
    )


def _paired(model: FrequencyModel, j: int) -> tuple[int, bool]:
    """Site position of the signed mode ``j`` and whether it enters conjugated."""
    return model.site_index((abs(j),)), j < 0


def bbm_hamiltonian(model: FrequencyModel, cubic: CubicCoeffs) -> tuple[HamiltonianPoly, HamiltonianPoly]:
    """
    BBM Hamiltonian in paired coordinates: ``H₀ = Σ λ_j |u_j|²`` and the cubic part
    ``R = Σ_{j+k+l=0} G_{jkl} z_j z_k z_l`` with ``z_{−j} = ū_j``.

    Returns:
        tuple[HamiltonianPoly, HamiltonianPoly]: ``(H₀, R)`` with no angles.
    """
    all_sites = list(range(model.n_sites))
    H0 = frequency_hamiltonian(0, np.zeros(0), model.frequency_array, all_sites)
    terms: dict[TermKey, complex] = {}
    for triple, value in cubic.entries.items():
        if max(abs(j) for j in triple) > model.lattice_radius:
            continue
        alpha: dict[int, int] = {}
        beta: dict[int, int] = {}
        for j in triple:
            pos, conjugated = _paired(model, j)
            target = beta if conjugated else alpha
            target[pos] = target.get(pos, 0) + 1
        key = TermKey((), (), make_exponent(alpha), make_exponent(beta))
        terms[key] = terms.get(key, 0j) + value
    return H0, HamiltonianPoly(0, terms)


def bbm_cubic_field(model: FrequencyModel, u: np.ndarray) -> np.ndarray:
    """
    ``u̇_j`` of the cubic BBM term for ``j = 1..radius``, computed as a discrete convolution.

    With ``w_k = δ_k z_k`` over signed modes, ``∂R/∂z_{−j} = δ_j (w * w)_j / (2√T)``
    and ``u̇_j = −i ∂R/∂ū_j``.
    """
    tau = model.tau[0]
    T = model.period[0]
    radius = model.lattice_radius
    u = np.asarray(u, dtype=complex)
    modes = np.arange(-radius, radius + 1)
    delta = np.array([bbm_weight(int(j), tau) if j != 0 else 0.0 for j in modes])
    z = np.zeros(2 * radius + 1, dtype=complex)
    z[radius + 1:] = u
    z[:radius] = np.conj(u[::-1])
    w = delta * z
    conv = np.convolve(w, w)
    # conv[i] holds mode i - 2*radius
    positive = conv[2 * radius + 1: 3 * radius + 1]
    return -1j * delta[radius + 1:] * positive / (2.0 * np.sqrt(T))

import logging
from itertools import combinations_with_replacement, permutations, product

import numpy as np
from rich.progress import track

from kamlattice.tasks.algebra.poly import HamiltonianPoly, frequency_hamiltonian
from kamlattice.tasks.exceptions import ConfigurationError
from kamlattice.tasks.model.types import Equation, FrequencyModel, QuarticCoeffs, Site

logger = logging.getLogger(__name__)

# signs of (a, b, c, d) in the eight cosines of the product sin a sin b sin c sin d
_SINE_PRODUCT_TERMS = (
    ((1, -1, -1, 1), 1),
    ((1, -1, 1, -1), 1),
    ((1, -1, -1, -1), -1),
    ((1, -1, 1, 1), -1),
    ((1, 1, -1, 1), -1),
    ((1, 1, 1, -1), -1),
    ((1, 1, -1, -1), 1),
    ((1, 1, 1, 1), 1),
)


def gpc_eigenvalue(site: Site, tau: tuple[float, ...]) -> float:
    """``λ_k = ‖k‖² / (1 + ‖k‖²)`` with ``‖k‖² = Σ τ_i² k_i²``."""
    norm2 = float(sum((t * k) ** 2 for t, k in zip(tau, site)))
    return norm2 / (1.0 + norm2)


def sine_product_integral(a: int, b: int, c: int, d: int, T: float) -> float:
    """
    ``∫_0^T sin(aτx) sin(bτx) sin(cτx) sin(dτx) dx`` with ``τ = 2π/T``, reduced to Kronecker deltas.
    """
    total = 0
    for (sa, sb, sc, sd), weight in _SINE_PRODUCT_TERMS:
        if sa * a + sb * b + sc * c + sd * d == 0:
            total += weight
    return T * total / 8.0


def quartic_coefficient(m: Site, n: Site, l: Site, k: Site, tau: tuple[float, ...], period: tuple[float, ...]) -> float:
    """
    ``C_{mnlk} = (λ_m+λ_n+λ_l+λ_k) / (4 (λ_mλ_nλ_lλ_k)^{1/4}) · ∫_Ω φ_mφ_nφ_lφ_k``.
    """
    integral = 1.0
    for axis in range(len(tau)):
        integral *= sine_product_integral(m[axis], n[axis], l[axis], k[axis], period[axis])
        if integral == 0.0:
            return 0.0
    lams = [gpc_eigenvalue(s, tau) for s in (m, n, l, k)]
    return sum(lams) / (4.0 * np.prod(lams) ** 0.25) * integral


def _selection_rule(m: Site, n: Site, l: Site, k: Site) -> bool:
    for signs in product((1, -1), repeat=3):
        if all(m[a] + signs[0] * n[a] + signs[1] * l[a] + signs[2] * k[a] == 0 for a in range(len(m))):
            return True
    return False


def gpc_model(
    radius: int,
    tau_vec: tuple[float, ...],
    N: int,
    tangent_sites: tuple[Site, ...],
    tangent_threshold: float | None = None,
    param_box: tuple[tuple[float, ...], tuple[float, ...]] | None = None,
) -> tuple[FrequencyModel, QuarticCoeffs]:
    """
    Frequency model and quartic table of the d-dimensional gPC lattice of sine modes.

    Retained sites are ``k ∈ {1..radius}^d`` plus the tangent sites, which must lie beyond the
    threshold ``L`` (default ``10 N``). Normal frequencies are ``√λ_k``, accumulating at ``ϖ = 1``.

    Raises:
        ConfigurationError: if the tangent sites are not ``N`` distinct sites with ``|j| > L``.
    """
    d = len(tau_vec)
    if d < 1:
        raise ValueError("tau_vec must have at least one component")
    if any(not 1.0 < t < 2.0 for t in tau_vec):
        logger.warning(f"tau components outside (1, 2): {tau_vec}")
    L = float(tangent_threshold) if tangent_threshold is not None else 10.0 * N
    tangent = tuple(tuple(int(v) for v in s) for s in tangent_sites)
    if len(tangent) != N or len(set(tangent)) != N:
        raise ConfigurationError(f"Expected {N} distinct tangent sites, got {tangent}")
    for site in tangent:
        if len(site) != d or any(v <= 0 for v in site):
            raise ConfigurationError(f"Tangent site {site} is not a positive {d}-dimensional index")
        if np.sqrt(sum(v * v for v in site)) <= L:
            raise ConfigurationError(f"Tangent site {site} overlaps the normal region |j| <= {L}")

    sites = list(product(range(1, radius + 1), repeat=d))
    sites += [s for s in tangent if s not in sites]
    sites = tuple(sorted(sites, key=lambda s: (sum(v * v for v in s), s)))
    period = tuple(2.0 * np.pi / t for t in tau_vec)
    frequencies = tuple(float(np.sqrt(gpc_eigenvalue(s, tau_vec))) for s in sites)
    if param_box is None:
        centre = np.array([np.sqrt(gpc_eigenvalue(s, tau_vec)) for s in tangent])
        param_box = (tuple(centre - 0.01), tuple(centre + 0.01))

    model = FrequencyModel(
        equation=Equation.GPC,
        dim_d=d,
        tau=tuple(float(t) for t in tau_vec),
        period=period,
        limit_point=1.0,
        kappa=2.0,
        lattice_radius=radius,
        sites=sites,
        frequencies=frequencies,
        tangent_sites=tangent,
        param_box=param_box,
        tangent_threshold=L,
    )
    return model, gpc_quartic_table(model)


def gpc_quartic_table(model: FrequencyModel) -> QuarticCoeffs:
    """
    Quartic coefficients over sorted quadruples of site positions. Only quadruples passing the
    sign selection rule on every axis are evaluated.
    """
    entries: dict[tuple[int, int, int, int], float] = {}
    n = model.n_sites
    for quad in track(combinations_with_replacement(range(n), 4), description="gPC quartic table", total=_count_quads(n), transient=True):
        m, nn, l, k = (model.sites[i] for i in quad)
        if not _selection_rule(m, nn, l, k):
            continue
        value = quartic_coefficient(m, nn, l, k, model.tau, model.period)
        if value != 0.0:
            entries[quad] = value
    logger.info(f"gPC quartic table: {len(entries)} nonzero sorted quadruples over {n} sites")
    return QuarticCoeffs(entries)


def _count_quads(n: int) -> int:
    return n * (n + 1) * (n + 2) * (n + 3) // 24


def gpc_hamiltonian(model: FrequencyModel, quartic: QuarticCoeffs) -> tuple[HamiltonianPoly, HamiltonianPoly]:
    """
    ``H₀ = Σ √λ_k z_k z̄_k`` and ``G = Σ_{ordered} ¼ C_{mnlk} (z_m+z̄_m)(z_n+z̄_n)(z_l+z̄_l)(z_k+z̄_k)``.
    """
    H0 = frequency_hamiltonian(0, np.zeros(0), model.frequency_array, list(range(model.n_sites)))
    G = HamiltonianPoly(0)
    linear = {
        i: HamiltonianPoly.monomial(0, 1.0, alpha={i: 1}) + HamiltonianPoly.monomial(0, 1.0, beta={i: 1})
        for i in range(model.n_sites)
    }
    for quad, value in quartic.entries.items():
        multiplicity = len(set(permutations(quad)))
        term = linear[quad[0]].product(linear[quad[1]]).product(linear[quad[2]]).product(linear[quad[3]])
        G.iadd(term, 0.25 * value * multiplicity)
    return H0, G

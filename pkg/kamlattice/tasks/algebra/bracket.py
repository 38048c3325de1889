import logging
from collections import defaultdict

from kamlattice.tasks.algebra.poly import HamiltonianPoly, y_degree, z_degree
from kamlattice.tasks.algebra.types import (
    TermKey,
    exponent_add,
    exponent_lower,
    exponent_power,
    multi_add,
    multi_l1,
)

logger = logging.getLogger(__name__)


class _VariableIndex:
    """Terms of a polynomial grouped by the variables they depend on."""

    def __init__(self, poly: HamiltonianPoly):
        self.by_angle: dict[int, list] = defaultdict(list)
        self.by_action: dict[int, list] = defaultdict(list)
        self.by_z: dict[int, list] = defaultdict(list)
        self.by_zbar: dict[int, list] = defaultdict(list)
        for key, c in poly.items():
            entry = (key, c)
            for i, kx in enumerate(key.k):
                if kx:
                    self.by_angle[i].append(entry)
            for i, g in enumerate(key.gamma):
                if g:
                    self.by_action[i].append(entry)
            for site, _ in key.alpha:
                self.by_z[site].append(entry)
            for site, _ in key.beta:
                self.by_zbar[site].append(entry)


def _accumulate(acc: dict, key: TermKey, value: complex):
    acc[key] = acc.get(key, 0j) + value


def _within(degree: int, cap: int | None) -> bool:
    return cap is None or degree <= cap


def poisson_bracket(
    f: HamiltonianPoly,
    g: HamiltonianPoly,
    max_y_degree: int | None = None,
    max_z_degree: int | None = None,
    fourier_radius: float | None = None,
) -> HamiltonianPoly:
    """
    Poisson bracket ``{f, g} = Σ_i (∂_{y_i}f ∂_{x_i}g − ∂_{x_i}f ∂_{y_i}g) + i Σ_j (∂_{z_j}f ∂_{z̄_j}g − ∂_{z̄_j}f ∂_{z_j}g)``.

    Only pairs of monomials sharing a conjugate variable are visited. The optional caps drop
    result terms of higher ``y`` degree, ``z`` degree or Fourier radius before they are formed.

    Args:
        f: Left argument.
        g: Right argument.
        max_y_degree: Largest action degree kept in the result.
        max_z_degree: Largest total normal degree kept in the result.
        fourier_radius: Largest ``|k|₁`` kept in the result.

    Returns:
        HamiltonianPoly: The bracket, canonical (no zero coefficients).
    """
    if f.n_angles != g.n_angles:
        raise ValueError(f"Angle count mismatch: {f.n_angles} vs {g.n_angles}")
    if f.is_zero() or g.is_zero():
        return HamiltonianPoly(f.n_angles)
    index = _VariableIndex(g)
    g_min_y = min(y_degree(key) for key in g)
    g_min_z = min(z_degree(key) for key in g)
    acc: dict[TermKey, complex] = {}

    for fkey, fc in f.items():
        fy = y_degree(fkey)
        fz = z_degree(fkey)
        angle_pairs = _within(fy + g_min_y - 1, max_y_degree) and _within(fz + g_min_z, max_z_degree)
        normal_pairs = _within(fy + g_min_y, max_y_degree) and _within(fz + g_min_z - 2, max_z_degree)
        partners: dict[TermKey, complex] = {}
        if angle_pairs:
            for i, kx in enumerate(fkey.k):
                if kx:
                    partners.update(index.by_action[i])
            for i, gy in enumerate(fkey.gamma):
                if gy:
                    partners.update(index.by_angle[i])
        if normal_pairs:
            for site, _ in fkey.alpha:
                partners.update(index.by_zbar[site])
            for site, _ in fkey.beta:
                partners.update(index.by_z[site])
        if not partners:
            continue

        for gkey, gc in partners.items():
            k = multi_add(fkey.k, gkey.k)
            if fourier_radius is not None and multi_l1(k) > fourier_radius:
                continue
            prod = fc * gc
            ysum = fy + y_degree(gkey)
            zsum = fz + z_degree(gkey)

            # angle/action pairs: result has y-degree ysum - 1 and z-degree zsum
            if (max_y_degree is None or ysum - 1 <= max_y_degree) and (max_z_degree is None or zsum <= max_z_degree):
                gamma = None
                alpha = None
                beta = None
                for i in range(f.n_angles):
                    weight = fkey.gamma[i] * gkey.k[i] - fkey.k[i] * gkey.gamma[i]
                    if weight == 0:
                        continue
                    if gamma is None:
                        gamma = multi_add(fkey.gamma, gkey.gamma)
                        alpha = exponent_add(fkey.alpha, gkey.alpha)
                        beta = exponent_add(fkey.beta, gkey.beta)
                    lowered = list(gamma)
                    lowered[i] -= 1
                    _accumulate(acc, TermKey(k, tuple(lowered), alpha, beta), 1j * weight * prod)

            # normal pairs: result has y-degree ysum and z-degree zsum - 2
            if (max_y_degree is None or ysum <= max_y_degree) and (max_z_degree is None or zsum - 2 <= max_z_degree):
                sites = {s for s, _ in fkey.alpha} | {s for s, _ in fkey.beta}
                gamma = None
                alpha = None
                beta = None
                for site in sites:
                    weight = (
                        exponent_power(fkey.alpha, site) * exponent_power(gkey.beta, site)
                        - exponent_power(fkey.beta, site) * exponent_power(gkey.alpha, site)
                    )
                    if weight == 0:
                        continue
                    if gamma is None:
                        gamma = multi_add(fkey.gamma, gkey.gamma)
                        alpha = exponent_add(fkey.alpha, gkey.alpha)
                        beta = exponent_add(fkey.beta, gkey.beta)
                    key = TermKey(k, gamma, exponent_lower(alpha, site), exponent_lower(beta, site))
                    _accumulate(acc, key, 1j * weight * prod)

    return HamiltonianPoly(f.n_angles, acc)

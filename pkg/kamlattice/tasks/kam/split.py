import logging

import numpy as np

from kamlattice.tasks.algebra.poly import HamiltonianPoly, weighted_degree, y_degree, z_degree
from kamlattice.tasks.algebra.types import TermKey, exponent_degree, make_exponent
from kamlattice.tasks.kam.types import LowBlocks

logger = logging.getLogger(__name__)


def is_low(key: TermKey) -> bool:
    """Terms of weighted degree ``2·deg y + deg z ≤ 2``: the seven low-order blocks."""
    return weighted_degree(key) <= 2


def is_gauge(key: TermKey) -> bool:
    return not any(key.k) and weighted_degree(key) == 0


def is_normal_form_term(key: TermKey) -> bool:
    """Angle-independent terms ``(c, y)`` and ``⟨C z, z̄⟩`` absorbed into ``ω`` and ``B``."""
    if any(key.k) or not is_low(key):
        return False
    return y_degree(key) == 1 or (exponent_degree(key.alpha) == 1 and exponent_degree(key.beta) == 1)


def satisfies_degree_predicate(R3: HamiltonianPoly) -> bool:
    """Every term is ``O(|y|² + |y|‖z‖ + ‖z‖³)``, i.e. has weighted degree at least three."""
    return all(weighted_degree(key) >= 3 for key in R3)


def split_perturbation(R: HamiltonianPoly, drop_gauge: bool = True) -> tuple[HamiltonianPoly, HamiltonianPoly]:
    """
    Split ``R = R2 + R3`` into the low-order blocks and the remainder.

    With ``drop_gauge`` the angle average of ``R^x`` (a constant) is removed from ``R2``; it does not
    affect the dynamics.

    Returns:
        tuple[HamiltonianPoly, HamiltonianPoly]: ``(R2, R3)``.
    """
    R2 = R.filter(lambda key: is_low(key) and not (drop_gauge and is_gauge(key)))
    R3 = R.filter(lambda key: not is_low(key))
    return R2, R3


def _positions(sites: tuple[int, ...]) -> dict[int, int]:
    return {site: i for i, site in enumerate(sites)}


def blocks_from_poly(R2: HamiltonianPoly, sites: tuple[int, ...]) -> LowBlocks:
    """
    Read the seven blocks off a low-order polynomial; terms on sites outside ``sites`` are rejected.
    """
    N = R2.n_angles
    pos = _positions(sites)
    out = LowBlocks.empty(N, len(sites))
    for key, c in R2.items():
        if not is_low(key):
            raise ValueError(f"Term {key} is not of low order")
        k = key.k
        if any(s not in pos for s, _ in key.alpha + key.beta):
            raise ValueError(f"Term {key} involves a site outside the normal sites")
        alpha = [pos[s] for s, p in key.alpha for _ in range(p)]
        beta = [pos[s] for s, p in key.beta for _ in range(p)]
        if y_degree(key) == 1:
            vec = out.y[k].copy()
            vec[key.gamma.index(1)] += c
            out.y[k] = vec
            continue
        match (len(alpha), len(beta)):
            case (0, 0):
                out.x[k] = out.x[k] + c
            case (1, 0):
                vec = out.z[k].copy()
                vec[alpha[0]] += c
                out.z[k] = vec
            case (0, 1):
                vec = out.zbar[k].copy()
                vec[beta[0]] += c
                out.zbar[k] = vec
            case (1, 1):
                mat = out.zzbar[k].copy()
                mat[beta[0], alpha[0]] += c
                out.zzbar[k] = mat
            case (2, 0):
                out.zz[k] = out.zz[k] + _symmetric_entry(len(sites), alpha[0], alpha[1], c)
            case (0, 2):
                out.zbarzbar[k] = out.zbarzbar[k] + _symmetric_entry(len(sites), beta[0], beta[1], c)
    return out


def _symmetric_entry(n: int, i: int, j: int, c: complex) -> np.ndarray:
    mat = np.zeros((n, n), dtype=complex)
    if i == j:
        mat[i, i] = c
    else:
        mat[i, j] = mat[j, i] = 0.5 * c
    return mat


def blocks_to_poly(blocks: LowBlocks, sites: tuple[int, ...], tol: float = 0.0) -> HamiltonianPoly:
    """Inverse of :func:`blocks_from_poly`; entries with modulus at most ``tol`` are skipped."""
    N = blocks.y.n_angles
    zero = (0,) * N
    terms: dict[TermKey, complex] = {}

    def put(key: TermKey, value: complex):
        if abs(value) > tol:
            terms[key] = terms.get(key, 0j) + value

    for k, v in blocks.x.items():
        put(TermKey(k, zero, (), ()), v[0])
    for k, v in blocks.y.items():
        for i, c in enumerate(v):
            gamma = tuple(1 if a == i else 0 for a in range(N))
            put(TermKey(k, gamma, (), ()), c)
    for k, v in blocks.z.items():
        for i, c in enumerate(v):
            put(TermKey(k, zero, ((sites[i], 1),), ()), c)
    for k, v in blocks.zbar.items():
        for i, c in enumerate(v):
            put(TermKey(k, zero, (), ((sites[i], 1),)), c)
    for k, m in blocks.zzbar.items():
        for i, j in zip(*np.nonzero(m)):
            put(TermKey(k, zero, ((sites[j], 1),), ((sites[i], 1),)), m[i, j])
    for name, series in (("alpha", blocks.zz), ("beta", blocks.zbarzbar)):
        for k, m in series.items():
            for i, j in zip(*np.triu_indices(m.shape[0])):
                c = m[i, j] if i == j else m[i, j] + m[j, i]
                exponent = make_exponent([(sites[i], 1), (sites[j], 1)])
                key = TermKey(k, zero, exponent, ()) if name == "alpha" else TermKey(k, zero, (), exponent)
                put(key, c)
    return HamiltonianPoly(N, terms)


def normal_form(omega: np.ndarray, lam: np.ndarray, B: np.ndarray, sites: tuple[int, ...]) -> HamiltonianPoly:
    """``N = (ω, y) + ⟨(Λ + B) z, z̄⟩`` over the normal sites."""
    N = len(omega)
    blocks = LowBlocks.empty(N, len(sites))
    zero = (0,) * N
    blocks.y[zero] = np.asarray(omega, dtype=complex)
    blocks.zzbar[zero] = np.diag(np.asarray(lam, dtype=complex)) + np.asarray(B, dtype=complex)
    return blocks_to_poly(blocks, sites)


def split_summary(R: HamiltonianPoly) -> dict[str, int]:
    """Term counts per block and of the remainder, for logging and traces."""
    counts = {"x": 0, "y": 0, "z": 0, "zbar": 0, "zz": 0, "zzbar": 0, "zbarzbar": 0, "high": 0}
    for key in R:
        if not is_low(key):
            counts["high"] += 1
        elif y_degree(key) == 1:
            counts["y"] += 1
        elif z_degree(key) == 0:
            counts["x"] += 1
        else:
            a, b = exponent_degree(key.alpha), exponent_degree(key.beta)
            counts[{(1, 0): "z", (0, 1): "zbar", (2, 0): "zz", (1, 1): "zzbar", (0, 2): "zbarzbar"}[(a, b)]] += 1
    return counts

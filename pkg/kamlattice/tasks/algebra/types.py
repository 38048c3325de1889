from enum import Enum
from typing import Iterable, Mapping, NamedTuple

import numpy as np


Exponent = tuple[tuple[int, int], ...]
"""
Sparse exponent of the normal variables: sorted ``(site, power)`` pairs with ``power > 0``.

Sites are positions in the model's lattice site list, so the same exponent type
indexes ``z`` and ``z̄`` monomials of every model.
"""

Multi = tuple[int, ...]
"""
Dense integer multi-index over the tangent directions (Fourier index ``k`` or action exponent ``γ``).
"""


class Variable(str, Enum):
    X = "x"
    Y = "y"
    Z = "z"
    ZBAR = "zbar"


class TermKey(NamedTuple):
    """Key of a monomial ``e^{i(k,x)} y^γ z^α z̄^β``."""
    k: Multi
    gamma: Multi
    alpha: Exponent
    beta: Exponent


def make_exponent(powers: Mapping[int, int] | Iterable[tuple[int, int]] | None) -> Exponent:
    """
    Build a canonical exponent from a site->power mapping or an iterable of pairs.
    Pairs sharing a site are merged and zero powers dropped.
    """
    if powers is None:
        return ()
    items = powers.items() if isinstance(powers, Mapping) else powers
    merged: dict[int, int] = {}
    for site, power in items:
        if power < 0:
            raise ValueError(f"Negative power {power} at site {site}")
        merged[int(site)] = merged.get(int(site), 0) + int(power)
    return tuple(sorted((s, p) for s, p in merged.items() if p > 0))


def exponent_add(a: Exponent, b: Exponent) -> Exponent:
    if not a:
        return b
    if not b:
        return a
    merged = dict(a)
    for site, power in b:
        merged[site] = merged.get(site, 0) + power
    return tuple(sorted(merged.items()))


def exponent_lower(a: Exponent, site: int) -> Exponent:
    """Exponent with the power at ``site`` decreased by one (the site must be present)."""
    out = []
    for s, p in a:
        if s == site:
            if p > 1:
                out.append((s, p - 1))
        else:
            out.append((s, p))
    return tuple(out)


def exponent_power(a: Exponent, site: int) -> int:
    for s, p in a:
        if s == site:
            return p
    return 0


def exponent_degree(a: Exponent) -> int:
    return sum(p for _, p in a)


def exponent_sites(a: Exponent) -> tuple[int, ...]:
    return tuple(s for s, _ in a)


def multi_add(a: Multi, b: Multi) -> Multi:
    return tuple(x + y for x, y in zip(a, b))


def multi_l1(a: Multi) -> int:
    return sum(abs(x) for x in a)


class PhasePoint(NamedTuple):
    """
    A point (or a batch of points along leading axes) of the phase space.

    ``x`` and ``y`` have trailing length N, ``z`` and ``zbar`` have trailing length equal to
    the number of lattice sites. ``zbar`` is an independent variable; it is the conjugate
    of ``z`` only on the real subspace.
    """
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    zbar: np.ndarray

import logging
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np

from kamlattice.tasks.algebra.types import (
    Exponent,
    Multi,
    PhasePoint,
    TermKey,
    Variable,
    exponent_add,
    exponent_degree,
    exponent_lower,
    exponent_power,
    make_exponent,
    multi_add,
    multi_l1,
)

logger = logging.getLogger(__name__)


def y_degree(key: TermKey) -> int:
    return sum(key.gamma)


def z_degree(key: TermKey) -> int:
    return exponent_degree(key.alpha) + exponent_degree(key.beta)


def weighted_degree(key: TermKey) -> int:
    """Degree counting ``y`` twice, so that ``|y| ~ r²`` and ``‖z‖ ~ r`` scale alike."""
    return 2 * y_degree(key) + z_degree(key)


class HamiltonianPoly:
    """
    Sparse polynomial in ``(y, z, z̄)`` with trigonometric dependence on the angles ``x``.

    Every term is stored under a :class:`TermKey` ``(k, γ, α, β)`` and represents
    ``c · e^{i(k,x)} · y^γ · z^α · z̄^β``. Zero coefficients are never stored.
    """

    __slots__ = ("n_angles", "terms")

    def __init__(self, n_angles: int, terms: Mapping[TermKey, complex] | None = None):
        if n_angles < 0:
            raise ValueError(f"Invalid number of angles: {n_angles}")
        self.n_angles = n_angles
        self.terms: dict[TermKey, complex] = {}
        if terms:
            for key, coeff in terms.items():
                if len(key.k) != n_angles or len(key.gamma) != n_angles:
                    raise ValueError(f"Term {key} does not match {n_angles} angles")
                if coeff != 0:
                    self.terms[key] = complex(coeff)

    @classmethod
    def zero(cls, n_angles: int) -> "HamiltonianPoly":
        return cls(n_angles)

    @classmethod
    def monomial(
        cls,
        n_angles: int,
        coeff: complex = 1.0,
        k: Iterable[int] | None = None,
        gamma: Iterable[int] | None = None,
        alpha: Mapping[int, int] | Iterable[tuple[int, int]] | None = None,
        beta: Mapping[int, int] | Iterable[tuple[int, int]] | None = None,
    ) -> "HamiltonianPoly":
        key = TermKey(
            tuple(k) if k is not None else (0,) * n_angles,
            tuple(gamma) if gamma is not None else (0,) * n_angles,
            make_exponent(alpha),
            make_exponent(beta),
        )
        return cls(n_angles, {key: coeff})

    @classmethod
    def constant(cls, n_angles: int, value: complex) -> "HamiltonianPoly":
        return cls.monomial(n_angles, value)

    @classmethod
    def coordinate(cls, n_angles: int, variable: Variable, index: int) -> "HamiltonianPoly":
        """
        The polynomial of a single coordinate function ``y_i``, ``z_j`` or ``z̄_j``.
        Angles are not polynomial; use the bracket identities for ``x_i`` instead.
        """
        match variable:
            case Variable.Y:
                gamma = [0] * n_angles
                gamma[index] = 1
                return cls.monomial(n_angles, 1.0, gamma=gamma)
            case Variable.Z:
                return cls.monomial(n_angles, 1.0, alpha={index: 1})
            case Variable.ZBAR:
                return cls.monomial(n_angles, 1.0, beta={index: 1})
            case _:
                raise ValueError(f"Coordinate {variable} is not a polynomial")

    # -- container protocol -------------------------------------------------

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[TermKey]:
        return iter(self.terms)

    def __contains__(self, key: TermKey) -> bool:
        return key in self.terms

    def __getitem__(self, key: TermKey) -> complex:
        return self.terms.get(key, 0j)

    def items(self):
        return self.terms.items()

    def copy(self) -> "HamiltonianPoly":
        out = HamiltonianPoly(self.n_angles)
        out.terms = dict(self.terms)
        return out

    def is_zero(self) -> bool:
        return not self.terms

    def __repr__(self) -> str:
        return f"HamiltonianPoly(n_angles={self.n_angles}, terms={len(self.terms)})"

    # -- linear structure ---------------------------------------------------

    def _check_compatible(self, other: "HamiltonianPoly"):
        if self.n_angles != other.n_angles:
            raise ValueError(f"Angle count mismatch: {self.n_angles} vs {other.n_angles}")

    def iadd(self, other: "HamiltonianPoly", scale: complex = 1.0) -> "HamiltonianPoly":
        """In-place ``self += scale * other``."""
        self._check_compatible(other)
        terms = self.terms
        for key, coeff in other.terms.items():
            value = terms.get(key, 0j) + scale * coeff
            if value == 0:
                terms.pop(key, None)
            else:
                terms[key] = value
        return self

    def __add__(self, other: "HamiltonianPoly") -> "HamiltonianPoly":
        return self.copy().iadd(other)

    def __sub__(self, other: "HamiltonianPoly") -> "HamiltonianPoly":
        return self.copy().iadd(other, -1.0)

    def __neg__(self) -> "HamiltonianPoly":
        return self.scale(-1.0)

    def scale(self, factor: complex) -> "HamiltonianPoly":
        if factor == 0:
            return HamiltonianPoly(self.n_angles)
        out = HamiltonianPoly(self.n_angles)
        out.terms = {key: coeff * factor for key, coeff in self.terms.items()}
        return out

    def __mul__(self, other) -> "HamiltonianPoly":
        if isinstance(other, HamiltonianPoly):
            return self.product(other)
        return self.scale(complex(other))

    def __rmul__(self, other) -> "HamiltonianPoly":
        return self.scale(complex(other))

    def __truediv__(self, other) -> "HamiltonianPoly":
        return self.scale(1.0 / complex(other))

    def product(self, other: "HamiltonianPoly") -> "HamiltonianPoly":
        self._check_compatible(other)
        acc: dict[TermKey, complex] = {}
        for k1, c1 in self.terms.items():
            for k2, c2 in other.terms.items():
                key = TermKey(
                    multi_add(k1.k, k2.k),
                    multi_add(k1.gamma, k2.gamma),
                    exponent_add(k1.alpha, k2.alpha),
                    exponent_add(k1.beta, k2.beta),
                )
                acc[key] = acc.get(key, 0j) + c1 * c2
        return HamiltonianPoly(self.n_angles, acc)

    def power(self, n: int) -> "HamiltonianPoly":
        if n < 0:
            raise ValueError(f"Negative power {n}")
        out = HamiltonianPoly.constant(self.n_angles, 1.0)
        for _ in range(n):
            out = out.product(self)
        return out

    # -- term selection -------------------------------------------------------

    def filter(self, predicate: Callable[[TermKey], bool]) -> "HamiltonianPoly":
        out = HamiltonianPoly(self.n_angles)
        out.terms = {key: c for key, c in self.terms.items() if predicate(key)}
        return out

    def map_coefficients(self, func: Callable[[TermKey, complex], complex]) -> "HamiltonianPoly":
        out = HamiltonianPoly(self.n_angles)
        for key, coeff in self.terms.items():
            value = func(key, coeff)
            if value != 0:
                out.terms[key] = complex(value)
        return out

    def chop(self, tol: float) -> "HamiltonianPoly":
        """Drop coefficients with modulus at most ``tol``."""
        return self.filter(lambda key: abs(self.terms[key]) > tol)

    def cutoff(self, K: float) -> "HamiltonianPoly":
        """Retain the Fourier modes with ``|k|₁ ≤ K``."""
        return self.filter(lambda key: multi_l1(key.k) <= K)

    def truncate(self, max_y_degree: int | None = None, max_z_degree: int | None = None) -> "HamiltonianPoly":
        def keep(key: TermKey) -> bool:
            if max_y_degree is not None and y_degree(key) > max_y_degree:
                return False
            if max_z_degree is not None and z_degree(key) > max_z_degree:
                return False
            return True

        return self.filter(keep)

    def homogeneous(self, z_deg: int) -> "HamiltonianPoly":
        return self.filter(lambda key: z_degree(key) == z_deg)

    # -- derived quantities --------------------------------------------------

    def majorant(self) -> "HamiltonianPoly":
        out = HamiltonianPoly(self.n_angles)
        out.terms = {key: complex(abs(c)) for key, c in self.terms.items()}
        return out

    def conj(self) -> "HamiltonianPoly":
        """
        The polynomial ``R̄(x, y, z̄, z)``: coefficients conjugated, ``k -> -k`` and ``α <-> β``.
        A Hamiltonian is real on the real subspace iff it equals its ``conj``.
        """
        out = HamiltonianPoly(self.n_angles)
        out.terms = {
            TermKey(tuple(-v for v in key.k), key.gamma, key.beta, key.alpha): c.conjugate()
            for key, c in self.terms.items()
        }
        return out

    def reality_defect(self) -> float:
        """Largest coefficientwise violation of ``R̄(x,y,z,z̄) = R(x,y,z̄,z)``."""
        diff = self - self.conj()
        return max((abs(c) for c in diff.terms.values()), default=0.0)

    def max_abs(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def l1(self) -> float:
        return float(sum(abs(c) for c in self.terms.values()))

    def weighted_norm(self, radius: float = 1.0, width: float = 0.0) -> float:
        """
        Majorant value ``Σ |c| e^{|k|s} r^{deg z} (r²)^{deg y}`` on the polydisc of radius ``r``.
        """
        total = 0.0
        for key, c in self.terms.items():
            total += abs(c) * np.exp(width * multi_l1(key.k)) * radius ** weighted_degree(key)
        return float(total)

    def fourier_support(self) -> set[Multi]:
        return {key.k for key in self.terms}

    def fourier_radius(self) -> int:
        return max((multi_l1(key.k) for key in self.terms), default=0)

    def max_y_degree(self) -> int:
        return max((y_degree(key) for key in self.terms), default=0)

    def max_z_degree(self) -> int:
        return max((z_degree(key) for key in self.terms), default=0)

    def sites(self) -> set[int]:
        out: set[int] = set()
        for key in self.terms:
            out.update(s for s, _ in key.alpha)
            out.update(s for s, _ in key.beta)
        return out

    def angle_average(self) -> "HamiltonianPoly":
        zero = (0,) * self.n_angles
        return self.filter(lambda key: key.k == zero)

    # -- calculus ----------------------------------------------------------

    def derivative(self, variable: Variable, index: int) -> "HamiltonianPoly":
        out: dict[TermKey, complex] = {}
        for key, c in self.terms.items():
            match variable:
                case Variable.X:
                    factor = 1j * key.k[index]
                    if factor == 0:
                        continue
                    new_key = key
                case Variable.Y:
                    power = key.gamma[index]
                    if power == 0:
                        continue
                    gamma = list(key.gamma)
                    gamma[index] -= 1
                    factor = power
                    new_key = TermKey(key.k, tuple(gamma), key.alpha, key.beta)
                case Variable.Z:
                    power = exponent_power(key.alpha, index)
                    if power == 0:
                        continue
                    factor = power
                    new_key = TermKey(key.k, key.gamma, exponent_lower(key.alpha, index), key.beta)
                case Variable.ZBAR:
                    power = exponent_power(key.beta, index)
                    if power == 0:
                        continue
                    factor = power
                    new_key = TermKey(key.k, key.gamma, key.alpha, exponent_lower(key.beta, index))
            out[new_key] = out.get(new_key, 0j) + factor * c
        return HamiltonianPoly(self.n_angles, out)

    def evaluate(self, point: PhasePoint) -> np.ndarray | complex:
        """
        Evaluate at a phase point; leading axes of the point arrays are treated as a batch.
        """
        x, y, z, zbar = (np.asarray(a) for a in point)
        batch = np.broadcast_shapes(x.shape[:-1], y.shape[:-1], z.shape[:-1], zbar.shape[:-1])
        total = np.zeros(batch, dtype=complex)
        for key, c in self.terms.items():
            total = total + c * _monomial_value(key, x, y, z, zbar)
        return total if batch else complex(total)

    def gradient(self, point: PhasePoint) -> PhasePoint:
        """
        Partial derivatives ``(∂_x, ∂_y, ∂_z, ∂_z̄)`` at a phase point, arrays shaped like the point.
        """
        x, y, z, zbar = (np.asarray(a) for a in point)
        batch = np.broadcast_shapes(x.shape[:-1], y.shape[:-1], z.shape[:-1], zbar.shape[:-1])
        gx = np.zeros(batch + (x.shape[-1],), dtype=complex)
        gy = np.zeros(batch + (y.shape[-1],), dtype=complex)
        gz = np.zeros(batch + (z.shape[-1],), dtype=complex)
        gzb = np.zeros(batch + (zbar.shape[-1],), dtype=complex)
        for key, c in self.terms.items():
            factors = _monomial_factors(key, y, z, zbar)
            phase = c * np.exp(1j * (x @ np.asarray(key.k, dtype=float))) if any(key.k) else c * np.ones(batch)
            values = [base ** power for _, _, base, power in factors]
            prefix = [np.ones(batch, dtype=complex)]
            for v in values:
                prefix.append(prefix[-1] * v)
            suffix = [np.ones(batch, dtype=complex)]
            for v in reversed(values):
                suffix.append(suffix[-1] * v)
            suffix.reverse()
            full = phase * prefix[-1]
            for i, kx in enumerate(key.k):
                if kx:
                    gx[..., i] += 1j * kx * full
            for pos, (variable, index, base, power) in enumerate(factors):
                partial = phase * prefix[pos] * suffix[pos + 1] * power * base ** (power - 1)
                match variable:
                    case Variable.Y:
                        gy[..., index] += partial
                    case Variable.Z:
                        gz[..., index] += partial
                    case Variable.ZBAR:
                        gzb[..., index] += partial
        return PhasePoint(gx, gy, gz, gzb)

    # -- serialization -------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "n_angles": self.n_angles,
            "terms": [
                {
                    "k": list(key.k),
                    "gamma": list(key.gamma),
                    "alpha": [list(p) for p in key.alpha],
                    "beta": [list(p) for p in key.beta],
                    "coeff": [c.real, c.imag],
                }
                for key, c in sorted(self.terms.items(), key=lambda item: item[0])
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "HamiltonianPoly":
        n_angles = int(data["n_angles"])
        terms = {}
        for term in data["terms"]:
            key = TermKey(
                tuple(term["k"]),
                tuple(term["gamma"]),
                make_exponent(tuple(p) for p in term["alpha"]),
                make_exponent(tuple(p) for p in term["beta"]),
            )
            terms[key] = complex(term["coeff"][0], term["coeff"][1])
        return cls(n_angles, terms)


def _monomial_factors(key: TermKey, y: np.ndarray, z: np.ndarray, zbar: np.ndarray) -> list:
    factors = []
    for i, power in enumerate(key.gamma):
        if power:
            factors.append((Variable.Y, i, y[..., i], power))
    for site, power in key.alpha:
        factors.append((Variable.Z, site, z[..., site], power))
    for site, power in key.beta:
        factors.append((Variable.ZBAR, site, zbar[..., site], power))
    return factors


def _monomial_value(key: TermKey, x: np.ndarray, y: np.ndarray, z: np.ndarray, zbar: np.ndarray):
    value = np.exp(1j * (x @ np.asarray(key.k, dtype=float))) if any(key.k) else 1.0
    for _, _, base, power in _monomial_factors(key, y, z, zbar):
        value = value * base ** power
    return value


def sum_polys(polys: Iterable[HamiltonianPoly], n_angles: int) -> HamiltonianPoly:
    out = HamiltonianPoly(n_angles)
    for p in polys:
        out.iadd(p)
    return out


def quadratic_form(n_angles: int, matrix: np.ndarray, sites: list[int], kind: str) -> HamiltonianPoly:
    """
    Polynomial of a quadratic form over the given sites.

    ``kind`` is ``"zzbar"`` for ``Σ A_ij z̄_i z_j``, ``"zz"`` for ``Σ A_ij z_i z_j`` and
    ``"zbarzbar"`` for ``Σ A_ij z̄_i z̄_j``.
    """
    terms: dict[TermKey, complex] = {}
    zero = (0,) * n_angles
    n = len(sites)
    for i in range(n):
        for j in range(n):
            c = matrix[i, j]
            if c == 0:
                continue
            match kind:
                case "zzbar":
                    key = TermKey(zero, zero, make_exponent({sites[j]: 1}), make_exponent({sites[i]: 1}))
                case "zz":
                    key = TermKey(zero, zero, make_exponent([(sites[i], 1), (sites[j], 1)]), ())
                case "zbarzbar":
                    key = TermKey(zero, zero, (), make_exponent([(sites[i], 1), (sites[j], 1)]))
                case _:
                    raise ValueError(f"Unknown quadratic form kind: {kind}")
            terms[key] = terms.get(key, 0j) + c
    return HamiltonianPoly(n_angles, terms)


def frequency_hamiltonian(n_angles: int, omega: np.ndarray, frequencies: np.ndarray, sites: list[int]) -> HamiltonianPoly:
    """``(ω, y) + Σ_j λ_j z_j z̄_j`` over the given sites."""
    terms: dict[TermKey, complex] = {}
    zero = (0,) * n_angles
    for i, w in enumerate(omega):
        if w != 0:
            gamma = [0] * n_angles
            gamma[i] = 1
            terms[TermKey(zero, tuple(gamma), (), ())] = w
    for site, lam in zip(sites, frequencies):
        if lam != 0:
            terms[TermKey(zero, zero, ((site, 1),), ((site, 1),))] = lam
    return HamiltonianPoly(n_angles, terms)

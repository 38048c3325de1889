import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from kamlattice.tasks.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


Site = tuple[int, ...]
"""Lattice site label: ``(j,)`` for BBM modes, ``(k_1, ..., k_d)`` for gPC sine modes."""


class Equation(str, Enum):
    BBM = "bbm"
    GPC = "gpc"


@dataclass(frozen=True)
class FrequencyModel:
    """
    Frequencies and lattice of a truncated Hamiltonian lattice.

    ``sites`` lists every retained site (tangent sites included), and ``frequencies[i]`` is the
    linear frequency of ``sites[i]``. Normal sites are the retained sites outside
    ``tangent_sites``. Polynomials index the normal variables by position in ``sites``.
    """
    equation: Equation
    dim_d: int
    tau: tuple[float, ...]
    period: tuple[float, ...]
    limit_point: float
    kappa: float
    lattice_radius: int
    sites: tuple[Site, ...]
    frequencies: tuple[float, ...]
    tangent_sites: tuple[Site, ...]
    param_box: tuple[tuple[float, ...], tuple[float, ...]]
    tangent_threshold: float = 0.0
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {site: i for i, site in enumerate(self.sites)})
        if len(self.frequencies) != len(self.sites):
            raise ConfigurationError(f"{len(self.frequencies)} frequencies for {len(self.sites)} sites")
        if len(set(self.tangent_sites)) != len(self.tangent_sites):
            raise ConfigurationError(f"Tangent sites are not pairwise distinct: {self.tangent_sites}")
        for site in self.tangent_sites:
            if site not in self._index:
                raise ConfigurationError(f"Tangent site {site} is outside the retained lattice")
        lower, upper = (np.asarray(c, dtype=float) for c in self.param_box)
        if lower.shape != (self.N,) or upper.shape != (self.N,):
            raise ConfigurationError(f"Parameter box must have {self.N} components, got {lower.shape}, {upper.shape}")
        if np.any(upper <= lower):
            raise ConfigurationError(f"Parameter box has no volume: {self.param_box}")

    @property
    def N(self) -> int:
        return len(self.tangent_sites)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def site_index(self, site: Site) -> int:
        return self._index[tuple(site)]

    @property
    def tangent_indices(self) -> tuple[int, ...]:
        return tuple(self._index[s] for s in self.tangent_sites)

    @property
    def normal_indices(self) -> tuple[int, ...]:
        tangent = set(self.tangent_indices)
        return tuple(i for i in range(self.n_sites) if i not in tangent)

    @property
    def weights(self) -> np.ndarray:
        """``|j|`` per retained site (Euclidean length of the label, at least 1)."""
        labels = np.asarray(self.sites, dtype=float)
        return np.maximum(np.sqrt((labels ** 2).sum(axis=1)), 1.0)

    @property
    def frequency_array(self) -> np.ndarray:
        return np.asarray(self.frequencies, dtype=float)

    @property
    def tangent_frequencies(self) -> np.ndarray:
        return self.frequency_array[list(self.tangent_indices)]

    @property
    def normal_frequencies(self) -> np.ndarray:
        return self.frequency_array[list(self.normal_indices)]

    def decay_fit(self) -> "DecayFit":
        """Fit ``|λ_j − ϖ| ≈ c |j|^{−κ}`` over the normal sites."""
        idx = list(self.normal_indices)
        return fit_decay(self.weights[idx], np.abs(self.frequency_array[idx] - self.limit_point))

    def to_json(self) -> dict:
        return {
            "version": 1,
            "equation": self.equation.value,
            "dim_d": self.dim_d,
            "tau": list(self.tau),
            "period": list(self.period),
            "limit_point": self.limit_point,
            "kappa": self.kappa,
            "lattice_radius": self.lattice_radius,
            "sites": [list(s) for s in self.sites],
            "frequencies": list(self.frequencies),
            "tangent_sites": [list(s) for s in self.tangent_sites],
            "param_box": [list(self.param_box[0]), list(self.param_box[1])],
            "tangent_threshold": self.tangent_threshold,
        }

    @classmethod
    def from_json(cls, data: dict) -> "FrequencyModel":
        return cls(
            equation=Equation(data["equation"]),
            dim_d=int(data["dim_d"]),
            tau=tuple(data["tau"]),
            period=tuple(data["period"]),
            limit_point=float(data["limit_point"]),
            kappa=float(data["kappa"]),
            lattice_radius=int(data["lattice_radius"]),
            sites=tuple(tuple(s) for s in data["sites"]),
            frequencies=tuple(data["frequencies"]),
            tangent_sites=tuple(tuple(s) for s in data["tangent_sites"]),
            param_box=(tuple(data["param_box"][0]), tuple(data["param_box"][1])),
            tangent_threshold=float(data.get("tangent_threshold", 0.0)),
        )


@dataclass
class DecayFit:
    """Least-squares fit of ``log|λ_j − ϖ|`` against ``log|j|`` with the enclosing constants."""
    kappa: float
    c11: float
    c12: float
    points: int

    def to_json(self) -> dict:
        return {"kappa": self.kappa, "c11": self.c11, "c12": self.c12, "points": self.points}


def fit_decay(weights: np.ndarray, deviations: np.ndarray, kappa: float | None = None) -> DecayFit:
    """
    Fit the decay exponent of ``deviations`` against ``weights`` and report ``c₁₁, c₁₂``
    such that ``c₁₁|j|^{−κ} ≤ dev ≤ c₁₂|j|^{−κ}`` on the data.
    """
    mask = deviations > 0
    if mask.sum() < 2:
        raise ValueError("Need at least two nonzero deviations to fit a decay exponent")
    w = weights[mask]
    dev = deviations[mask]
    slope, _ = np.polyfit(np.log(w), np.log(dev), 1)
    fitted = -float(slope)
    used = fitted if kappa is None else kappa
    scaled = dev * w ** used
    return DecayFit(kappa=fitted, c11=float(scaled.min()), c12=float(scaled.max()), points=int(mask.sum()))


@dataclass(frozen=True)
class CubicCoeffs:
    """
    Sparse table ``G_{jkl}`` of the BBM cubic term over ordered zero-sum triples of signed modes.
    Every permutation of a stored triple is stored with the same value.
    """
    radius: int
    entries: dict[tuple[int, int, int], float]

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, triple: tuple[int, int, int]) -> float:
        return self.entries.get(tuple(triple), 0.0)

    def __contains__(self, triple) -> bool:
        return tuple(triple) in self.entries

    def to_json(self) -> dict:
        return {"radius": self.radius, "entries": [[*t, v] for t, v in sorted(self.entries.items())]}

    @classmethod
    def from_json(cls, data: dict) -> "CubicCoeffs":
        return cls(int(data["radius"]), {(int(a), int(b), int(c)): float(v) for a, b, c, v in data["entries"]})


@dataclass(frozen=True)
class QuarticCoeffs:
    """
    Sparse table ``C_{mnlk}`` of the gPC quartic term.

    Keys are quadruples of site positions sorted ascending; ``coefficient`` accepts any order.
    """
    entries: dict[tuple[int, int, int, int], float]

    def __len__(self) -> int:
        return len(self.entries)

    def coefficient(self, m: int, n: int, l: int, k: int) -> float:
        return self.entries.get(tuple(sorted((m, n, l, k))), 0.0)

    def to_json(self) -> dict:
        return {"entries": [[*q, v] for q, v in sorted(self.entries.items())]}

    @classmethod
    def from_json(cls, data: dict) -> "QuarticCoeffs":
        return cls({tuple(int(i) for i in row[:4]): float(row[4]) for row in data["entries"]})


FrequencyMapFn = Callable[[np.ndarray], np.ndarray]
"""
A map from parameter samples ``ξ`` (shape ``(S, N)``) to frequencies (shape ``(S, n)``).
"""


@dataclass(frozen=True)
class FrequencyMap:
    """
    Affine frequency maps ``ω(ξ) = ω_off + M ξ`` and ``Ω(ξ) = Ω_off + S ξ``.

    The default convention of the engine is ``ω(ξ) = ξ`` (``ω_off = 0``, ``M = I``).
    ``Ω`` is indexed by the normal sites of the model in their retained order.
    """
    omega_offset: np.ndarray
    omega_matrix: np.ndarray
    normal_offset: np.ndarray
    normal_matrix: np.ndarray

    @classmethod
    def identity(cls, N: int, normal_frequencies: np.ndarray) -> "FrequencyMap":
        return cls(np.zeros(N), np.eye(N), np.asarray(normal_frequencies, dtype=float), np.zeros((len(normal_frequencies), N)))

    def omega(self, xi: np.ndarray) -> np.ndarray:
        return self.omega_offset + np.asarray(xi) @ self.omega_matrix.T

    def normal(self, xi: np.ndarray) -> np.ndarray:
        return self.normal_offset + np.asarray(xi) @ self.normal_matrix.T

    def to_json(self) -> dict:
        return {
            "omega_offset": self.omega_offset.tolist(),
            "omega_matrix": self.omega_matrix.tolist(),
            "normal_offset": self.normal_offset.tolist(),
            "normal_matrix": self.normal_matrix.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "FrequencyMap":
        return cls(*(np.asarray(data[k], dtype=float) for k in ("omega_offset", "omega_matrix", "normal_offset", "normal_matrix")))

import logging
from dataclasses import dataclass, field

import numpy as np

from kamlattice.tasks.algebra.lie import ComposedMap, CoordinateMap
from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.model.types import Equation, FrequencyMap, FrequencyModel

logger = logging.getLogger(__name__)


@dataclass
class NormalFormPackage:
    """
    Birkhoff normal form of a lattice Hamiltonian up to quartic order, ready for the action-angle reduction.

    ``transformed`` is ``H ∘ Ψ^{(3)} ∘ Ψ^{(4)}`` truncated at ``max_z_degree``; it splits as
    ``H₀ + Ḡ + Ĝ + R̃``. ``G_bar`` is the symmetric table with ``Ḡ = Σ_{k,l} G_bar[k,l] |z_k|²|z_l|²``
    over ordered pairs touching the tangent sites; ``twist`` and ``coupling`` are its action Hessian
    blocks (tangent×tangent and normal×tangent). ``F3`` is zero for equations without a cubic term.
    """
    model: FrequencyModel
    H0: HamiltonianPoly
    F3: HamiltonianPoly
    F4: HamiltonianPoly
    G_bar: np.ndarray
    G_hat: HamiltonianPoly
    R_tilde: HamiltonianPoly
    transformed: HamiltonianPoly
    twist: np.ndarray
    coupling: np.ndarray
    frequency_map: FrequencyMap
    max_z_degree: int = 4
    diagnostics: dict = field(default_factory=dict)

    @property
    def equation(self) -> Equation:
        return self.model.equation

    @property
    def lam_tangent(self) -> np.ndarray:
        return self.model.tangent_frequencies

    @property
    def lam_normal(self) -> np.ndarray:
        return self.model.normal_frequencies

    def omega0(self, zeta: np.ndarray) -> np.ndarray:
        """``ω⁰(ζ) = λ^{(N)} + 𝓑ζ``."""
        return self.lam_tangent + self.twist @ np.asarray(zeta, dtype=float)

    def Omega0(self, zeta: np.ndarray) -> np.ndarray:
        """``Ω⁰(ζ) = λ^∞ + Sζ`` over the normal sites."""
        return self.lam_normal + self.coupling @ np.asarray(zeta, dtype=float)

    def xi_of(self, zeta: np.ndarray) -> np.ndarray:
        return self.omega0(zeta)

    def zeta_of(self, xi: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.twist, np.asarray(xi, dtype=float) - self.lam_tangent)

    def transform(self, order: int = 4) -> ComposedMap:
        """``Φ = Ψ^{(3)} ∘ Ψ^{(4)}`` acting on coordinates of every retained site."""
        sites = tuple(range(self.model.n_sites))
        maps = [
            CoordinateMap.from_generator(F, sites, order=order, max_z_degree=self.max_z_degree)
            for F in (self.F3, self.F4)
        ]
        return ComposedMap(maps)

    def to_json(self) -> dict:
        return {
            "version": 1,
            "model": self.model.to_json(),
            "H0": self.H0.to_json(),
            "F3": self.F3.to_json(),
            "F4": self.F4.to_json(),
            "G_bar": self.G_bar.tolist(),
            "G_hat": self.G_hat.to_json(),
            "R_tilde": self.R_tilde.to_json(),
            "transformed": self.transformed.to_json(),
            "twist": self.twist.tolist(),
            "coupling": self.coupling.tolist(),
            "frequency_map": self.frequency_map.to_json(),
            "max_z_degree": self.max_z_degree,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_json(cls, data: dict) -> "NormalFormPackage":
        return cls(
            model=FrequencyModel.from_json(data["model"]),
            H0=HamiltonianPoly.from_json(data["H0"]),
            F3=HamiltonianPoly.from_json(data["F3"]),
            F4=HamiltonianPoly.from_json(data["F4"]),
            G_bar=np.asarray(data["G_bar"], dtype=float),
            G_hat=HamiltonianPoly.from_json(data["G_hat"]),
            R_tilde=HamiltonianPoly.from_json(data["R_tilde"]),
            transformed=HamiltonianPoly.from_json(data["transformed"]),
            twist=np.asarray(data["twist"], dtype=float),
            coupling=np.asarray(data["coupling"], dtype=float).reshape(-1, len(data["twist"])),
            frequency_map=FrequencyMap.from_json(data["frequency_map"]),
            max_z_degree=int(data.get("max_z_degree", 4)),
            diagnostics=data.get("diagnostics", {}),
        )


@dataclass
class ReducedNormalForm:
    """
    Parameterized normal form ``H = (ω⁰, y) + Σ Ω⁰_j |z_j|² + R⁰`` at one amplitude ``ζ``.

    ``H0`` and ``R0`` have ``N`` angles and keep the model's site positions for the normal variables.
    ``remainder`` is the largest coefficient of the first dropped order of the ``√(ζ+y)`` expansions.
    """
    zeta: np.ndarray
    xi: np.ndarray
    omega0: np.ndarray
    Omega0: np.ndarray
    H0: HamiltonianPoly
    R0: HamiltonianPoly
    frequency_map: FrequencyMap
    sites: tuple[int, ...]
    remainder: float = 0.0
    twist_condition: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "zeta": self.zeta.tolist(),
            "xi": self.xi.tolist(),
            "omega0": self.omega0.tolist(),
            "Omega0": self.Omega0.tolist(),
            "H0": self.H0.to_json(),
            "R0": self.R0.to_json(),
            "frequency_map": self.frequency_map.to_json(),
            "sites": list(self.sites),
            "remainder": self.remainder,
            "twist_condition": self.twist_condition,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ReducedNormalForm":
        return cls(
            zeta=np.asarray(data["zeta"], dtype=float),
            xi=np.asarray(data["xi"], dtype=float),
            omega0=np.asarray(data["omega0"], dtype=float),
            Omega0=np.asarray(data["Omega0"], dtype=float),
            H0=HamiltonianPoly.from_json(data["H0"]),
            R0=HamiltonianPoly.from_json(data["R0"]),
            frequency_map=FrequencyMap.from_json(data["frequency_map"]),
            sites=tuple(data["sites"]),
            remainder=float(data.get("remainder", 0.0)),
            twist_condition=float(data.get("twist_condition", 1.0)),
            diagnostics=data.get("diagnostics", {}),
        )

import logging
from dataclasses import dataclass, field

import numpy as np

from kamlattice.tasks.algebra.lie import CoordinateMap
from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.exceptions import ConfigurationError
from kamlattice.tasks.homology.constants import ExponentProfile
from kamlattice.tasks.homology.types import FourierOperatorSeries, FourierVectorSeries, Strategy
from kamlattice.tasks.melnikov.types import ExcisionStage, ExcisionWitness, ParameterBox

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScheduleParams:
    """Initial perturbation size, superlinear rate and initial domain of the iteration."""
    epsilon0: float
    rho0: float = 0.5
    s0: float = 1.0
    r0: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.epsilon0 < 1.0:
            raise ConfigurationError(f"epsilon0 must lie in (0, 1), got {self.epsilon0}")
        if self.rho0 <= 0 or self.s0 <= 0 or self.r0 <= 0:
            raise ConfigurationError(f"rho0, s0 and r0 must be positive: {self}")


@dataclass(frozen=True)
class ScheduleStep:
    """
    Constants of step ``m``: ``ε_m``, ``e_m``, the domain ``(s_m, r_m)``, the bridges
    ``s_m^j, r_m^j`` (``j = 0..6``) towards step ``m+1`` and the Fourier radius ``K_m``.
    """
    m: int
    epsilon: float
    e: float
    s: float
    r: float
    s_bridge: tuple[float, ...]
    r_bridge: tuple[float, ...]
    K: float

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "epsilon": self.epsilon,
            "e": self.e,
            "s": self.s,
            "r": self.r,
            "s_bridge": list(self.s_bridge),
            "r_bridge": list(self.r_bridge),
            "K": self.K,
        }


@dataclass
class LowBlocks:
    """
    The seven low-order blocks of a perturbation over the normal sites, as Fourier series:
    ``R^x``, ``(R^y, y)``, ``⟨R^z, z⟩``, ``⟨R^z̄, z̄⟩``, ``⟨R^{zz} z, z⟩``, ``⟨R^{zz̄} z, z̄⟩``, ``⟨R^{z̄z̄} z̄, z̄⟩``.

    ``x`` has one entry per mode. ``zz`` and ``zbarzbar`` are stored symmetric; ``zzbar[i, j]`` is the
    coefficient of ``z̄_i z_j``.
    """
    x: FourierVectorSeries
    y: FourierVectorSeries
    z: FourierVectorSeries
    zbar: FourierVectorSeries
    zz: FourierOperatorSeries
    zzbar: FourierOperatorSeries
    zbarzbar: FourierOperatorSeries

    @classmethod
    def empty(cls, n_angles: int, n: int) -> "LowBlocks":
        return cls(
            FourierVectorSeries(n_angles, 1),
            FourierVectorSeries(n_angles, n_angles),
            FourierVectorSeries(n_angles, n),
            FourierVectorSeries(n_angles, n),
            FourierOperatorSeries(n_angles, (n, n)),
            FourierOperatorSeries(n_angles, (n, n)),
            FourierOperatorSeries(n_angles, (n, n)),
        )

    def names(self) -> tuple[str, ...]:
        return ("x", "y", "z", "zbar", "zz", "zzbar", "zbarzbar")

    def __add__(self, other: "LowBlocks") -> "LowBlocks":
        return LowBlocks(*(getattr(self, name) + getattr(other, name) for name in self.names()))

    def max_abs(self) -> dict[str, float]:
        return {name: getattr(self, name).max_abs() for name in self.names()}


@dataclass
class SampleState:
    """
    Per-parameter-sample data of the iteration: ``ω^(m)``, ``B^(m)`` over the normal sites, the normal
    frequencies ``Λ(ξ)`` and the perturbations ``R^(m)``, ``P^(m)``.
    """
    index: int
    xi: np.ndarray
    omega: np.ndarray
    lam: np.ndarray
    B: np.ndarray
    R: HamiltonianPoly
    P: HamiltonianPoly
    omega0: np.ndarray = None
    B0: np.ndarray = None

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.B = np.asarray(self.B, dtype=complex)
        if self.omega0 is None:
            self.omega0 = self.omega.copy()
        if self.B0 is None:
            self.B0 = self.B.copy()

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "xi": np.asarray(self.xi).tolist(),
            "omega": self.omega.tolist(),
            "omega0": self.omega0.tolist(),
            "B": [[[c.real, c.imag] for c in row] for row in self.B],
            "R_terms": len(self.R),
            "P_terms": len(self.P),
        }


@dataclass
class StepRecord:
    """What one step did for one tracked sample: sizes, solver diagnostics and updates."""
    m: int
    sample: int
    epsilon: float
    K: float
    K_used: int
    r_norm_before: float
    r_norm_after: float
    p_norm: float
    omega_update: float
    b_update: float
    min_divisor: float
    max_residual: float
    lie_remainder: float
    hermitian_defect: float
    reality_defect: float
    contributions: dict[str, float] = field(default_factory=dict)
    witnesses: int = 0

    @property
    def contraction(self) -> float:
        return self.r_norm_after / self.r_norm_before if self.r_norm_before > 0 else 0.0

    def to_json(self) -> dict:
        return {**self.__dict__, "contraction": self.contraction}


@dataclass
class KamState:
    """State of the iteration at step ``m``: tracked samples, the live box and the norm ledger."""
    m: int
    samples: list[SampleState]
    box: ParameterBox
    sites: tuple[int, ...]
    weights: np.ndarray
    maps: dict[int, list[CoordinateMap]] = field(default_factory=dict)
    ledger: dict[str, list[float]] = field(default_factory=lambda: {"R": [], "P": []})
    stages: list[ExcisionStage] = field(default_factory=list)
    records: list[StepRecord] = field(default_factory=list)
    witnesses: list[ExcisionWitness] = field(default_factory=list)

    @property
    def n_angles(self) -> int:
        return self.box.N

    @property
    def alive(self) -> bool:
        return bool(self.samples) and self.box.alive_count > 0


@dataclass(frozen=True)
class SolverOptions:
    """
    How the homological equations are solved at every step.

    ``first_partition`` and ``second_partition`` override the head/tail radii; ``None`` takes them
    from the exponent profile, which at desk scale puts every site in the head.
    """
    strategy: Strategy = Strategy.STRUCTURED
    floor: float = 1e-10
    tol: float = 1e-12
    extended_precision: bool = False
    first_partition: float | None = None
    second_partition: float | None = None


@dataclass(frozen=True)
class KamConfig:
    """Everything a step needs besides the state: schedule, exponents, solvers, truncation and norms."""
    schedule: ScheduleParams
    profile: ExponentProfile
    solver: SolverOptions = field(default_factory=SolverOptions)
    lie_order: int = 6
    max_y_degree: int = 2
    max_z_degree: int = 5
    fourier_cap: int | None = 16
    lie_fourier_factor: float = 2.0
    chop: float = 1e-14
    norm_p: float = 1.0
    norm_samples: int = 16
    excise: bool = True
    track_maps: bool = True

    def __post_init__(self):
        if self.lie_order < 2:
            raise ConfigurationError(f"Lie series order must be at least 2, got {self.lie_order}")
        if self.max_y_degree < 1 or self.max_z_degree < 2:
            raise ConfigurationError(f"Degree caps too small to hold the normal form: y≤{self.max_y_degree}, z≤{self.max_z_degree}")


@dataclass
class KamRun:
    """
    Outcome of an iteration: final frequencies and operators per tracked sample, the composed maps
    towards the torus embedding, the per-step trace and the excision history.
    """
    status: str
    final: KamState
    records: list[StepRecord]
    stages: list[ExcisionStage]
    omega_drift: dict[int, float] = field(default_factory=dict)
    B_drift: dict[int, float] = field(default_factory=dict)
    growth: dict[int, float] = field(default_factory=dict)
    xi_derivative: float = 0.0

    @property
    def steps(self) -> int:
        return self.final.m

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "steps": self.steps,
            "samples": [s.to_json() for s in self.final.samples],
            "omega_drift": {str(k): v for k, v in self.omega_drift.items()},
            "B_drift": {str(k): v for k, v in self.B_drift.items()},
            "growth": {str(k): v for k, v in self.growth.items()},
            "xi_derivative": self.xi_derivative,
            "ledger": self.final.ledger,
            "surviving_fraction": self.final.box.fraction,
        }

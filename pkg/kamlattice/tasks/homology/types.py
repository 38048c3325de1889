import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from kamlattice.tasks.algebra.types import Multi, multi_l1
from kamlattice.tasks.melnikov.types import ExcisionWitness
from kamlattice.tasks.norms.sequence import hp_norm

logger = logging.getLogger(__name__)

# largest relative back-substitution residual accepted for a solved mode
RESIDUAL_TOL = 1e-8


class Strategy(str, Enum):
    STRUCTURED = "structured"
    DENSE = "dense"


class MelnikovSign(str, Enum):
    """
    Sign pattern of a second-Melnikov equation ``((k,ω) + s₁M) F + s₂ F N = R``.

    ``SUM`` is ``(+, +)``, ``NEG_SUM`` is ``(−, −)``, ``DIFFERENCE`` is ``(+, −)`` and
    ``NEG_DIFFERENCE`` is ``(−, +)``.
    """
    SUM = "sum"
    NEG_SUM = "neg_sum"
    DIFFERENCE = "difference"
    NEG_DIFFERENCE = "neg_difference"

    @property
    def signs(self) -> tuple[int, int]:
        return {
            MelnikovSign.SUM: (1, 1),
            MelnikovSign.NEG_SUM: (-1, -1),
            MelnikovSign.DIFFERENCE: (1, -1),
            MelnikovSign.NEG_DIFFERENCE: (-1, 1),
        }[self]


class FourierVectorSeries:
    """Finite Fourier series ``k ↦ F̂(k)`` of lattice vectors of a common length."""

    def __init__(self, n_angles: int, size: int, modes: dict[Multi, np.ndarray] | None = None):
        self.n_angles = n_angles
        self.size = size
        self.modes: dict[Multi, np.ndarray] = {}
        for k, v in (modes or {}).items():
            v = np.asarray(v, dtype=complex)
            if v.shape != (size,):
                raise ValueError(f"Mode {k} has shape {v.shape}, expected ({size},)")
            if len(k) != n_angles:
                raise ValueError(f"Mode {k} does not have {n_angles} components")
            self.modes[tuple(k)] = v

    def __getitem__(self, k: Multi) -> np.ndarray:
        return self.modes.get(tuple(k), np.zeros(self.size, dtype=complex))

    def __setitem__(self, k: Multi, value: np.ndarray):
        self.modes[tuple(k)] = np.asarray(value, dtype=complex)

    def __contains__(self, k) -> bool:
        return tuple(k) in self.modes

    def __len__(self) -> int:
        return len(self.modes)

    def items(self):
        return self.modes.items()

    def like(self) -> "FourierVectorSeries":
        return type(self)(self.n_angles, self.size)

    def cutoff(self, K: float) -> "FourierVectorSeries":
        return type(self)(self.n_angles, self.size, {k: v for k, v in self.modes.items() if multi_l1(k) <= K})

    def scale(self, factor: complex) -> "FourierVectorSeries":
        return type(self)(self.n_angles, self.size, {k: factor * v for k, v in self.modes.items()})

    def __add__(self, other: "FourierVectorSeries") -> "FourierVectorSeries":
        out = dict(self.modes)
        for k, v in other.modes.items():
            out[k] = out[k] + v if k in out else v
        return type(self)(self.n_angles, self.size, out)

    def __sub__(self, other: "FourierVectorSeries") -> "FourierVectorSeries":
        return self + other.scale(-1.0)

    def max_abs(self) -> float:
        return max((float(np.abs(v).max(initial=0.0)) for v in self.modes.values()), default=0.0)

    def norm(self, p: float, weights: np.ndarray, s: float = 0.0) -> float:
        """``sqrt(Σ_k ‖F̂(k)‖_p² e^{2|k|s})``."""
        total = sum(hp_norm(v, p, weights) ** 2 * np.exp(2.0 * multi_l1(k) * s) for k, v in self.modes.items())
        return float(np.sqrt(total))


class FourierOperatorSeries:
    """Finite Fourier series ``k ↦ F̂(k)`` of lattice matrices of a common shape."""

    def __init__(self, n_angles: int, shape: tuple[int, int], modes: dict[Multi, np.ndarray] | None = None):
        self.n_angles = n_angles
        self.shape = tuple(shape)
        self.modes: dict[Multi, np.ndarray] = {}
        for k, m in (modes or {}).items():
            m = np.asarray(m, dtype=complex)
            if m.shape != self.shape:
                raise ValueError(f"Mode {k} has shape {m.shape}, expected {self.shape}")
            if len(k) != n_angles:
                raise ValueError(f"Mode {k} does not have {n_angles} components")
            self.modes[tuple(k)] = m

    def __getitem__(self, k: Multi) -> np.ndarray:
        return self.modes.get(tuple(k), np.zeros(self.shape, dtype=complex))

    def __setitem__(self, k: Multi, value: np.ndarray):
        self.modes[tuple(k)] = np.asarray(value, dtype=complex)

    def __contains__(self, k) -> bool:
        return tuple(k) in self.modes

    def __len__(self) -> int:
        return len(self.modes)

    def items(self):
        return self.modes.items()

    def like(self) -> "FourierOperatorSeries":
        return type(self)(self.n_angles, self.shape)

    def cutoff(self, K: float) -> "FourierOperatorSeries":
        return type(self)(self.n_angles, self.shape, {k: m for k, m in self.modes.items() if multi_l1(k) <= K})

    def scale(self, factor: complex) -> "FourierOperatorSeries":
        return type(self)(self.n_angles, self.shape, {k: factor * m for k, m in self.modes.items()})

    def __add__(self, other: "FourierOperatorSeries") -> "FourierOperatorSeries":
        out = dict(self.modes)
        for k, m in other.modes.items():
            out[k] = out[k] + m if k in out else m
        return type(self)(self.n_angles, self.shape, out)

    def __sub__(self, other: "FourierOperatorSeries") -> "FourierOperatorSeries":
        return self + other.scale(-1.0)

    def max_abs(self) -> float:
        return max((float(np.abs(m).max(initial=0.0)) for m in self.modes.values()), default=0.0)

    def norm(self, s: float = 0.0) -> float:
        """``sqrt(Σ_k ‖F̂(k)‖₂² e^{2|k|s})`` with the spectral norm per mode."""
        total = sum(np.linalg.norm(m, 2) ** 2 * np.exp(2.0 * multi_l1(k) * s) for k, m in self.modes.items() if m.size)
        return float(np.sqrt(total))


@dataclass
class BlockPartition:
    """
    Head/tail split of the lattice at a radius threshold: head ``|j| < threshold``, tail ``|j| ≥ threshold``.
    """
    threshold: float
    head: np.ndarray
    tail: np.ndarray

    @classmethod
    def at(cls, weights: np.ndarray, threshold: float) -> "BlockPartition":
        weights = np.asarray(weights, dtype=float)
        return cls(float(threshold), np.flatnonzero(weights < threshold), np.flatnonzero(weights >= threshold))

    @property
    def trivial(self) -> bool:
        return len(self.tail) == 0 or len(self.head) == 0


@dataclass
class ModeTrace:
    """Per-mode solver record: strategy actually used, smallest divisor and relative residual."""
    k: Multi
    strategy: str
    min_divisor: float
    residual: float
    iterations: int = 0

    def to_json(self) -> dict:
        return {
            "k": list(self.k),
            "strategy": self.strategy,
            "min_divisor": float(self.min_divisor),
            "residual": float(self.residual),
            "iterations": self.iterations,
        }


@dataclass
class SolveResult:
    """Solution of a homological equation together with its excision witnesses and per-mode traces."""
    solution: FourierVectorSeries | FourierOperatorSeries
    witnesses: list[ExcisionWitness] = field(default_factory=list)
    traces: list[ModeTrace] = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        return max((t.residual for t in self.traces), default=0.0)

    @property
    def min_divisor(self) -> float:
        return min((t.min_divisor for t in self.traces), default=float("inf"))

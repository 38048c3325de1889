from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NormContext:
    """
    Exponents and domain sizes every norm is reported against: ``q = p + κ``.
    """
    p: float
    kappa: float
    s: float
    r: float

    def __post_init__(self):
        if self.kappa <= 0 or self.s <= 0 or self.r <= 0:
            raise ValueError(f"kappa, s and r must be positive: {self}")
        if self.p < 0:
            raise ValueError(f"p must be nonnegative, got {self.p}")

    @property
    def q(self) -> float:
        return self.p + self.kappa

    def with_domain(self, s: float, r: float) -> "NormContext":
        return NormContext(self.p, self.kappa, s, r)


@dataclass
class LatticeOperator:
    """
    Complex matrix over retained lattice sites with radius thresholds defining block views.

    Rows and columns carry the weights ``|j|`` of their sites. Thresholds ``t_1 < t_2 < ...``
    partition sites into ``|j| ≤ t_1``, ``t_1 < |j| ≤ t_2``, ..., ``|j| > t_last``.
    """
    entries: np.ndarray
    row_weights: np.ndarray
    col_weights: np.ndarray | None = None
    thresholds: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        self.row_weights = np.asarray(self.row_weights, dtype=float)
        self.col_weights = self.row_weights if self.col_weights is None else np.asarray(self.col_weights, dtype=float)
        if self.entries.shape != (len(self.row_weights), len(self.col_weights)):
            raise ValueError(f"Entries of shape {self.entries.shape} do not match weights {len(self.row_weights)}x{len(self.col_weights)}")
        if list(self.thresholds) != sorted(set(self.thresholds)):
            raise ValueError(f"Thresholds must be strictly increasing: {self.thresholds}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @staticmethod
    def index_sets(weights: np.ndarray, thresholds: tuple[float, ...]) -> list[np.ndarray]:
        edges = (-np.inf, *thresholds, np.inf)
        return [np.flatnonzero((weights > lo) & (weights <= hi)) for lo, hi in zip(edges[:-1], edges[1:])]

    def row_sets(self) -> list[np.ndarray]:
        return self.index_sets(self.row_weights, self.thresholds)

    def col_sets(self) -> list[np.ndarray]:
        return self.index_sets(self.col_weights, self.thresholds)

    def block(self, a: int, b: int) -> "LatticeOperator":
        rows = self.row_sets()[a]
        cols = self.col_sets()[b]
        return LatticeOperator(self.entries[np.ix_(rows, cols)], self.row_weights[rows], self.col_weights[cols])

    def majorant(self) -> "LatticeOperator":
        return LatticeOperator(np.abs(self.entries), self.row_weights, self.col_weights, self.thresholds)

    def adjoint(self) -> "LatticeOperator":
        return LatticeOperator(self.entries.conj().T, self.col_weights, self.row_weights, self.thresholds)

    def hermitian_defect(self) -> float:
        if self.shape[0] != self.shape[1]:
            return float("inf")
        return float(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0))

    def __matmul__(self, other: "LatticeOperator") -> "LatticeOperator":
        return LatticeOperator(self.entries @ other.entries, self.row_weights, other.col_weights, self.thresholds)

    def __add__(self, other: "LatticeOperator") -> "LatticeOperator":
        return LatticeOperator(self.entries + other.entries, self.row_weights, self.col_weights, self.thresholds)

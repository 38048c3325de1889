import logging
from dataclasses import asdict, dataclass

import numpy as np

logger = logging.getLogger(__name__)

# margin by which the strict inequalities between exponents are met
_SLACK = 1.01
_LOG_OVERFLOW = float(np.log(np.finfo(float).max))


def _exp_or_inf(log_value: float) -> float:
    return float(np.exp(log_value)) if log_value < _LOG_OVERFLOW else float("inf")


def first_split_radius(K: float, c: float, y: float, kappa: float) -> float:
    """``K₂ = (2K^{c/y})^{3/κ}``: beyond this radius the tangent bound alone controls first-Melnikov divisors."""
    return _exp_or_inf(3.0 / kappa * (np.log(2.0) + c / y * np.log(K)))


@dataclass(frozen=True)
class ExponentProfile:
    """
    Exponents controlling partitions and excision thresholds at scale ``K``.

    ``y = 3d/κ + 3``; ``c`` is the smallest value with ``c/y > scale·N`` and
    ``c(1 − 3d/(yκ)) > scale·N``; ``c₂₀ = N`` and ``c₂₁ = c₂₀ + N``. ``c₂₂(K)`` is chosen so that
    ``K^{−κc₂₂} = K^{−c₂₁}/100``. The ``scale`` factor sets the aggressiveness: the asymptotic
    regime uses ``100(1+κ+d)``, desk runs use small values.
    """
    N: int
    d: int
    kappa: float
    p: float = 1.0
    scale: float = 1.0

    @classmethod
    def asymptotic(cls, N: int, d: int, kappa: float, p: float = 1.0) -> "ExponentProfile":
        return cls(N, d, kappa, p, 100.0 * (1.0 + kappa + d))

    @property
    def y(self) -> float:
        return 3.0 * self.d / self.kappa + 3.0

    @property
    def c(self) -> float:
        base = self.scale * self.N
        return _SLACK * max(self.y * base, base / (1.0 - 3.0 * self.d / (self.y * self.kappa)))

    @property
    def c20(self) -> float:
        return float(self.N)

    @property
    def c21(self) -> float:
        return self.c20 + self.N

    def c22(self, K: float) -> float:
        if K <= 1:
            return self.c21 / self.kappa
        return (self.c21 + np.log(100.0) / np.log(K)) / self.kappa

    def tangent_threshold(self, K: float) -> float:
        """``K^{−c₂₁}``: floor of ``|(k, ω)|`` kept by the tangent excision."""
        return float(K ** (-self.c21))

    def first_threshold(self, K: float) -> float:
        """``½ K^{−c}``: floor of the first-Melnikov divisors."""
        return 0.5 * _exp_or_inf(-self.c * np.log(K))

    def second_threshold(self, K: float) -> float:
        """``K^{−c}``: floor of the second-Melnikov divisors."""
        return _exp_or_inf(-self.c * np.log(K))

    def first_partition(self, K: float) -> float:
        """Head/tail radius ``K^{c₂₂}`` of the first-Melnikov solver."""
        return _exp_or_inf(self.c22(K) * np.log(K))

    def K2(self, K: float) -> float:
        return first_split_radius(K, self.c, self.y, self.kappa)

    def K3(self, K: float) -> float:
        """Head/tail radius of the second-Melnikov solver (the larger of the two defining powers)."""
        log_k2 = 3.0 / self.kappa * (np.log(2.0) + self.c / self.y * np.log(K))
        first = 100.0 * (self.N + 1) * self.kappa * self.y * log_k2
        second = np.log(2.0) / self.kappa + 100.0 * (1.0 + (self.p + self.kappa) / (self.kappa * self.y)) * self.c / self.kappa * np.log(K)
        return _exp_or_inf(max(first, second))

    def to_json(self) -> dict:
        return {**asdict(self), "y": self.y, "c": self.c, "c20": self.c20, "c21": self.c21}


def effective_K(K_m: float, fourier_cap: int | None = 16) -> int:
    """Fourier radius actually enumerated at a step: ``min(K_m, cap)``, at least 1."""
    K = K_m if fourier_cap is None else min(K_m, fourier_cap)
    if not np.isfinite(K):
        raise ValueError("An uncapped infinite Fourier radius cannot be enumerated")
    return max(1, int(np.floor(K)))

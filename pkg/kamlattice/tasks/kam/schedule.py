import logging

import numpy as np

from kamlattice.tasks.kam.types import ScheduleParams, ScheduleStep

logger = logging.getLogger(__name__)

# Σ_{i≥1} i^{-2}
_BASEL = np.pi ** 2 / 6.0
BRIDGE_STEPS = 6


def e_m(m: int) -> float:
    """``(1⁻² + ... + m⁻²) / (2 Σ i⁻²)``, in ``[0, ½)``."""
    if m < 0:
        raise ValueError(f"Step index must be nonnegative, got {m}")
    partial = float(np.sum(1.0 / np.arange(1, m + 1, dtype=float) ** 2)) if m else 0.0
    return partial / (2.0 * _BASEL)


def epsilon_m(m: int, epsilon0: float, rho0: float) -> float:
    """``ε₀^{(1+ρ₀)^m}``, evaluated in log space and floored at the smallest positive double."""
    log_eps = np.log(epsilon0) * (1.0 + rho0) ** m
    return float(max(np.exp(log_eps), np.finfo(float).tiny))


def bridge(a: float, b: float) -> tuple[float, ...]:
    return tuple((1.0 - j / BRIDGE_STEPS) * a + j / BRIDGE_STEPS * b for j in range(BRIDGE_STEPS + 1))


def schedule(m: int, params: ScheduleParams) -> ScheduleStep:
    """
    Constants of step ``m``.

    ``s_m = s₀(1 − e_m)`` and ``r_m = r₀(1 − e_m)`` stay above half their initial values; the bridges
    interpolate linearly towards step ``m+1`` and ``K_m = 2|log ε_m| / (s_m⁵ − s_m⁶)``.
    """
    e = e_m(m)
    e_next = e_m(m + 1)
    s, s_next = params.s0 * (1.0 - e), params.s0 * (1.0 - e_next)
    r, r_next = params.r0 * (1.0 - e), params.r0 * (1.0 - e_next)
    s_bridge = bridge(s, s_next)
    r_bridge = bridge(r, r_next)
    log_eps = abs(np.log(params.epsilon0) * (1.0 + params.rho0) ** m)
    K = 2.0 * log_eps / (s_bridge[5] - s_bridge[6])
    step = ScheduleStep(m, epsilon_m(m, params.epsilon0, params.rho0), e, s, r, s_bridge, r_bridge, float(K))
    logger.debug(f"Schedule m={m}: ε={step.epsilon:.3e}, s={s:.4f}, r={r:.4f}, K={K:.3e}")
    return step

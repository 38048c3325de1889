import logging

import numpy as np
from scipy.linalg import eigh, expm

from kamlattice.tasks.norms.sequence import hp_norm

logger = logging.getLogger(__name__)

HERMITIAN_TOLERANCE = 1e-12
CHUNK = 4096


def is_hermitian(A: np.ndarray, tol: float = HERMITIAN_TOLERANCE) -> bool:
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    return bool(np.abs(A - A.conj().T).max(initial=0.0) <= tol * scale)


def norm_conservation(
    B_inf: np.ndarray,
    lam: np.ndarray,
    z0: np.ndarray,
    horizon: float,
    dt: float,
    p: float = 0.0,
    weights: np.ndarray | None = None,
) -> float:
    """
    Largest drift ``|‖z(t)‖_p − ‖z(0)‖_p|`` of the reduced linear flow ``ż = −i(Λ + B^∞)z`` sampled every ``dt``
    up to ``horizon``.

    A Hermitian generator is diagonalized once and the flow is the exact exponential at every sample time;
    otherwise a one-step propagator ``expm(−iA dt)`` is applied repeatedly.

    Args:
        B_inf: Limit operator over the normal sites.
        lam: Normal frequencies ``Λ``.
        z0: Initial condition.
        horizon: Final time.
        dt: Sampling step.
        p: Norm exponent; ``0`` is the plain ``ℓ²`` norm.
        weights: Site weights for ``h_p`` (default ``1..n``).
    """
    lam = np.asarray(lam, dtype=float)
    A = np.diag(lam).astype(complex) + np.asarray(B_inf, dtype=complex)
    z0 = np.asarray(z0, dtype=complex)
    if A.shape != (len(z0), len(z0)):
        raise ValueError(f"Operator of shape {A.shape} does not act on a vector of length {len(z0)}")
    if horizon <= 0 or dt <= 0:
        raise ValueError(f"horizon and dt must be positive, got {horizon} and {dt}")
    steps = int(np.ceil(horizon / dt))
    initial = float(hp_norm(z0, p, weights))
    drift = 0.0

    if is_hermitian(A):
        eigenvalues, V = eigh(A)
        c0 = V.conj().T @ z0
        for start in range(0, steps + 1, CHUNK):
            t = dt * np.arange(start, min(start + CHUNK, steps + 1))
            Z = (np.exp(-1j * np.outer(t, eigenvalues)) * c0[None, :]) @ V.T
            drift = max(drift, float(np.abs(hp_norm(Z, p, weights) - initial).max(initial=0.0)))
        logger.debug(f"Hermitian flow over {steps} samples: drift {drift:.3e}")
    else:
        logger.warning("Generator is not Hermitian: using a stepped propagator, the norm is not expected to be conserved")
        propagator = expm(-1j * dt * A)
        z = z0.copy()
        for _ in range(steps):
            z = propagator @ z
            drift = max(drift, abs(float(hp_norm(z, p, weights)) - initial))
            if not np.isfinite(drift):
                break
        logger.debug(f"Non-Hermitian flow over {steps} steps: drift {drift:.3e}")
    return drift

import logging

import numpy as np
from scipy import linalg

logger = logging.getLogger(__name__)


def vec(U: np.ndarray) -> np.ndarray:
    """Column-stacking ``Vec U``."""
    return np.asarray(U).reshape(-1, order="F")


def unvec(v: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return np.asarray(v).reshape(shape, order="F")


def kron_vec(X: np.ndarray, Y: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    ``(X ⊗ Y) v`` without forming the Kronecker product, using ``(X ⊗ Y) Vec V = Vec(Y V Xᵀ)``.
    """
    X = np.asarray(X)
    Y = np.asarray(Y)
    V = unvec(v, (Y.shape[1], X.shape[1]))
    return vec(Y @ V @ X.T)


def sylvester_kron_matrix(M: np.ndarray, N: np.ndarray, shift: complex = 0.0, s1: int = 1, s2: int = 1) -> np.ndarray:
    """Matrix of ``F ↦ (shift + s₁M) F + s₂ F N`` acting on ``Vec F``: ``1⊗(shift + s₁M) + s₂ Nᵀ⊗1``."""
    n = M.shape[0]
    m = N.shape[0]
    left = shift * np.eye(n) + s1 * np.asarray(M)
    return np.kron(np.eye(m), left) + s2 * np.kron(np.asarray(N).T, np.eye(n))


def solve_kron(M: np.ndarray, N: np.ndarray, R: np.ndarray, shift: complex = 0.0, s1: int = 1, s2: int = 1) -> tuple[np.ndarray, float]:
    """
    Dense Kronecker solve of ``(shift + s₁M) F + s₂ F N = R``.

    Returns:
        tuple[np.ndarray, float]: ``F`` and the smallest eigenvalue modulus of the Kronecker matrix.
    """
    A = sylvester_kron_matrix(M, N, shift, s1, s2)
    divisor = float(np.min(np.abs(linalg.eigvals(A)))) if A.size else float("inf")
    F = unvec(linalg.solve(A, vec(R)), R.shape)
    return F, divisor


def _identity_deviations(rng: np.random.Generator, size: int) -> dict[str, float]:
    def rand(n=size, m=size):
        return rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))

    X, Y, U, V = rand(), rand(), rand(), rand()
    XY = np.kron(X, Y)
    inv = np.linalg.inv(XY)
    return {
        "norm": abs(np.linalg.norm(XY, 2) - np.linalg.norm(X, 2) * np.linalg.norm(Y, 2)),
        "mixed_product": float(np.abs(XY @ np.kron(U, V) - np.kron(X @ U, Y @ V)).max()),
        "inverse": float(np.abs(inv - np.kron(np.linalg.inv(X), np.linalg.inv(Y))).max() / np.abs(inv).max()),
        "adjoint": float(np.abs(XY.conj().T - np.kron(X.conj().T, Y.conj().T)).max()),
        "vec": float(np.abs(vec(X @ U @ Y) - np.kron(Y.T, X) @ vec(U)).max()),
        "kron_vec": float(np.abs(kron_vec(X, Y, vec(U)) - XY @ vec(U)).max()),
    }


def kron_identities_check(size: int = 4, seed: int = 0, instances: int = 8) -> dict[str, float]:
    """
    Verify the tensor identities the second-Melnikov solver relies on, on random complex matrices.

    Args:
        size: Side of the random matrices.
        seed: Seed of the generator drawing every instance.
        instances: Number of independent random draws.

    Returns:
        dict[str, float]: Largest deviation per identity over all draws, absolute except for the
            inverse, which is relative to the size of ``(X⊗Y)⁻¹``.
    """
    if instances < 1:
        raise ValueError(f"instances must be positive, got {instances}")
    rng = np.random.default_rng(seed)
    report: dict[str, float] = {}
    for _ in range(instances):
        for name, value in _identity_deviations(rng, size).items():
            report[name] = max(report.get(name, 0.0), float(value))
    logger.debug(f"Kronecker identities on {instances} draws of {size}x{size} matrices: {report}")
    return report

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.algebra.types import PhasePoint
from kamlattice.tasks.model.vector_field import hamiltonian_vector_field
from kamlattice.tasks.norms.sequence import hp_norm

logger = logging.getLogger(__name__)

BLOCKS = ("x", "y", "z", "zbar")


def angle_grid(n_angles: int, size: int) -> np.ndarray:
    """Uniform grid of ``size`` points per angle on ``[0, 2π)^N``; shape ``(size**N, N)``."""
    axes = [2.0 * np.pi * np.arange(size) / size] * n_angles
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass
class TorusEmbedding:
    """
    Trigonometric embedding ``θ ↦ (θ + X(θ), Y(θ), Z(θ), Z̄(θ))`` of a torus with frequency ``ω``.

    ``coefficients[block]`` has shape ``(G,)*N + (dim,)`` in FFT order; the ``x`` block holds the periodic
    part ``X`` only.
    """
    omega: np.ndarray
    n_sites: int
    coefficients: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_angles(self) -> int:
        return len(self.omega)

    @property
    def grid(self) -> int:
        return self.coefficients["y"].shape[0]

    def modes(self) -> np.ndarray:
        """Integer Fourier modes in the flattened coefficient order; shape ``(G**N, N)``."""
        freqs = np.rint(np.fft.fftfreq(self.grid) * self.grid).astype(int)
        mesh = np.meshgrid(*[freqs] * self.n_angles, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def support(self, tol: float = 1e-14) -> int:
        """Largest ``|k|_∞`` carrying a coefficient above ``tol``."""
        modes = self.modes()
        largest = 0
        for block in BLOCKS:
            flat = self.coefficients[block].reshape(len(modes), -1)
            active = np.abs(flat).max(axis=1, initial=0.0) > tol
            if active.any():
                largest = max(largest, int(np.abs(modes[active]).max()))
        return largest

    def _evaluate(self, theta: np.ndarray, derivative: bool) -> dict[str, np.ndarray]:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        modes = self.modes()
        phases = np.exp(1j * theta @ modes.T)
        if derivative:
            phases = phases * (1j * (modes @ self.omega))[None, :]
        return {block: phases @ self.coefficients[block].reshape(len(modes), -1) for block in BLOCKS}

    def __call__(self, theta: np.ndarray) -> PhasePoint:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        values = self._evaluate(theta, derivative=False)
        return PhasePoint(theta + values["x"], values["y"], values["z"], values["zbar"])

    def flow_derivative(self, theta: np.ndarray) -> PhasePoint:
        """``(ω·∂_θ) Emb(θ)``; the ``x`` block includes the linear part ``ω``."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        values = self._evaluate(theta, derivative=True)
        return PhasePoint(self.omega[None, :] + values["x"], values["y"], values["z"], values["zbar"])

    def to_json(self) -> dict:
        return {
            "omega": self.omega.tolist(),
            "n_sites": self.n_sites,
            "grid": self.grid,
            "coefficients": {
                block: [[c.real, c.imag] for c in self.coefficients[block].ravel()] for block in BLOCKS
            },
        }

    @classmethod
    def from_json(cls, data: dict) -> "TorusEmbedding":
        omega = np.asarray(data["omega"], dtype=float)
        G = int(data["grid"])
        N = len(omega)
        dims = {"x": N, "y": N, "z": int(data["n_sites"]), "zbar": int(data["n_sites"])}
        coefficients = {}
        for block in BLOCKS:
            pairs = np.asarray(data["coefficients"][block], dtype=float).reshape(-1, 2)
            coefficients[block] = (pairs[:, 0] + 1j * pairs[:, 1]).reshape((G,) * N + (dims[block],))
        return cls(omega, int(data["n_sites"]), coefficients)


def embedding_from_map(
    transform: Callable[[PhasePoint], PhasePoint],
    omega: np.ndarray,
    n_sites: int,
    grid: int = 16,
    chop: float = 1e-15,
) -> TorusEmbedding:
    """
    Sample ``Φ(θ, 0, 0, 0)`` on a uniform angle grid and take its FFT.

    Args:
        transform: Canonical map (a coordinate map or a composition of them).
        omega: Frequency of the torus.
        n_sites: Length of the ``z`` arrays the map expects.
        grid: Samples per angle.
        chop: Coefficients below ``chop`` times the largest one are zeroed.
    """
    omega = np.asarray(omega, dtype=float)
    N = len(omega)
    theta = angle_grid(N, grid)
    M = len(theta)
    point = PhasePoint(theta.astype(complex), np.zeros((M, N), dtype=complex), np.zeros((M, n_sites), dtype=complex), np.zeros((M, n_sites), dtype=complex))
    image = transform(point)
    values = {"x": np.asarray(image.x) - theta, "y": image.y, "z": image.z, "zbar": image.zbar}
    coefficients = {}
    for block, v in values.items():
        shaped = np.asarray(v, dtype=complex).reshape((grid,) * N + (-1,))
        c = np.fft.fftn(shaped, axes=tuple(range(N))) / M
        scale = np.abs(c).max(initial=0.0)
        c[np.abs(c) <= chop * max(scale, 1.0)] = 0.0
        coefficients[block] = c
    embedding = TorusEmbedding(omega, n_sites, coefficients)
    logger.debug(f"Torus embedding sampled on {grid}^{N} angles, Fourier support {embedding.support()}")
    return embedding


def torus_residual(
    embedding: TorusEmbedding,
    H: HamiltonianPoly,
    grid_size: int,
    p: float = 1.0,
    weights: np.ndarray | None = None,
) -> float:
    """
    ``sup_θ ‖(ω·∂_θ)Emb(θ) − X_H(Emb(θ))‖`` over a uniform grid, with the tangent blocks in the max norm and the
    normal blocks in ``h_p``.

    Raises:
        ValueError: if ``grid_size`` does not resolve twice the Fourier support of the embedding.
    """
    support = embedding.support()
    if grid_size < 2 * support:
        raise ValueError(f"Grid of {grid_size} points does not resolve Fourier support {support}")
    theta = angle_grid(embedding.n_angles, grid_size)
    point = embedding(theta)
    lhs = embedding.flow_derivative(theta)
    rhs = hamiltonian_vector_field(H, point)
    tangent = np.maximum(np.abs(lhs.x - rhs.x).max(axis=-1), np.abs(lhs.y - rhs.y).max(axis=-1))
    normal = np.maximum(hp_norm(lhs.z - rhs.z, p, weights), hp_norm(lhs.zbar - rhs.zbar, p, weights))
    residual = float(np.maximum(tangent, normal).max())
    logger.debug(f"Torus residual {residual:.3e} on {grid_size}^{embedding.n_angles} angles")
    return residual

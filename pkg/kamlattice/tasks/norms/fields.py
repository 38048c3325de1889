import logging
from dataclasses import dataclass

import numpy as np

from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.algebra.types import Variable, multi_l1
from kamlattice.tasks.norms.sequence import hp_norm
from kamlattice.tasks.norms.types import NormContext

logger = logging.getLogger(__name__)


@dataclass
class VectorFieldPoly:
    """
    Polynomial vector field ``W = (X, Y, Z, Z̄)``: one polynomial per angle, action and normal site.
    Missing entries are zero.
    """
    n_angles: int
    x: dict[int, HamiltonianPoly]
    y: dict[int, HamiltonianPoly]
    z: dict[int, HamiltonianPoly]
    zbar: dict[int, HamiltonianPoly]

    @classmethod
    def from_hamiltonian(cls, H: HamiltonianPoly) -> "VectorFieldPoly":
        """``X_H = (∂_y H, −∂_x H, −i ∂_z̄ H, i ∂_z H)``."""
        n = H.n_angles
        x = {i: H.derivative(Variable.Y, i) for i in range(n)}
        y = {i: -H.derivative(Variable.X, i) for i in range(n)}
        sites = sorted(H.sites())
        z = {s: H.derivative(Variable.ZBAR, s).scale(-1j) for s in sites}
        zbar = {s: H.derivative(Variable.Z, s).scale(1j) for s in sites}
        return cls(n, *(_drop_zero(part) for part in (x, y, z, zbar)))

    @classmethod
    def constant(cls, n_angles: int, x: np.ndarray | None = None, y: np.ndarray | None = None) -> "VectorFieldPoly":
        xs = {} if x is None else {i: HamiltonianPoly.constant(n_angles, v) for i, v in enumerate(x) if v != 0}
        ys = {} if y is None else {i: HamiltonianPoly.constant(n_angles, v) for i, v in enumerate(y) if v != 0}
        return cls(n_angles, xs, ys, {}, {})

    def scale(self, factor: complex) -> "VectorFieldPoly":
        def scaled(part):
            return {i: p.scale(factor) for i, p in part.items()}
        return VectorFieldPoly(self.n_angles, scaled(self.x), scaled(self.y), scaled(self.z), scaled(self.zbar))

    def sites(self) -> set[int]:
        out = set(self.z) | set(self.zbar)
        for part in (self.x, self.y, self.z, self.zbar):
            for poly in part.values():
                out |= poly.sites()
        return out


def _drop_zero(part: dict[int, HamiltonianPoly]) -> dict[int, HamiltonianPoly]:
    return {i: p for i, p in part.items() if not p.is_zero()}


def _fourier_energy(poly: HamiltonianPoly, y: np.ndarray, z: np.ndarray, s: float) -> np.ndarray:
    """
    ``Σ_k |f̂(k; y, z, z)|² e^{2|k|s}`` of the majorant of ``poly`` at nonnegative samples.
    ``y`` has shape ``(S, N)`` and ``z`` shape ``(S, n_sites)``; returns shape ``(S,)``.
    """
    buckets: dict[tuple[int, ...], np.ndarray] = {}
    samples = y.shape[0]
    for key, c in poly.items():
        value = np.full(samples, abs(c))
        for i, g in enumerate(key.gamma):
            if g:
                value = value * y[:, i] ** g
        for site, power in key.alpha:
            value = value * z[:, site] ** power
        for site, power in key.beta:
            value = value * z[:, site] ** power
        buckets[key.k] = buckets.get(key.k, 0.0) + value
    total = np.zeros(samples)
    for k, value in buckets.items():
        total += value ** 2 * np.exp(2.0 * multi_l1(k) * s)
    return total


def sample_domain(
    n_angles: int,
    weights: np.ndarray,
    ctx: NormContext,
    samples: int,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Nonnegative boundary samples ``|y| = r²`` and ``‖z‖_p = r`` of the domain ``D_p(s, r)``.
    """
    if samples <= 0:
        raise ValueError("The sample grid of the triple norm is empty")
    rng = np.random.default_rng(seed)
    y = np.abs(rng.standard_normal((samples, n_angles)))
    norms = np.linalg.norm(y, axis=1, keepdims=True)
    y = np.where(norms > 0, y / np.where(norms > 0, norms, 1.0), 0.0) * ctx.r ** 2
    z = np.abs(rng.standard_normal((samples, len(weights))))
    z = z / hp_norm(z, ctx.p, weights)[:, None] * ctx.r
    return y, z


def vf_triple_norm(
    W: VectorFieldPoly | HamiltonianPoly,
    ctx: NormContext,
    weights: np.ndarray,
    samples: int = 16,
    seed: int = 0,
    target_exponent: float | None = None,
) -> float:
    """
    Sampled triple norm ``sqrt(|X|² + |Y|² + ‖Z‖_q² + ‖Z̄‖_q²)`` of the majorant of a polynomial field.

    Fourier sums are exact; the sup over ``(y, z, z̄)`` is taken over boundary samples of
    ``D_p(s, r)``. Majorant coefficients are nonnegative, so the sup is attained on the boundary
    with ``z̄ = z`` real.

    Args:
        W: Vector field, or a Hamiltonian whose field is measured.
        ctx: Exponents and domain.
        weights: ``|j|`` of every lattice site, indexed like the polynomial sites.
        samples: Number of boundary draws.
        seed: Seed of the draws.
        target_exponent: Exponent of the normal components (defaults to ``ctx.q``).

    Raises:
        ValueError: if ``samples`` is not positive.
    """
    field = VectorFieldPoly.from_hamiltonian(W) if isinstance(W, HamiltonianPoly) else W
    weights = np.asarray(weights, dtype=float)
    exponent = ctx.q if target_exponent is None else target_exponent
    y, z = sample_domain(field.n_angles, weights, ctx, samples, seed)

    def block(part: dict[int, HamiltonianPoly], site_weights: bool) -> np.ndarray:
        total = np.zeros(samples)
        for i, poly in part.items():
            energy = _fourier_energy(poly, y, z, ctx.s)
            if site_weights:
                energy = energy * max(weights[i], 1.0) ** (2 * exponent)
            total += energy
        return total

    components = [
        block(field.x, False),
        block(field.y, False),
        block(field.z, True),
        block(field.zbar, True),
    ]
    sup = [float(np.sqrt(c.max())) for c in components]
    value = float(np.sqrt(sum(v * v for v in sup)))
    logger.debug(f"Triple norm components {sup} -> {value:.3e} (sampled, {samples} draws)")
    return value

import logging
from dataclasses import dataclass, field

import numpy as np

from kamlattice.tasks.algebra.bracket import poisson_bracket
from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.algebra.types import PhasePoint, Variable
from kamlattice.tasks.exceptions import NonConvergenceError

logger = logging.getLogger(__name__)


@dataclass
class LieSeries:
    """Result of a truncated Lie series together with its convergence diagnostics."""
    poly: HamiltonianPoly
    terms_used: int
    term_norms: list[float] = field(default_factory=list)
    remainder_estimate: float = 0.0


def lie_series(
    H: HamiltonianPoly,
    F: HamiltonianPoly,
    order: int = 6,
    max_y_degree: int | None = None,
    max_z_degree: int | None = None,
    fourier_radius: float | None = None,
    radius: float = 1.0,
    width: float = 0.0,
    tol: float = 1e-16,
) -> LieSeries:
    """
    Evaluate ``exp(ad_F) H = Σ_{n ≤ order} ad_F^n H / n!`` with ``ad_F H = {H, F}``.

    Term sizes are measured by the majorant norm on the polydisc of the given radius and
    Fourier width. The series stops early once a term drops below ``tol`` times the size
    of ``H``; the size of the first dropped term is reported as remainder estimate.

    Raises:
        NonConvergenceError: if a term (n ≥ 2) is larger than its predecessor.
    """
    if order < 1:
        raise ValueError(f"Lie series order must be at least 1, got {order}")
    caps = dict(max_y_degree=max_y_degree, max_z_degree=max_z_degree, fourier_radius=fourier_radius)
    result = H.truncate(max_y_degree, max_z_degree)
    if fourier_radius is not None:
        result = result.cutoff(fourier_radius)
    if F.is_zero() or H.is_zero():
        return LieSeries(result, 0)

    scale = max(H.weighted_norm(radius, width), np.finfo(float).tiny)
    term = H
    norms: list[float] = []
    for n in range(1, order + 2):
        term = poisson_bracket(term, F, **caps).scale(1.0 / n)
        size = term.weighted_norm(radius, width)
        if n == order + 1:
            logger.debug(f"Lie series stopped at order {order}, next term size {size:.3e}")
            return LieSeries(result, order, norms, size)
        if norms and size > norms[-1] and size > tol * scale:
            raise NonConvergenceError(
                f"Lie series term {n} grows: {size:.3e} > {norms[-1]:.3e}",
                diagnostics={"term_norms": norms + [size], "order": n},
            )
        norms.append(size)
        if term.is_zero() or size <= tol * scale:
            return LieSeries(result.iadd(term), n, norms, 0.0 if term.is_zero() else size)
        result.iadd(term)
    return LieSeries(result, order, norms, 0.0)


def lie_transform(
    H: HamiltonianPoly,
    F: HamiltonianPoly,
    order: int = 6,
    max_y_degree: int | None = None,
    max_z_degree: int | None = None,
    fourier_radius: float | None = None,
    radius: float = 1.0,
    width: float = 0.0,
) -> HamiltonianPoly:
    """``H ∘ Φ_F`` where ``Φ_F`` is the canonical map generated by the Lie series of ``F``, truncated to the given caps."""
    return lie_series(
        H, F, order,
        max_y_degree=max_y_degree,
        max_z_degree=max_z_degree,
        fourier_radius=fourier_radius,
        radius=radius,
        width=width,
    ).poly


def coordinate_bracket(variable: Variable, index: int, F: HamiltonianPoly) -> HamiltonianPoly:
    """``{c, F}`` for a coordinate function ``c``; the angle case avoids representing ``x`` itself."""
    match variable:
        case Variable.X:
            return -F.derivative(Variable.Y, index)
        case Variable.Y:
            return F.derivative(Variable.X, index)
        case Variable.Z:
            return F.derivative(Variable.ZBAR, index).scale(1j)
        case Variable.ZBAR:
            return F.derivative(Variable.Z, index).scale(-1j)


@dataclass
class CoordinateMap:
    """
    Canonical map generated by the Lie series of a Hamiltonian, acting on coordinates.

    Each coordinate ``c`` is sent to ``c + displacement[c]`` where the displacement is the Lie
    series ``Σ_{n≥1} ad_F^n c / n!`` truncated at ``order``. Angles keep their identity part
    implicitly, so ``x ∘ Φ = x + polynomial``.
    """
    n_angles: int
    sites: tuple[int, ...]
    displacement: dict[tuple[Variable, int], HamiltonianPoly]

    @classmethod
    def identity(cls, n_angles: int, sites: tuple[int, ...]) -> "CoordinateMap":
        return cls(n_angles, tuple(sites), {})

    @classmethod
    def from_generator(
        cls,
        F: HamiltonianPoly,
        sites: tuple[int, ...],
        order: int = 6,
        max_y_degree: int | None = None,
        max_z_degree: int | None = None,
        fourier_radius: float | None = None,
    ) -> "CoordinateMap":
        n_angles = F.n_angles
        displacement: dict[tuple[Variable, int], HamiltonianPoly] = {}
        coordinates = [(Variable.X, i) for i in range(n_angles)] + [(Variable.Y, i) for i in range(n_angles)]
        coordinates += [(Variable.Z, s) for s in sites] + [(Variable.ZBAR, s) for s in sites]
        for variable, index in coordinates:
            term = coordinate_bracket(variable, index, F)
            total = term.copy()
            for n in range(2, order + 1):
                if term.is_zero():
                    break
                term = poisson_bracket(
                    term, F,
                    max_y_degree=max_y_degree,
                    max_z_degree=max_z_degree,
                    fourier_radius=fourier_radius,
                ).scale(1.0 / n)
                total.iadd(term)
            if not total.is_zero():
                displacement[(variable, index)] = total
        return cls(n_angles, tuple(sites), displacement)

    def __call__(self, point: PhasePoint) -> PhasePoint:
        x, y, z, zbar = (np.array(a, dtype=complex) for a in point)
        out = [x.copy(), y.copy(), z.copy(), zbar.copy()]
        slots = {Variable.X: 0, Variable.Y: 1, Variable.Z: 2, Variable.ZBAR: 3}
        for (variable, index), poly in self.displacement.items():
            out[slots[variable]][..., index] += poly.evaluate(PhasePoint(x, y, z, zbar))
        return PhasePoint(*out)

    def jacobian(self, point: PhasePoint) -> np.ndarray:
        """
        Jacobian of the map at a single point, rows and columns ordered as
        ``(x, y, z_sites, z̄_sites)``.
        """
        n = self.n_angles
        m = len(self.sites)
        size = 2 * n + 2 * m
        J = np.eye(size, dtype=complex)
        site_pos = {s: i for i, s in enumerate(self.sites)}
        offsets = {Variable.X: 0, Variable.Y: n, Variable.Z: 2 * n, Variable.ZBAR: 2 * n + m}
        for (variable, index), poly in self.displacement.items():
            row = offsets[variable] + (index if variable in (Variable.X, Variable.Y) else site_pos[index])
            grad = poly.gradient(point)
            J[row, :n] += grad.x
            J[row, n:2 * n] += grad.y
            sites = list(self.sites)
            J[row, 2 * n:2 * n + m] += grad.z[..., sites]
            J[row, 2 * n + m:] += grad.zbar[..., sites]
        return J

    def to_json(self) -> dict:
        return {
            "n_angles": self.n_angles,
            "sites": list(self.sites),
            "displacement": [
                {"variable": variable.value, "index": index, "poly": poly.to_json()}
                for (variable, index), poly in self.displacement.items()
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "CoordinateMap":
        displacement = {
            (Variable(entry["variable"]), int(entry["index"])): HamiltonianPoly.from_json(entry["poly"])
            for entry in data["displacement"]
        }
        return cls(int(data["n_angles"]), tuple(data["sites"]), displacement)


@dataclass
class ComposedMap:
    """
    Composition ``Φ_0 ∘ Φ_1 ∘ ... ∘ Φ_{M-1}``: a point is pushed through the last map first.
    """
    maps: list[CoordinateMap]

    def __call__(self, point: PhasePoint) -> PhasePoint:
        for cmap in reversed(self.maps):
            point = cmap(point)
        return point

    def jacobian(self, point: PhasePoint) -> np.ndarray:
        if not self.maps:
            raise ValueError("Empty composition has no fixed coordinate layout")
        J = None
        for cmap in reversed(self.maps):
            local = cmap.jacobian(point)
            J = local if J is None else local @ J
            point = cmap(point)
        return J

    def to_json(self) -> dict:
        return {"maps": [cmap.to_json() for cmap in self.maps]}

    @classmethod
    def from_json(cls, data: dict) -> "ComposedMap":
        return cls([CoordinateMap.from_json(entry) for entry in data["maps"]])


def poisson_tensor(n_angles: int, n_sites: int) -> np.ndarray:
    """
    Matrix ``Π`` with ``{f, g} = ∇f · Π · ∇g`` in the ``(x, y, z, z̄)`` ordering.
    """
    size = 2 * n_angles + 2 * n_sites
    P = np.zeros((size, size), dtype=complex)
    for i in range(n_angles):
        P[n_angles + i, i] = 1.0
        P[i, n_angles + i] = -1.0
    for j in range(n_sites):
        zi = 2 * n_angles + j
        zbi = 2 * n_angles + n_sites + j
        P[zi, zbi] = 1j
        P[zbi, zi] = -1j
    return P

import logging
from dataclasses import dataclass, field

import numpy as np

from kamlattice.tasks.algebra.lie import ComposedMap, CoordinateMap, poisson_tensor
from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.algebra.types import PhasePoint

logger = logging.getLogger(__name__)

AUDIT_TOLERANCE = 1e-12


@dataclass
class AuditResult:
    """Outcome of one audit: pass flag, the largest violation measured and free-form details."""
    name: str
    passed: bool
    violation: float
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "violation": self.violation, "details": self.details}

    @classmethod
    def from_json(cls, data: dict) -> "AuditResult":
        return cls(data["name"], bool(data["passed"]), float(data["violation"]), data.get("details", {}))


def random_real_points(
    rng: np.random.Generator,
    count: int,
    n_angles: int,
    n_sites: int,
    radius: float = 0.1,
) -> PhasePoint:
    """Points of the real subspace: real ``(x, y)``, ``z`` in a polydisc of ``radius`` and ``z̄ = conj(z)``."""
    x = rng.uniform(0.0, 2.0 * np.pi, size=(count, n_angles))
    y = rng.uniform(-radius ** 2, radius ** 2, size=(count, n_angles))
    z = radius * (rng.uniform(-1.0, 1.0, size=(count, n_sites)) + 1j * rng.uniform(-1.0, 1.0, size=(count, n_sites)))
    return PhasePoint(x.astype(complex), y.astype(complex), z, np.conj(z))


def reality_audit(
    H: HamiltonianPoly,
    samples: int = 64,
    seed: int = 0,
    radius: float = 0.1,
    tol: float = AUDIT_TOLERANCE,
) -> AuditResult:
    """
    Check that ``H`` is real on the real subspace, by sampling and coefficientwise through
    ``R̄(x,y,z,z̄) = R(x,y,z̄,z)``.
    """
    rng = np.random.default_rng(seed)
    n_sites = max(H.sites(), default=-1) + 1
    points = random_real_points(rng, samples, H.n_angles, n_sites, radius)
    values = np.atleast_1d(H.evaluate(points))
    sampled = float(np.abs(values.imag).max(initial=0.0))
    coefficients = H.reality_defect()
    scale = max(1.0, H.max_abs())
    passed = sampled <= tol * scale and coefficients <= tol * scale
    if not passed:
        logger.warning(f"Reality audit failed: sampled |Im H| {sampled:.3e}, coefficient defect {coefficients:.3e}")
    return AuditResult(
        "reality",
        passed,
        max(sampled, coefficients),
        {"sampled": sampled, "coefficients": coefficients, "samples": samples, "seed": seed},
    )


def _layout(transform: CoordinateMap | ComposedMap) -> tuple[int, tuple[int, ...]]:
    match transform:
        case CoordinateMap():
            return transform.n_angles, transform.sites
        case ComposedMap(maps=[first, *_]):
            return first.n_angles, first.sites
        case _:
            raise ValueError(f"Cannot audit a transform of type {type(transform).__name__}")


def symplectic_audit(
    transform: CoordinateMap | ComposedMap,
    sample_count: int = 8,
    seed: int = 0,
    radius: float = 0.05,
    tol: float = 1e-8,
) -> AuditResult:
    """
    Largest distortion ``|{Φ_a, Φ_b} − {a, b}|`` over coordinate pairs at random real points, computed as
    ``max |DΦ Π DΦᵀ − Π|``.
    """
    n_angles, sites = _layout(transform)
    n_sites = max(sites, default=-1) + 1
    rng = np.random.default_rng(seed)
    points = random_real_points(rng, sample_count, n_angles, n_sites, radius)
    Pi = poisson_tensor(n_angles, len(sites))
    worst = 0.0
    for i in range(sample_count):
        point = PhasePoint(points.x[i], points.y[i], points.z[i], points.zbar[i])
        D = transform.jacobian(point)
        worst = max(worst, float(np.abs(D @ Pi @ D.T - Pi).max()))
    logger.debug(f"Symplectic audit over {sample_count} points: distortion {worst:.3e}")
    return AuditResult("symplectic", worst <= tol, worst, {"samples": sample_count, "seed": seed, "radius": radius})

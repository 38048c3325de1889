import logging
from dataclasses import dataclass, field

import numpy as np

from kamlattice.tasks.algebra.lie import ComposedMap, CoordinateMap
from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.verify.audits import AuditResult, reality_audit, symplectic_audit
from kamlattice.tasks.verify.stability import norm_conservation
from kamlattice.tasks.verify.torus import TorusEmbedding, torus_residual

logger = logging.getLogger(__name__)


def _pairs(matrix: np.ndarray) -> list:
    return [[[c.real, c.imag] for c in row] for row in np.asarray(matrix, dtype=complex)]


def _from_pairs(data: list) -> np.ndarray:
    pairs = np.asarray(data, dtype=float)
    if pairs.size == 0:
        return np.zeros((0, 0), dtype=complex)
    return pairs[..., 0] + 1j * pairs[..., 1]


@dataclass
class TorusRecord:
    """
    Everything the audits need about one torus, so that they can be re-run without solving anything.

    ``hamiltonian`` is the truncated Hamiltonian the torus should be invariant for, ``transform`` the
    composed canonical map whose image of ``{y = 0, z = 0}`` the embedding samples, ``B`` the limit operator
    over the normal sites and ``epsilon`` the schedule size of the last step reached.
    """
    sample: int
    xi: np.ndarray
    omega: np.ndarray
    omega0: np.ndarray
    lam: np.ndarray
    B: np.ndarray
    epsilon: float
    embedding: TorusEmbedding
    hamiltonian: HamiltonianPoly
    transform: ComposedMap
    weights: np.ndarray

    def to_json(self) -> dict:
        return {
            "sample": self.sample,
            "xi": np.asarray(self.xi).tolist(),
            "omega": np.asarray(self.omega).tolist(),
            "omega0": np.asarray(self.omega0).tolist(),
            "lam": np.asarray(self.lam).tolist(),
            "B": _pairs(self.B),
            "epsilon": self.epsilon,
            "embedding": self.embedding.to_json(),
            "hamiltonian": self.hamiltonian.to_json(),
            "transform": self.transform.to_json(),
            "weights": np.asarray(self.weights).tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "TorusRecord":
        lam = np.asarray(data["lam"], dtype=float)
        return cls(
            sample=int(data["sample"]),
            xi=np.asarray(data["xi"], dtype=float),
            omega=np.asarray(data["omega"], dtype=float),
            omega0=np.asarray(data["omega0"], dtype=float),
            lam=lam,
            B=_from_pairs(data["B"]).reshape(len(lam), len(lam)),
            epsilon=float(data["epsilon"]),
            embedding=TorusEmbedding.from_json(data["embedding"]),
            hamiltonian=HamiltonianPoly.from_json(data["hamiltonian"]),
            transform=ComposedMap.from_json(data["transform"]),
            weights=np.asarray(data["weights"], dtype=float),
        )


@dataclass(frozen=True)
class VerificationSettings:
    grid: int = 16
    norm_p: float = 1.0
    horizon: float = 1e3
    dt: float = 1e-2
    audit_samples: int = 8
    seed: int = 0
    residual_factor: float = 10.0
    residual_floor: float = 1e-12
    drift_tol: float = 1e-9
    symplectic_tol: float = 1e-8
    reality_tol: float = 1e-12


@dataclass
class VerificationReport:
    """Audit numbers of one torus and the pass flag of each check."""
    residual: float
    residual_bound: float
    drift: float
    reality: AuditResult
    symplectic: AuditResult
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def numbers(self) -> dict[str, float]:
        return {
            "residual": self.residual,
            "drift": self.drift,
            "reality": self.reality.violation,
            "symplectic": self.symplectic.violation,
        }

    def to_json(self) -> dict:
        return {
            "residual": self.residual,
            "residual_bound": self.residual_bound,
            "drift": self.drift,
            "reality": self.reality.to_json(),
            "symplectic": self.symplectic.to_json(),
            "checks": self.checks,
            "passed": self.passed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "VerificationReport":
        return cls(
            float(data["residual"]),
            float(data["residual_bound"]),
            float(data["drift"]),
            AuditResult.from_json(data["reality"]),
            AuditResult.from_json(data["symplectic"]),
            dict(data.get("checks", {})),
        )


def initial_condition(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    z0 = rng.normal(size=n) + 1j * rng.normal(size=n)
    return z0 / max(np.linalg.norm(z0), 1.0)


def verify_torus(record: TorusRecord, settings: VerificationSettings = VerificationSettings()) -> VerificationReport:
    """
    Run every audit on a persisted torus: invariance residual, norm conservation of the reduced linear
    flow, reality of the truncated Hamiltonian and symplecticity of the composed transform.
    """
    residual = torus_residual(record.embedding, record.hamiltonian, settings.grid, settings.norm_p, record.weights)
    bound = max(settings.residual_factor * record.epsilon, settings.residual_floor)
    z0 = initial_condition(len(record.lam), settings.seed)
    drift = norm_conservation(record.B, record.lam, z0, settings.horizon, settings.dt) if len(record.lam) else 0.0
    reality = reality_audit(record.hamiltonian, samples=8 * settings.audit_samples, seed=settings.seed, tol=settings.reality_tol)
    if record.transform.maps:
        symplectic = symplectic_audit(record.transform, settings.audit_samples, settings.seed, tol=settings.symplectic_tol)
    else:
        identity = CoordinateMap.identity(record.embedding.n_angles, tuple(range(record.embedding.n_sites)))
        symplectic = symplectic_audit(identity, settings.audit_samples, settings.seed, tol=settings.symplectic_tol)
    checks = {
        "residual": residual <= bound,
        "stability": drift <= settings.drift_tol,
        "reality": reality.passed,
        "symplectic": symplectic.passed,
    }
    report = VerificationReport(residual, bound, drift, reality, symplectic, checks)
    logger.info(
        f"Torus of sample {record.sample}: residual {residual:.3e} (bound {bound:.3e}), drift {drift:.3e}, "
        f"reality {reality.violation:.3e}, symplectic {symplectic.violation:.3e}"
    )
    return report

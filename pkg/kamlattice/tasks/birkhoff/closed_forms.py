import logging
from dataclasses import dataclass, field

import numpy as np

from kamlattice.tasks.exceptions import ConfigurationError
from kamlattice.tasks.model.assumptions import directional_derivative_margin
from kamlattice.tasks.model.bbm import bbm_normal_frequency
from kamlattice.tasks.model.gpc import gpc_eigenvalue
from kamlattice.tasks.model.types import Equation, FrequencyMap, FrequencyModel, Site

logger = logging.getLogger(__name__)

DETERMINANT_FLOOR = 1e-14


def resonant_quartic_bbm(k: int, l: int, tau: float, T: float) -> float:
    """
    Resonant quartic coefficient ``Ḡ_{kl}`` of the BBM normal form.

    ``1 / (12T(τ²k² + 1))`` on the diagonal and
    ``−(1/T) τ²kl / ([τ²(k²+kl+l²) + 3][τ²(k²−kl+l²) + 3])`` off it.
    """
    if k < 1 or l < 1:
        raise ValueError(f"Resonant coefficients are indexed by positive modes, got ({k}, {l})")
    t2 = tau * tau
    if k == l:
        return 1.0 / (12.0 * T * (t2 * k * k + 1.0))
    return -(1.0 / T) * t2 * k * l / ((t2 * (k * k + k * l + l * l) + 3.0) * (t2 * (k * k - k * l + l * l) + 3.0))


def _bbm_pair(k: int, l: int, tau: float, T: float) -> float:
    t2 = tau * tau
    return -(2.0 / T) * t2 * k * l / ((t2 * (k * k + k * l + l * l) + 3.0) * (t2 * (k * k - k * l + l * l) + 3.0))


def bbm_twist_matrix(tau: float, T: float, J: tuple[int, ...]) -> np.ndarray:
    """Twist ``𝓑 = 2Ḡ_{JJ}``: ``1/(6T(τ²j²+1))`` on the diagonal, twice the off-diagonal ``Ḡ`` elsewhere."""
    n = len(J)
    twist = np.zeros((n, n))
    for a, ja in enumerate(J):
        for b, jb in enumerate(J):
            twist[a, b] = 1.0 / (6.0 * T * (tau * tau * ja * ja + 1.0)) if a == b else _bbm_pair(ja, jb, tau, T)
    return twist


def bbm_coupling_matrix(tau: float, T: float, J: tuple[int, ...], normal: tuple[int, ...]) -> np.ndarray:
    """Coupling ``S`` (rows: normal modes, columns: tangent modes), ``S_{kj} = 2Ḡ_{kj}``."""
    overlap = set(J).intersection(normal)
    if overlap:
        raise ConfigurationError(f"Normal modes overlap the tangent sites: {sorted(overlap)}")
    return np.array([[_bbm_pair(k, j, tau, T) for j in J] for k in normal]).reshape(len(normal), len(J))


def gpc_constants(d: int) -> tuple[float, float]:
    """``a = (3/8)^d`` and ``b = (5/8)^d − a``."""
    if d < 1:
        raise ValueError(f"Dimension must be at least 1, got {d}")
    a = (3.0 / 8.0) ** d
    return a, (5.0 / 8.0) ** d - a


@dataclass
class TwistReport:
    """
    Twist and coupling matrices with determinant diagnostics.

    ``det_reference`` is the determinant of the equicorrelated limit ``(a−b)^{N−1}(a+(N−1)b)``;
    ``det_quoted`` is ``(a−b)^{N−1}(a+4b)``, which only coincides with it for ``N = 5``.
    """
    twist: np.ndarray
    coupling: np.ndarray
    det: float
    condition: float
    det_reference: float | None = None
    det_quoted: float | None = None
    scale: float = 1.0

    @property
    def reference_defect(self) -> float | None:
        if self.det_reference is None:
            return None
        return abs(self.det - self.det_reference) / abs(self.det_reference)

    @property
    def quoted_defect(self) -> float | None:
        if self.det_quoted is None:
            return None
        return abs(self.det - self.det_quoted) / abs(self.det_quoted)

    def to_json(self) -> dict:
        return {
            "twist": self.twist.tolist(),
            "coupling": self.coupling.tolist(),
            "det": self.det,
            "condition": self.condition,
            "det_reference": self.det_reference,
            "det_quoted": self.det_quoted,
            "reference_defect": self.reference_defect,
            "quoted_defect": self.quoted_defect,
            "scale": self.scale,
        }


def _gpc_pair(lam_a: float, lam_b: float, b: float) -> float:
    return 0.5 * b * (np.sqrt(lam_a / lam_b) + np.sqrt(lam_b / lam_a))


def gpc_twist_matrix(tau: tuple[float, ...], J: tuple[Site, ...], normal: tuple[Site, ...] = ()) -> TwistReport:
    """
    gPC twist ``B`` (``a`` on the diagonal, ``½b(√(λ_k/λ_l) + √(λ_l/λ_k))`` off it) and coupling ``S`` with
    the same pair formula, rows over ``normal``. The determinant is measured against both closed forms.

    The frequency shift is ``T·B ζ`` with ``T = Π T_i``; ``scale`` records ``T`` and the matrices are unscaled.
    """
    d = len(tau)
    a, b = gpc_constants(d)
    lam_J = [gpc_eigenvalue(s, tau) for s in J]
    n = len(J)
    twist = np.array([[a if i == k else _gpc_pair(lam_J[i], lam_J[k], b) for k in range(n)] for i in range(n)]).reshape(n, n)
    coupling = np.array([[_gpc_pair(gpc_eigenvalue(s, tau), lj, b) for lj in lam_J] for s in normal]).reshape(len(normal), n)
    det = float(np.linalg.det(twist))
    report = TwistReport(
        twist,
        coupling,
        det,
        float(np.linalg.cond(twist)),
        (a - b) ** (n - 1) * (a + (n - 1) * b),
        (a - b) ** (n - 1) * (a + 4 * b),
        float(np.prod([2.0 * np.pi / t for t in tau])),
    )
    logger.debug(
        f"gPC twist over {n} sites: det {det:.6e}, reference {report.det_reference:.6e} "
        f"(defect {report.reference_defect:.2e}), quoted {report.det_quoted:.6e} (defect {report.quoted_defect:.2e})"
    )
    return report


def twist_frequency_map(lam_tangent: np.ndarray, lam_normal: np.ndarray, twist: np.ndarray, coupling: np.ndarray) -> FrequencyMap:
    """
    Frequency maps in the parameter ``ξ = λ^{(N)} + 𝓑ζ``: ``ω⁰(ξ) = ξ`` and
    ``Ω⁰(ξ) = λ^∞ − S𝓑⁻¹λ^{(N)} + S𝓑⁻¹ξ``.

    Raises:
        ConfigurationError: if the twist matrix is singular.
    """
    twist = np.asarray(twist, dtype=float)
    N = twist.shape[0]
    det = np.linalg.det(twist)
    if abs(det) < DETERMINANT_FLOOR:
        raise ConfigurationError(f"Twist matrix is singular (det = {det:.3e})")
    logger.debug(f"Twist solve: det {det:.3e}, condition number {np.linalg.cond(twist):.3e}")
    SBinv = np.linalg.solve(twist.T, np.asarray(coupling, dtype=float).T).T
    return FrequencyMap(
        np.zeros(N),
        np.eye(N),
        np.asarray(lam_normal, dtype=float) - SBinv @ np.asarray(lam_tangent, dtype=float),
        SBinv,
    )


def closed_form_twist(model: FrequencyModel, J: tuple[Site, ...] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """
    Closed-form twist and coupling of a model for the tangent set ``J`` (default the model's), scaled so that
    the frequency shift reads ``twist·ζ``. Normal rows are the model sites outside ``J``.
    """
    J = model.tangent_sites if J is None else tuple(tuple(s) for s in J)
    normal = tuple(s for s in model.sites if s not in set(J))
    match model.equation:
        case Equation.BBM:
            tau, T = model.tau[0], model.period[0]
            flat_J = tuple(s[0] for s in J)
            flat_normal = tuple(s[0] for s in normal)
            return bbm_twist_matrix(tau, T, flat_J), bbm_coupling_matrix(tau, T, flat_J, flat_normal)
        case Equation.GPC:
            report = gpc_twist_matrix(model.tau, J, normal)
            return report.scale * report.twist, report.scale * report.coupling
        case _:
            raise ValueError(f"Unsupported equation: {model.equation}")


def _frequencies(model: FrequencyModel, sites: tuple[Site, ...]) -> np.ndarray:
    match model.equation:
        case Equation.BBM:
            return np.array([bbm_normal_frequency(s[0], model.tau[0]) for s in sites])
        case Equation.GPC:
            return np.sqrt([gpc_eigenvalue(s, model.tau) for s in sites])
        case _:
            raise ValueError(f"Unsupported equation: {model.equation}")


@dataclass
class TangentCandidate:
    J: tuple[Site, ...]
    margin: float
    worst_k: tuple[int, ...]
    det: float
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"J": [list(s) for s in self.J], "margin": self.margin, "worst_k": list(self.worst_k), "det": self.det, **self.detail}


def scan_tangent_sites(model: FrequencyModel, candidates: list[tuple[Site, ...]], K: int = 8) -> list[TangentCandidate]:
    """
    Rank candidate tangent sets by the directional-derivative margin of their closed-form frequency maps,
    best first. Candidates with a singular twist are reported with margin ``-inf``.
    """
    ranked = []
    for J in candidates:
        J = tuple(tuple(int(v) for v in s) for s in J)
        normal = tuple(s for s in model.sites if s not in set(J))
        twist, coupling = closed_form_twist(model, J)
        det = float(np.linalg.det(twist))
        try:
            fmap = twist_frequency_map(_frequencies(model, J), _frequencies(model, normal), twist, coupling)
        except ConfigurationError as e:
            logger.warning(f"Candidate {J} rejected: {e}")
            ranked.append(TangentCandidate(J, float("-inf"), (), det))
            continue
        margin, k = directional_derivative_margin(fmap, K)
        ranked.append(TangentCandidate(J, margin, k, det, {"coupling_norm": float(np.abs(fmap.normal_matrix).max(initial=0.0))}))
    ranked.sort(key=lambda c: c.margin, reverse=True)
    if ranked:
        logger.info(f"Best tangent set {ranked[0].J} with margin {ranked[0].margin:.3e} among {len(ranked)} candidates")
    return ranked

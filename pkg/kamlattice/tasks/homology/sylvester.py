import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg

from kamlattice.tasks.exceptions import ContractionError, NonConvergenceError, SolverNotApplicableError
from kamlattice.tasks.norms.sequence import majorant

logger = logging.getLogger(__name__)

GAUSS_NODES = 8
MAX_DOUBLINGS = 8
MAX_PANELS = 4096


def _hermitian_floor(A: np.ndarray) -> tuple[float, float]:
    """Smallest and largest eigenvalue of the Hermitian part ``(A + A*)/2``."""
    eigs = linalg.eigvalsh(0.5 * (A + A.conj().T))
    return float(eigs[0]), float(eigs[-1])


class SylvesterIntegralOperator:
    """
    Solver of ``M X + X N = Y`` by the exponential integral ``X = ∫₀^∞ e^{−tM} Y e^{−tN} dt``.

    Applicable when ``μ = μ_M + μ_N > 0``, with ``μ_A`` the smallest eigenvalue of the Hermitian
    part of ``A``; then ``‖e^{−tM} Y e^{−tN}‖ ≤ e^{−μt}‖Y‖``. When only the negated equation is
    applicable (``−M X − X N = −Y``) the operator flips the sign internally. The integral is
    cut at ``T* = log(10/(tol·min(μ,1)))/μ``, where the truncation defect ``e^{−TM}Ye^{−TN}``
    is below ``tol/10`` relative to ``‖Y‖``, and evaluated by composite Gauss–Legendre
    quadrature, doubling the panel count until the relative residual is below ``tol``.

    Raises:
        SolverNotApplicableError: if neither sign gives a positive ``μ``.
        NonConvergenceError: from a call whose quadrature cannot bring the relative residual below ``tol``.
    """

    def __init__(self, M: np.ndarray, N: np.ndarray, tol: float = 1e-10):
        M = np.asarray(M, dtype=complex)
        N = np.asarray(N, dtype=complex)
        m_lo, m_hi = _hermitian_floor(M) if M.size else (np.inf, -np.inf)
        n_lo, n_hi = _hermitian_floor(N) if N.size else (np.inf, -np.inf)
        if m_lo + n_lo > 0:
            self.sign = 1.0
            self.mu = m_lo + n_lo
        elif -(m_hi + n_hi) > 0:
            self.sign = -1.0
            self.mu = -(m_hi + n_hi)
        else:
            raise SolverNotApplicableError(
                f"Exponential integral needs a coercive Hermitian part, got spectra [{m_lo:.3e}, {m_hi:.3e}] and [{n_lo:.3e}, {n_hi:.3e}]"
            )
        self.M = self.sign * M
        self.N = self.sign * N
        self.tol = tol
        self.scale = float(np.linalg.norm(self.M, 2) + np.linalg.norm(self.N, 2)) if M.size and N.size else 0.0
        self._cache: dict[tuple[float, int], tuple[list, list, np.ndarray, np.ndarray, np.ndarray]] = {}
        self.last_panels = 0
        self.last_residual = 0.0

    def horizon(self) -> float:
        return max(np.log(10.0 / (self.tol * min(self.mu, 1.0))) / self.mu, 1.0 / self.mu)

    def _rules(self, T: float, panels: int):
        key = (T, panels)
        if key not in self._cache:
            h = T / panels
            x, w = leggauss(GAUSS_NODES)
            offsets = 0.5 * h * (x + 1.0)
            left = [linalg.expm(-t * self.M) for t in offsets]
            right = [linalg.expm(-t * self.N) for t in offsets]
            self._cache[key] = (left, right, 0.5 * h * w, linalg.expm(-h * self.M), linalg.expm(-h * self.N))
        return self._cache[key]

    def _quadrature(self, Y: np.ndarray, T: float, panels: int) -> np.ndarray:
        left, right, weights, step_m, step_n = self._rules(T, panels)
        X = np.zeros_like(Y)
        base = Y
        for _ in range(panels):
            for L, Rr, w in zip(left, right, weights):
                X = X + w * (L @ base @ Rr)
            base = step_m @ base @ step_n
        return X

    def residual(self, X: np.ndarray, Y: np.ndarray) -> float:
        return float(np.linalg.norm(self.M @ X + X @ self.N - self.sign * Y) / max(np.linalg.norm(Y), np.finfo(float).tiny))

    def __call__(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, dtype=complex)
        if not np.any(Y):
            return np.zeros_like(Y)
        T = self.horizon()
        panels = max(2, int(np.ceil(T * self.scale / 4.0)))
        X = None
        res = np.inf
        for _ in range(MAX_DOUBLINGS):
            X = self._quadrature(self.sign * Y, T, panels)
            res = self.residual(X, Y)
            if res <= self.tol or panels >= MAX_PANELS:
                break
            panels = min(2 * panels, MAX_PANELS)
        self.last_panels = panels
        self.last_residual = res
        if res > self.tol:
            raise NonConvergenceError(
                f"Exponential integral stopped at residual {res:.3e} > {self.tol:.1e} with {panels} panels (T*={T:.3e})",
                diagnostics={"residual": res, "panels": panels, "horizon": T},
            )
        return X


def sylvester_integral(M: np.ndarray, N: np.ndarray, Y: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """``X`` with ``M X + X N = Y`` by the exponential integral; see :class:`SylvesterIntegralOperator`."""
    return SylvesterIntegralOperator(M, N, tol)(Y)


@dataclass
class PicardResult:
    solution: np.ndarray
    defects: list[float] = field(default_factory=list)
    ratio: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.defects)


def contraction_ratio(lam: np.ndarray, B: np.ndarray) -> float:
    """``‖Λ⁻¹⌊B⌉‖_{ℓ²→ℓ²}``, the quantity the k = 0 Picard scheme must keep below ½."""
    if not np.any(B):
        return 0.0
    return float(np.linalg.norm(majorant(B) / np.asarray(lam)[:, None], 2))


def sylvester_picard_k0(
    lam: np.ndarray,
    B: np.ndarray,
    B_breve: np.ndarray,
    R0: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> PicardResult:
    """
    Solve ``(Λ + B) X + X (Λ + B̆) = R₀`` by correcting with the diagonal solve ``g(Y)_ij = Y_ij/(λ_i+λ_j)``.

    Each step adds ``g`` of the running defect; the defect shrinks geometrically with ratio of
    order ``2‖Λ⁻¹B‖``.

    Raises:
        ContractionError: if ``‖Λ⁻¹⌊B⌉‖`` or ``‖Λ⁻¹⌊B̆⌉‖`` is at least ½.
        NonConvergenceError: if the defect does not drop below ``tol`` in ``max_iter`` steps.
    """
    lam = np.asarray(lam, dtype=float)
    ratio = max(contraction_ratio(lam, B), contraction_ratio(lam, np.asarray(B_breve).T))
    if ratio >= 0.5:
        raise ContractionError(f"Picard scheme needs ‖Λ⁻¹B‖ < 1/2, measured {ratio:.3e}", ratio)
    denom = lam[:, None] + lam[None, :]
    A = np.diag(lam) + B
    C = np.diag(lam) + B_breve
    R0 = np.asarray(R0, dtype=complex)
    scale = max(float(np.linalg.norm(R0)), np.finfo(float).tiny)
    X = np.zeros_like(R0)
    defect = R0
    defects: list[float] = []
    for _ in range(max_iter):
        X = X + defect / denom
        defect = R0 - A @ X - X @ C
        size = float(np.linalg.norm(defect)) / scale
        defects.append(size)
        if size <= tol:
            logger.debug(f"Picard k=0 converged in {len(defects)} steps (ratio {ratio:.3e})")
            return PicardResult(X, defects, ratio)
    raise NonConvergenceError(
        f"Picard k=0 scheme did not reach {tol:.1e} in {max_iter} steps",
        diagnostics={"defects": defects, "ratio": ratio},
    )

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from kamlattice.tasks.algebra.types import Multi
from kamlattice.tasks.exceptions import ContractionError, NonConvergenceError, SmallDivisorError, SolverNotApplicableError
from kamlattice.tasks.homology.kron import kron_vec, solve_kron, unvec, vec
from kamlattice.tasks.homology.types import (
    RESIDUAL_TOL,
    BlockPartition,
    FourierOperatorSeries,
    MelnikovSign,
    ModeTrace,
    SolveResult,
    Strategy,
)
from kamlattice.tasks.homology.sylvester import PicardResult, SylvesterIntegralOperator, sylvester_picard_k0
from kamlattice.tasks.melnikov.types import ExcisionWitness, WitnessKind

logger = logging.getLogger(__name__)

HERMITIAN_TOLERANCE = 1e-12
TAIL_MAX_SWEEPS = 100


def sylvester_operator(d: float, M: np.ndarray, N: np.ndarray, s1: int, s2: int):
    """The map ``F ↦ (d + s₁M) F + s₂ F N``."""
    def apply(F: np.ndarray) -> np.ndarray:
        return d * F + s1 * (M @ F) + s2 * (F @ N)
    return apply


def _is_hermitian(A: np.ndarray) -> bool:
    return A.size == 0 or float(np.abs(A - A.conj().T).max()) <= HERMITIAN_TOLERANCE * max(1.0, float(np.abs(A).max()))


def _eig_divisor(d: float, M: np.ndarray, N: np.ndarray, s1: int, s2: int) -> tuple[float, tuple[int, int]]:
    """Smallest ``|d + s₁μ_i + s₂ν_j|`` over eigenvalues of ``M`` and ``N`` and the attaining pair."""
    mu = linalg.eigvals(M)
    nu = linalg.eigvals(N)
    table = np.abs(d + s1 * mu[:, None] + s2 * nu[None, :])
    i, j = np.unravel_index(int(np.argmin(table)), table.shape)
    return float(table[i, j]), (int(i), int(j))


def solve_resonant_difference(
    d: float,
    M: np.ndarray,
    N: np.ndarray,
    R: np.ndarray,
    s1: int,
    s2: int,
    floor: float,
    k: Multi,
) -> tuple[np.ndarray, float]:
    """
    Eigenbasis solve of a difference-sign equation with Hermitian ``M`` and ``N``.

    Entries on resonant eigenpairs (``|d + s₁μ_i + s₂ν_j| < floor``) are set to zero and must
    carry no right-hand side.

    Raises:
        SmallDivisorError: if the right-hand side has a resonant component.
    """
    mu, U = linalg.eigh(M)
    nu, V = linalg.eigh(N)
    Rp = U.conj().T @ R @ V
    denom = d + s1 * mu[:, None] + s2 * nu[None, :]
    resonant = np.abs(denom) < floor
    scale = max(float(np.abs(R).max(initial=0.0)), np.finfo(float).tiny)
    leak = float(np.abs(Rp[resonant]).max(initial=0.0))
    if leak > 1e-10 * scale:
        i, j = np.argwhere(resonant)[np.argmax(np.abs(Rp[resonant]))]
        witness = ExcisionWitness(WitnessKind.SECOND, tuple(k), (int(i), int(j)), float(abs(denom[i, j])), floor)
        raise SmallDivisorError(f"Resonant right-hand side {leak:.3e} at k={k} cannot be solved", [witness])
    Fp = np.where(resonant, 0.0, Rp / np.where(resonant, 1.0, denom))
    divisor = float(np.abs(denom[~resonant]).min(initial=np.inf))
    return U @ Fp @ V.conj().T, divisor


@dataclass
class _TailSolver:
    """
    Green functions of the tail blocks and the block Gauss–Seidel sweep coupling them.
    """
    d: float
    M: np.ndarray
    N: np.ndarray
    s1: int
    s2: int
    part: BlockPartition
    tol: float

    def __post_init__(self):
        h, t = self.part.head, self.part.tail
        self.M11, self.M12 = self.M[np.ix_(h, h)], self.M[np.ix_(h, t)]
        self.M21, self.M22 = self.M[np.ix_(t, h)], self.M[np.ix_(t, t)]
        self.N11, self.N12 = self.N[np.ix_(h, h)], self.N[np.ix_(h, t)]
        self.N21, self.N22 = self.N[np.ix_(t, h)], self.N[np.ix_(t, t)]
        left22 = self.d * np.eye(len(t)) + self.s1 * self.M22
        right22 = self.s2 * self.N22
        try:
            integral = SylvesterIntegralOperator(left22, right22, tol=self.tol)
            self.G22 = integral
            self.g22_kind = "integral"
        except SolverNotApplicableError:
            self.G22 = lambda Y: linalg.solve_sylvester(left22, right22, Y)
            self.g22_kind = "sylvester"
        left12 = self.d * np.eye(len(h)) + self.s1 * self.M11
        self.G12 = lambda Y: linalg.solve_sylvester(left12, right22, Y)
        self.G21 = lambda Y: linalg.solve_sylvester(left22, self.s2 * self.N11, Y)
        self.sweeps = 0

    def __call__(self, F11: np.ndarray, R12: np.ndarray, R21: np.ndarray, R22: np.ndarray):
        s1, s2 = self.s1, self.s2
        F12 = self.G12(R12 - s2 * (F11 @ self.N12))
        F21 = self.G21(R21 - s1 * (self.M21 @ F11))
        F22 = self.G22(R22 - s1 * (self.M21 @ F12) - s2 * (F21 @ self.N12))
        scale = max(float(np.abs(F12).max(initial=0.0)), float(np.abs(F21).max(initial=0.0)), float(np.abs(F22).max(initial=0.0)), np.finfo(float).tiny)
        for sweep in range(TAIL_MAX_SWEEPS):
            new12 = self.G12(R12 - s1 * (self.M12 @ F22) - s2 * (F11 @ self.N12))
            new21 = self.G21(R21 - s1 * (self.M21 @ F11) - s2 * (F22 @ self.N21))
            new22 = self.G22(R22 - s1 * (self.M21 @ new12) - s2 * (new21 @ self.N12))
            change = max(
                float(np.abs(new12 - F12).max(initial=0.0)),
                float(np.abs(new21 - F21).max(initial=0.0)),
                float(np.abs(new22 - F22).max(initial=0.0)),
            )
            F12, F21, F22 = new12, new21, new22
            if change <= self.tol * scale:
                self.sweeps = max(self.sweeps, sweep + 1)
                return F12, F21, F22
        raise NonConvergenceError(
            f"Tail Green-function sweep did not converge in {TAIL_MAX_SWEEPS} sweeps",
            diagnostics={"change": change, "scale": scale},
        )


def _solve_structured(
    d: float,
    M: np.ndarray,
    N: np.ndarray,
    R: np.ndarray,
    s1: int,
    s2: int,
    part: BlockPartition,
    floor: float,
    tol: float,
) -> tuple[np.ndarray | None, float, tuple[int, int], int, str]:
    """
    Partitioned solve: tail blocks by Green functions, head block by a dense solve of
    ``(1⊗M₁₁ + N₁₁ᵀ⊗1 + 𝒜) Vec F₁₁``, with ``𝒜`` the head operator induced by the tail.
    """
    h, t = part.head, part.tail
    if len(t) == 0:
        divisor, pair = _eig_divisor(d, M, N, s1, s2)
        if divisor < floor:
            return None, divisor, pair, 0, "structured-head"
        F, _ = solve_kron(M, N, R, d, s1, s2)
        return F, divisor, pair, 0, "structured-head"

    tail = _TailSolver(d, M, N, s1, s2, part, tol)
    R11 = R[np.ix_(h, h)]
    R12, R21, R22 = R[np.ix_(h, t)], R[np.ix_(t, h)], R[np.ix_(t, t)]
    F = np.zeros_like(R, dtype=complex)
    if len(h) == 0:
        F[np.ix_(t, t)] = tail.G22(R22)
        return F, float("inf"), (0, 0), 0, f"structured-tail-{tail.g22_kind}"

    nh = len(h)
    zero12, zero21, zero22 = np.zeros_like(R12), np.zeros_like(R21), np.zeros_like(R22)

    def coupling(F11, r12, r21, r22):
        F12, F21, F22 = tail(F11, r12, r21, r22)
        return s1 * (tail.M12 @ F21) + s2 * (F12 @ tail.N21), (F12, F21, F22)

    eye = np.eye(nh)
    left = d * eye + s1 * tail.M11
    head_matrix = np.empty((nh * nh, nh * nh), dtype=complex)
    for col in range(nh * nh):
        basis = np.zeros(nh * nh, dtype=complex)
        basis[col] = 1.0
        induced, _ = coupling(unvec(basis, (nh, nh)), zero12, zero21, zero22)
        head_matrix[:, col] = kron_vec(eye, left, basis) + s2 * kron_vec(tail.N11.T, eye, basis) + vec(induced)
    eigs = linalg.eigvals(head_matrix)
    divisor = float(np.min(np.abs(eigs)))
    if divisor < floor:
        approx = np.abs(d + s1 * np.diag(tail.M11).real[:, None] + s2 * np.diag(tail.N11).real[None, :])
        i, j = np.unravel_index(int(np.argmin(approx)), approx.shape)
        return None, divisor, (int(h[i]), int(h[j])), tail.sweeps, "structured"

    offset, _ = coupling(np.zeros((nh, nh), dtype=complex), R12, R21, R22)
    F11 = unvec(linalg.solve(head_matrix, vec(R11 - offset)), (nh, nh))
    F12, F21, F22 = tail(F11, R12, R21, R22)
    F[np.ix_(h, h)] = F11
    F[np.ix_(h, t)] = F12
    F[np.ix_(t, h)] = F21
    F[np.ix_(t, t)] = F22
    return F, divisor, (0, 0), tail.sweeps, f"structured-{tail.g22_kind}"


def _relative_residual(apply, F: np.ndarray, r: np.ndarray) -> float:
    return float(np.linalg.norm(apply(F) - r) / max(np.linalg.norm(r), np.finfo(float).tiny))


def _solve_dense(d: float, M: np.ndarray, N: np.ndarray, r: np.ndarray, s1: int, s2: int, floor: float):
    divisor, pair = _eig_divisor(d, M, N, s1, s2)
    F = None if divisor < floor else solve_kron(M, N, r, d, s1, s2)[0]
    return F, divisor, pair, "dense_kron"


def _try_picard(k: Multi, lam: np.ndarray, B: np.ndarray, B_breve: np.ndarray, r: np.ndarray, s1: int, s2: int, tol: float) -> PicardResult | None:
    """The k = 0 Picard scheme for sum signs with positive frequencies, or ``None`` when it does not apply."""
    if any(k) or s1 != s2 or not np.all(lam > 0):
        return None
    try:
        return sylvester_picard_k0(lam, B, B_breve, s1 * r, tol=tol)
    except (ContractionError, NonConvergenceError) as e:
        logger.debug(f"Picard k=0 scheme not used: {e}")
        return None


def solve_second_melnikov(
    omega: np.ndarray,
    lam: np.ndarray,
    B: np.ndarray | None,
    B_breve: np.ndarray | None,
    R: FourierOperatorSeries,
    K: float,
    sign: MelnikovSign = MelnikovSign.SUM,
    strategy: Strategy = Strategy.STRUCTURED,
    site_weights: np.ndarray | None = None,
    partition: float | None = None,
    floor: float = 1e-10,
    tol: float = 1e-12,
    raise_on_small: bool = False,
    residual_tol: float = RESIDUAL_TOL,
) -> SolveResult:
    """
    Solve ``((k,ω) + s₁(Λ+B)) F̂(k) + s₂ F̂(k)(Λ+B̆) = R̂(k)`` for every mode ``|k| ≤ K`` of ``R``.

    The dense strategy solves the Vec/Kronecker system ``(1⊗M + Nᵀ⊗1) Vec F = Vec R``.
    The structured strategy partitions at ``partition`` (``None`` keeps every site in the head),
    solves the tail blocks with Green functions (the exponential integral for the tail-tail block,
    Sylvester solves for the mixed blocks, coupled by a block Gauss–Seidel sweep) and the head
    block densely against the operator the tail induces on it. Difference signs at ``k = 0`` with
    Hermitian operators go through the eigenbasis, where resonant pairs must carry no right-hand side.

    Args:
        omega: Tangent frequencies.
        lam: Normal frequencies (full values, the diagonal of ``Λ``).
        B: Left operator perturbation; ``None`` means zero.
        B_breve: Right operator perturbation; ``None`` means zero.
        R: Right-hand side.
        K: Fourier cut-off.
        sign: Sign pattern of the equation.
        strategy: Structured or dense Kronecker.
        site_weights: ``|j|`` per normal site, used by the partition.
        partition: Head/tail radius.
        floor: Divisor floor.
        tol: Tolerance of the Green-function iterations.
        raise_on_small: Raise instead of collecting witnesses.
        residual_tol: Largest relative residual accepted per mode; a structured or Picard solve
            above it is repeated with the dense Kronecker solve.

    Raises:
        SmallDivisorError: on a resonant right-hand side, or below the floor with ``raise_on_small``.
        NonConvergenceError: if a mode stays above ``residual_tol``.
    """
    lam = np.asarray(lam, dtype=float)
    n = len(lam)
    B = np.zeros((n, n), dtype=complex) if B is None else np.asarray(B, dtype=complex)
    B_breve = np.zeros((n, n), dtype=complex) if B_breve is None else np.asarray(B_breve, dtype=complex)
    M = np.diag(lam).astype(complex) + B
    N = np.diag(lam).astype(complex) + B_breve
    s1, s2 = sign.signs
    weights = np.arange(1, n + 1, dtype=float) if site_weights is None else np.asarray(site_weights, dtype=float)
    part = BlockPartition.at(weights, np.inf if partition is None else partition)
    hermitian = _is_hermitian(M) and _is_hermitian(N)
    solution = R.like()
    result = SolveResult(solution)

    for k, r in R.cutoff(K).items():
        if not np.any(r):
            continue
        d = float(np.dot(k, omega))
        apply = sylvester_operator(d, M, N, s1, s2)
        pair, sweeps = (0, 0), 0
        if s1 != s2 and not any(k) and hermitian:
            F, divisor = solve_resonant_difference(d, M, N, r, s1, s2, floor, k)
            used = "resonant-eigenbasis"
        elif strategy == Strategy.DENSE:
            F, divisor, pair, used = _solve_dense(d, M, N, r, s1, s2, floor)
        else:
            picard = _try_picard(k, lam, B, B_breve, r, s1, s2, tol)
            if picard is not None:
                F, divisor, sweeps, used = picard.solution, float(2.0 * lam.min()), picard.iterations, "picard-k0"
            else:
                try:
                    F, divisor, pair, sweeps, used = _solve_structured(d, M, N, r, s1, s2, part, floor, tol)
                except NonConvergenceError as e:
                    logger.warning(f"Structured second-Melnikov solve failed at k={k} ({e}); using dense Kronecker solve")
                    F, divisor, pair, used = _solve_dense(d, M, N, r, s1, s2, floor)
                    used = f"{used}-fallback"
        if F is None:
            witness = ExcisionWitness(WitnessKind.SECOND, tuple(k), pair, divisor, floor)
            if raise_on_small:
                raise SmallDivisorError(f"Second-Melnikov divisor {divisor:.3e} below floor at k={k}", [witness])
            result.witnesses.append(witness)
            logger.debug(f"Mode k={k} excised: divisor {divisor:.3e} < {floor:.1e}")
            continue
        residual = _relative_residual(apply, F, r)
        if residual > residual_tol and not used.startswith(("dense", "resonant")):
            logger.warning(f"Second-Melnikov residual {residual:.3e} at k={k} with {used}; using dense Kronecker solve")
            dense, divisor, pair, used = _solve_dense(d, M, N, r, s1, s2, floor)
            if dense is not None:
                F, used = dense, f"{used}-fallback"
                residual = _relative_residual(apply, F, r)
        if residual > residual_tol:
            raise NonConvergenceError(
                f"Second-Melnikov residual {residual:.3e} above {residual_tol:.1e} at k={k}",
                diagnostics={"k": list(k), "residual": residual, "strategy": used, "divisor": divisor},
            )
        solution[k] = F
        result.traces.append(ModeTrace(tuple(k), used, divisor, residual, sweeps))

    logger.debug(
        f"Second-Melnikov solve ({sign.value}): {len(solution)} modes, {len(result.witnesses)} witnesses, "
        f"min divisor {result.min_divisor:.3e}, max residual {result.max_residual:.3e}"
    )
    return result

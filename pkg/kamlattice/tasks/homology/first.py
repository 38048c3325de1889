import logging

import numpy as np
from scipy import linalg

from kamlattice.tasks.algebra.types import Multi
from kamlattice.tasks.exceptions import NonConvergenceError, SmallDivisorError
from kamlattice.tasks.homology.types import RESIDUAL_TOL, BlockPartition, FourierVectorSeries, ModeTrace, SolveResult, Strategy
from kamlattice.tasks.melnikov.types import ExcisionWitness, WitnessKind

logger = logging.getLogger(__name__)

NEUMANN_MAX_TERMS = 200


def mode_shift(k: Multi, omega: np.ndarray, varpi: float, extended_precision: bool = False) -> float:
    """``ϖ − (k, ω)``, accumulated in extended precision when asked."""
    if extended_precision:
        acc = np.longdouble(varpi) - np.sum(np.asarray(k, dtype=np.longdouble) * np.asarray(omega, dtype=np.longdouble))
        return float(acc)
    return float(varpi - np.dot(k, omega))


def neumann_inverse(d: float, E: np.ndarray, tol: float = 1e-15) -> np.ndarray | None:
    """
    ``(d + E)⁻¹ = d⁻¹ Σ_n (−E/d)^n`` when ``‖E‖₂ < |d|``; ``None`` when the series does not converge.
    """
    n = E.shape[0]
    if n == 0:
        return np.zeros((0, 0), dtype=complex)
    if d == 0:
        return None
    ratio = float(np.linalg.norm(E, 2)) / abs(d)
    if ratio >= 1.0:
        return None
    step = -E / d
    term = np.eye(n, dtype=complex)
    total = term.copy()
    for _ in range(NEUMANN_MAX_TERMS):
        term = term @ step
        total += term
        if np.abs(term).max(initial=0.0) <= tol * np.abs(total).max():
            break
    return total / d


def _relative_residual(A: np.ndarray, F: np.ndarray, r: np.ndarray) -> float:
    return float(np.linalg.norm(A @ F - r) / max(np.linalg.norm(r), np.finfo(float).tiny))


def _solve_dense(A: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, float]:
    divisor = float(np.min(np.abs(linalg.eigvals(A)))) if A.size else float("inf")
    return linalg.solve(A, r), divisor


def _solve_structured(
    d: float,
    diag: np.ndarray,
    B: np.ndarray,
    r: np.ndarray,
    part: BlockPartition,
    floor: float,
) -> tuple[np.ndarray | None, float, str]:
    """
    Schur-complement solve of ``(d + Λ + B) F = r`` with the tail inverted by a Neumann series.

    Returns ``(F, head divisor, strategy)``; ``F`` is ``None`` when the head divisor is below the floor.
    """
    head, tail = part.head, part.tail
    A = d * np.eye(len(diag)) + np.diag(diag) + B
    if part.trivial:
        divisor = float(np.min(np.abs(linalg.eigvals(A)))) if A.size else float("inf")
        if divisor < floor:
            return None, divisor, "structured"
        return linalg.solve(A, r), divisor, "structured"

    E = np.diag(diag[tail]) + B[np.ix_(tail, tail)]
    tail_inv = neumann_inverse(d, E)
    if tail_inv is None:
        log = logger.warning if d != 0 else logger.debug
        log(f"Neumann series for the tail block diverges (|d|={abs(d):.3e}, ‖E‖={np.linalg.norm(E, 2):.3e}); using dense solve")
        divisor = float(np.min(np.abs(linalg.eigvals(A))))
        if divisor < floor:
            return None, divisor, "dense-fallback"
        return linalg.solve(A, r), divisor, "dense-fallback"

    B12 = B[np.ix_(head, tail)]
    B21 = B[np.ix_(tail, head)]
    schur = A[np.ix_(head, head)] - B12 @ tail_inv @ B21
    divisor = float(np.min(np.abs(linalg.eigvals(schur)))) if schur.size else float("inf")
    if divisor < floor:
        return None, divisor, "structured"
    F = np.zeros(len(diag), dtype=complex)
    F1 = linalg.solve(schur, r[head] - B12 @ (tail_inv @ r[tail]))
    F[head] = F1
    F[tail] = tail_inv @ (r[tail] - B21 @ F1)
    return F, divisor, "structured"


def solve_first_melnikov(
    omega: np.ndarray,
    lam: np.ndarray,
    B: np.ndarray | None,
    R: FourierVectorSeries,
    K: float,
    varpi: float = 0.0,
    strategy: Strategy = Strategy.STRUCTURED,
    site_weights: np.ndarray | None = None,
    partition: float | None = None,
    floor: float = 1e-10,
    extended_precision: bool = False,
    raise_on_small: bool = False,
    residual_tol: float = RESIDUAL_TOL,
) -> SolveResult:
    """
    Solve ``(ϖ − (k,ω) + Λ + B) F̂(k) = R̂(k)`` for every mode ``|k| ≤ K`` of ``R``.

    ``lam`` holds the deviations ``λ_j`` of the normal frequencies from ``ϖ``. The structured
    strategy partitions the sites at ``partition`` (head ``|j| < partition``), inverts the tail
    block by a Neumann series around the scalar ``ϖ − (k,ω)`` and solves the Schur complement of
    the head block densely; when the series diverges it falls back to the dense solve. Modes whose
    smallest eigenvalue modulus is below ``floor`` are not solved and produce a witness instead.

    Args:
        omega: Tangent frequencies.
        lam: Normal frequency deviations from ``ϖ`` (the diagonal of ``Λ``).
        B: Normal operator; ``None`` means zero.
        R: Right-hand side.
        K: Fourier cut-off.
        varpi: Accumulation point ``ϖ``.
        strategy: Structured or dense.
        site_weights: ``|j|`` per normal site, used by the partition.
        partition: Head/tail radius; ``None`` keeps all sites in the head.
        floor: Divisor floor.
        extended_precision: Accumulate ``ϖ − (k,ω)`` in extended precision.
        raise_on_small: Raise instead of collecting witnesses.
        residual_tol: Largest relative residual accepted per mode; a structured solve above it is
            repeated densely.

    Raises:
        SmallDivisorError: if ``raise_on_small`` and a mode is below the floor.
        NonConvergenceError: if a mode stays above ``residual_tol``.
    """
    lam = np.asarray(lam, dtype=float)
    n = len(lam)
    B = np.zeros((n, n), dtype=complex) if B is None else np.asarray(B, dtype=complex)
    weights = np.arange(1, n + 1, dtype=float) if site_weights is None else np.asarray(site_weights, dtype=float)
    part = BlockPartition.at(weights, np.inf if partition is None else partition)
    solution = R.like()
    result = SolveResult(solution)

    for k, r in R.cutoff(K).items():
        if not np.any(r):
            continue
        d = mode_shift(k, omega, varpi, extended_precision)
        A = d * np.eye(n) + np.diag(lam) + B
        match strategy:
            case Strategy.DENSE:
                divisor = float(np.min(np.abs(linalg.eigvals(A))))
                F = None if divisor < floor else linalg.solve(A, r)
                used = "dense"
            case Strategy.STRUCTURED:
                F, divisor, used = _solve_structured(d, lam, B, r, part, floor)
        if F is None:
            site = int(np.argmin(np.abs(d + lam)))
            witness = ExcisionWitness(WitnessKind.FIRST, tuple(k), (site,), divisor, floor)
            if raise_on_small:
                raise SmallDivisorError(f"First-Melnikov divisor {divisor:.3e} below floor at k={k}", [witness])
            result.witnesses.append(witness)
            logger.debug(f"Mode k={k} excised: divisor {divisor:.3e} < {floor:.1e}")
            continue
        residual = _relative_residual(A, F, r)
        if residual > residual_tol and used != "dense":
            logger.warning(f"First-Melnikov residual {residual:.3e} at k={k} with {used}; solving densely")
            F, used = linalg.solve(A, r), f"{used}-dense"
            residual = _relative_residual(A, F, r)
        if residual > residual_tol:
            raise NonConvergenceError(
                f"First-Melnikov residual {residual:.3e} above {residual_tol:.1e} at k={k}",
                diagnostics={"k": list(k), "residual": residual, "strategy": used, "divisor": divisor},
            )
        solution[k] = F
        result.traces.append(ModeTrace(tuple(k), used, divisor, residual))

    logger.debug(
        f"First-Melnikov solve: {len(solution)} modes, {len(result.witnesses)} witnesses, "
        f"min divisor {result.min_divisor:.3e}, max residual {result.max_residual:.3e}"
    )
    return result

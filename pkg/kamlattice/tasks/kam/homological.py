import logging
from dataclasses import dataclass, field

import numpy as np

from kamlattice.tasks.exceptions import SmallDivisorError
from kamlattice.tasks.homology.first import solve_first_melnikov
from kamlattice.tasks.homology.second import solve_second_melnikov
from kamlattice.tasks.homology.types import FourierOperatorSeries, FourierVectorSeries, MelnikovSign, ModeTrace, SolveResult
from kamlattice.tasks.kam.types import LowBlocks, SolverOptions
from kamlattice.tasks.melnikov.types import ExcisionWitness, WitnessKind

logger = logging.getLogger(__name__)


def solve_tangent(omega: np.ndarray, R: FourierVectorSeries, K: float, floor: float = 1e-10, raise_on_small: bool = False) -> SolveResult:
    """
    ``ω·∂_x F = Γ(R − ⟨R⟩)``: ``F̂(k) = i R̂(k) / (k, ω)`` for ``0 < |k| ≤ K``; the average is not solved.
    """
    solution = R.like()
    result = SolveResult(solution)
    for k, r in R.cutoff(K).items():
        if not any(k) or not np.any(r):
            continue
        d = float(np.dot(k, omega))
        if abs(d) < floor:
            witness = ExcisionWitness(WitnessKind.TANGENT, tuple(k), (), d, floor)
            if raise_on_small:
                raise SmallDivisorError(f"Tangent divisor {d:.3e} below floor at k={k}", [witness])
            result.witnesses.append(witness)
            continue
        solution[k] = 1j * r / d
        result.traces.append(ModeTrace(tuple(k), "diagonal", abs(d), 0.0))
    return result


def drop_mean(series: FourierOperatorSeries) -> FourierOperatorSeries:
    zero = (0,) * series.n_angles
    return type(series)(series.n_angles, series.shape, {k: m for k, m in series.items() if k != zero})


@dataclass
class GeneratorSolve:
    """Solved generator blocks of one step with every solver result, keyed by block name."""
    blocks: LowBlocks
    results: dict[str, SolveResult] = field(default_factory=dict)

    @property
    def witnesses(self) -> list[ExcisionWitness]:
        return [w for r in self.results.values() for w in r.witnesses]

    @property
    def min_divisor(self) -> float:
        return min((r.min_divisor for r in self.results.values()), default=float("inf"))

    @property
    def max_residual(self) -> float:
        return max((r.max_residual for r in self.results.values()), default=0.0)


def solve_first_stage(
    omega: np.ndarray,
    lam: np.ndarray,
    varpi: float,
    B: np.ndarray,
    R: LowBlocks,
    K: float,
    options: SolverOptions,
    site_weights: np.ndarray,
    partition: float | None,
    tangent: SolveResult | None = None,
) -> GeneratorSolve:
    """
    ``F^x``, ``F^z`` and ``F^z̄`` from the ``x``, ``z`` and ``z̄`` blocks of ``R``.

    With ``A = Λ + B`` the normal blocks solve ``(Aᵀ − (k,ω)) F^z = −iR^z`` and
    ``((k,ω) + A) F^z̄ = iR^z̄``, both as first-Melnikov systems around ``ϖ``. A ``tangent`` result
    already computed for ``F^x`` is reused as is.
    """
    n_angles = len(omega)
    out = LowBlocks.empty(n_angles, len(lam))
    solve = GeneratorSolve(out)
    fx = solve_tangent(omega, R.x, K, options.floor) if tangent is None else tangent
    out.x = fx.solution
    solve.results["x"] = fx
    deviations = np.asarray(lam, dtype=float) - varpi
    common = dict(
        varpi=varpi,
        strategy=options.strategy,
        site_weights=site_weights,
        partition=partition,
        floor=options.floor,
        extended_precision=options.extended_precision,
    )
    fz = solve_first_melnikov(omega, deviations, np.asarray(B).T, R.z.scale(-1j), K, **common)
    fzb = solve_first_melnikov(-np.asarray(omega), deviations, B, R.zbar.scale(1j), K, **common)
    out.z, out.zbar = fz.solution, fzb.solution
    solve.results["z"] = fz
    solve.results["zbar"] = fzb
    return solve


def solve_second_stage(
    omega: np.ndarray,
    lam: np.ndarray,
    B: np.ndarray,
    R: LowBlocks,
    K: float,
    options: SolverOptions,
    site_weights: np.ndarray,
    partition: float | None,
) -> GeneratorSolve:
    """
    ``F^y`` and the quadratic generator blocks.

    With ``A = Λ + B``: ``((k,ω) − Aᵀ) F^{zz} − F^{zz} A = iR^{zz}``,
    ``((k,ω) + A) F^{z̄z̄} + F^{z̄z̄} Aᵀ = iR^{z̄z̄}`` and ``((k,ω) + A) F^{zz̄} − F^{zz̄} A = iR^{zz̄}``
    for ``k ≠ 0``; the mean of ``R^{zz̄}`` is absorbed into the normal form instead.
    """
    n_angles = len(omega)
    out = LowBlocks.empty(n_angles, len(lam))
    solve = GeneratorSolve(out)
    fy = solve_tangent(omega, R.y, K, options.floor)
    out.y = fy.solution
    solve.results["y"] = fy
    B = np.asarray(B, dtype=complex)
    common = dict(
        strategy=options.strategy,
        site_weights=site_weights,
        partition=partition,
        floor=options.floor,
        tol=options.tol,
    )
    equations = {
        "zz": (B.T, B, R.zz, MelnikovSign.NEG_SUM),
        "zbarzbar": (B, B.T, R.zbarzbar, MelnikovSign.SUM),
        "zzbar": (B, B, drop_mean(R.zzbar), MelnikovSign.DIFFERENCE),
    }
    for name, (left, right, rhs, sign) in equations.items():
        result = solve_second_melnikov(omega, lam, left, right, rhs.scale(1j), K, sign=sign, **common)
        setattr(out, name, result.solution)
        solve.results[name] = result
    return solve

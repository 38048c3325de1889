import logging
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np

from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.melnikov.excision import enumerate_k
from kamlattice.tasks.model.types import FrequencyMap, FrequencyMapFn, FrequencyModel, fit_decay
from kamlattice.tasks.norms.fields import vf_triple_norm
from kamlattice.tasks.norms.sequence import majorant, op_norm
from kamlattice.tasks.norms.types import NormContext

logger = logging.getLogger(__name__)

DETERMINANT_FLOOR = 1e-12
REALITY_TOLERANCE = 1e-12


@dataclass
class PredicateResult:
    """Outcome of one standing assumption evaluated on model data."""
    name: str
    passed: bool
    value: float | None = None
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class AssumptionReport:
    results: list[PredicateResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> PredicateResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def failures(self) -> list[str]:
        return [r.name for r in self.results if not r.passed]

    def to_json(self) -> dict:
        return {"passed": self.passed, "results": [r.to_json() for r in self.results]}


def parameter_grid(lower: np.ndarray, upper: np.ndarray, per_axis: int) -> np.ndarray:
    """Tensor grid of ``per_axis`` points per direction, corners included; shape ``(per_axis**N, N)``."""
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(lower, upper)]
    return np.array(list(product(*axes)), dtype=float)


def _as_callable(omega_map: FrequencyMap | FrequencyMapFn | None) -> FrequencyMapFn:
    if omega_map is None:
        return lambda xi: np.asarray(xi, dtype=float)
    if isinstance(omega_map, FrequencyMap):
        return omega_map.omega
    return omega_map


def frequency_jacobians(omega_map: FrequencyMapFn, samples: np.ndarray, step: float) -> np.ndarray:
    """Central-difference Jacobians ``∂_ξ ω`` at every sample; shape ``(S, N, N)``."""
    S, N = samples.shape
    jac = np.zeros((S, N, N))
    for i in range(N):
        shift = np.zeros(N)
        shift[i] = step
        jac[:, :, i] = (omega_map(samples + shift) - omega_map(samples - shift)) / (2.0 * step)
    return jac


def directional_derivative_margin(frequency_map: FrequencyMap, K: int = 8) -> tuple[float, tuple[int, ...]]:
    """
    Smallest margin of the directional derivative of ``(k, ω(ξ)) + ⟨l, Ω(ξ)⟩`` with ``|l| ≤ 2``.

    For each ``k`` the direction ``v = M⁻¹k/|k|`` gives ``d(k,ω)/dv = |k|``; the normal part moves by
    at most the two largest entries of ``|S v|``. The margin is the minimum over ``0 < |k|₁ ≤ K``
    of ``|k| − (g₁ + g₂)``; a positive value means the derivative condition holds for every ``l``.

    Returns:
        tuple[float, tuple[int, ...]]: The margin and the ``k`` attaining it.
    """
    M = np.asarray(frequency_map.omega_matrix, dtype=float)
    S = np.asarray(frequency_map.normal_matrix, dtype=float)
    ks = enumerate_k(M.shape[0], K)
    if len(ks) == 0:
        return float("inf"), ()
    lengths = np.linalg.norm(ks, axis=1)
    directions = np.linalg.solve(M, ks.T).T / lengths[:, None]
    if S.size:
        moves = np.sort(np.abs(directions @ S.T), axis=1)[:, ::-1]
        top = moves[:, :2].sum(axis=1)
    else:
        top = np.zeros(len(ks))
    margins = lengths - top
    best = int(np.argmin(margins))
    return float(margins[best]), tuple(int(v) for v in ks[best])


def check_assumptions(
    model: FrequencyModel,
    R0: HamiltonianPoly,
    H0: HamiltonianPoly | None = None,
    frequency_map: FrequencyMap | FrequencyMapFn | None = None,
    B0: np.ndarray | None = None,
    ctx: NormContext | None = None,
    grid: int = 5,
    epsilon0: float | None = None,
    fourier_K: int = 8,
) -> AssumptionReport:
    """
    Evaluate the standing assumptions on model data. Failed predicates are reported, never raised.

    Args:
        model: The frequency model.
        R0: Perturbation in the coordinates the KAM driver will consume.
        H0: Integrable part (checked for reality when given).
        frequency_map: ``ω(ξ)`` (and ``Ω(ξ)`` when affine); defaults to ``ω(ξ) = ξ``.
        B0: Initial normal operator over the normal sites; ``None`` means zero.
        ctx: Norm context for the perturbation size; defaults to ``p = 1, s = r = 0.1``.
        grid: Points per parameter axis of the nondegeneracy grid.
        epsilon0: Size the operator bound is compared against (``‖⌊B⁰⌉‖ ≤ 10 ε₀``).
        fourier_K: Largest ``|k|`` of the directional-derivative scan.
    """
    ctx = ctx or NormContext(p=1.0, kappa=model.kappa, s=0.1, r=0.1)
    results: list[PredicateResult] = []

    lower, upper = (np.asarray(c, dtype=float) for c in model.param_box)
    diam = float(np.linalg.norm(upper - lower))
    step = 1e-5 * diam
    samples = parameter_grid(lower, upper, grid)
    jac = frequency_jacobians(_as_callable(frequency_map), samples, step)
    dets = np.abs(np.linalg.det(jac))
    sup_jac = float(np.max(np.linalg.norm(jac, ord=2, axis=(1, 2))))
    results.append(PredicateResult(
        "nondegeneracy",
        bool(dets.min() > DETERMINANT_FLOOR),
        float(dets.min()),
        {"c1": float(dets.min()), "c2": sup_jac, "samples": int(len(samples)), "step": step},
    ))

    idx = list(model.normal_indices)
    deviations = np.abs(model.frequency_array[idx] - model.limit_point)
    weights = model.weights[idx]
    try:
        fit = fit_decay(weights, deviations, kappa=model.kappa)
        decay_ok = fit.c11 > 0 and abs(fit.kappa - model.kappa) <= 0.25 * model.kappa
        results.append(PredicateResult("decay", bool(decay_ok), fit.kappa, fit.to_json()))
    except ValueError as e:
        results.append(PredicateResult("decay", False, None, {"error": str(e)}))

    if isinstance(frequency_map, FrequencyMap):
        margin, k = directional_derivative_margin(frequency_map, fourier_K)
        results.append(PredicateResult("directional_derivative", margin > 0, margin, {"k": list(k), "K": fourier_K}))
    else:
        results.append(PredicateResult("directional_derivative", True, 1.0, {"note": "identity frequency map, normal frequencies parameter-free"}))

    defects = {"R0": R0.reality_defect()}
    if H0 is not None:
        defects["H0"] = H0.reality_defect()
    scale = max(1.0, R0.max_abs(), H0.max_abs() if H0 is not None else 0.0)
    results.append(PredicateResult("reality", max(defects.values()) <= REALITY_TOLERANCE * scale, max(defects.values()), defects))

    field_norm = vf_triple_norm(R0, ctx, model.weights) if not R0.is_zero() else 0.0
    results.append(PredicateResult("regularity", bool(np.isfinite(field_norm)), field_norm, {"p": ctx.p, "q": ctx.q, "s": ctx.s, "r": ctx.r}))

    if B0 is None or not np.any(B0):
        results.append(PredicateResult("operator_smallness", True, 0.0, {}))
    else:
        bound = op_norm(majorant(np.asarray(B0)), ctx.p, ctx.q, weights, weights)
        ok = True if epsilon0 is None else bound <= 10.0 * epsilon0
        results.append(PredicateResult("operator_smallness", ok, bound, {"epsilon0": epsilon0}))

    report = AssumptionReport(results)
    for r in results:
        if not r.passed:
            logger.warning(f"Assumption {r.name} failed: value={r.value}, detail={r.detail}")
    logger.info(f"Assumptions checked on {model.equation.value} model: {'all passed' if report.passed else report.failures()}")
    return report

import logging

import numpy as np

from kamlattice.tasks.algebra.lie import ComposedMap
from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.exceptions import ConfigurationError, ExcisionExhaustedError
from kamlattice.tasks.kam.schedule import schedule
from kamlattice.tasks.kam.split import split_perturbation
from kamlattice.tasks.kam.step import field_norm, kam_step
from kamlattice.tasks.kam.types import KamConfig, KamRun, KamState, SampleState, ScheduleParams
from kamlattice.tasks.melnikov.types import ParameterBox
from kamlattice.tasks.model.types import FrequencyMap, FrequencyModel
from kamlattice.tasks.norms.sequence import op_norm
from kamlattice.tasks.norms.types import NormContext

logger = logging.getLogger(__name__)


def default_tracked(box: ParameterBox, count: int = 3) -> list[int]:
    """Alive samples closest to the box centre, the centre one first."""
    centre = 0.5 * (box.lower + box.upper)
    alive = box.alive_indices()
    order = np.argsort(np.linalg.norm(box.samples[alive] - centre, axis=1), kind="stable")
    return [int(i) for i in alive[order[:count]]]


def initial_state(
    model: FrequencyModel,
    R0: HamiltonianPoly,
    config: KamConfig,
    P0: HamiltonianPoly | None = None,
    frequency_map: FrequencyMap | None = None,
    B0: np.ndarray | None = None,
    box: ParameterBox | None = None,
    tracked: list[int] | None = None,
) -> KamState:
    """
    Step-0 state: one :class:`SampleState` per tracked sample with ``ω = ω(ξ)``, ``Λ = Ω(ξ)`` and ``B = B⁰``.

    ``R⁰`` is split into its low-order blocks, which become ``R``, and the remainder, which joins ``P⁰``;
    the ledger starts from the low-order part.
    """
    sites = tuple(model.normal_indices)
    n = len(sites)
    fmap = frequency_map or FrequencyMap.identity(model.N, model.normal_frequencies)
    if box is None:
        box = ParameterBox.sample(*model.param_box, count=1000)
    if box.N != model.N:
        raise ConfigurationError(f"Parameter box of dimension {box.N} for a model with {model.N} tangent sites")
    B0 = np.zeros((n, n), dtype=complex) if B0 is None else np.asarray(B0, dtype=complex)
    if B0.shape != (n, n):
        raise ConfigurationError(f"B⁰ of shape {B0.shape}, expected {(n, n)}")
    P0 = HamiltonianPoly.zero(model.N) if P0 is None else P0
    R2, R3 = split_perturbation(R0)
    P0 = R3 + P0
    tracked = default_tracked(box) if tracked is None else list(tracked)
    samples = []
    for index in tracked:
        if not box.alive[index]:
            raise ConfigurationError(f"Tracked sample {index} is not alive in the parameter box")
        xi = box.samples[index]
        samples.append(SampleState(index, xi, fmap.omega(xi), fmap.normal(xi), B0.copy(), R2.copy(), P0.copy()))
    state = KamState(0, samples, box, sites, model.weights)
    sched = schedule(0, config.schedule)
    ctx = NormContext(config.norm_p, model.kappa, sched.s, sched.r)
    state.ledger["R"].append(max(field_norm(s.R, ctx, state.weights, config.norm_samples) for s in samples) if samples else 0.0)
    state.ledger["P"].append(max(field_norm(s.P, ctx, state.weights, config.norm_samples) for s in samples) if samples else 0.0)
    return state


def growth_constants(state: KamState, params: ScheduleParams) -> dict[int, float]:
    """
    Measured constants ``C(m) = ‖R^(m)‖ / ε_m`` of the ledger; steps whose constant grows faster than ``2^m``
    relative to step 0 are logged.
    """
    constants = {}
    for m, value in enumerate(state.ledger["R"]):
        constants[m] = value / schedule(m, params).epsilon
    base = constants.get(0, 0.0)
    for m, C in constants.items():
        if base > 0 and C > base * 2.0 ** m:
            logger.warning(f"Measured constant C({m}) = {C:.3e} grows faster than 2^m (C(0) = {base:.3e})")
    return constants


def ledger_log_ratios(ledger: list[float], floor: float = 1e-13) -> list[float]:
    """
    Successive ratios ``log ℓ_{m+1} / log ℓ_m`` of a norm ledger; superlinear decay keeps them above one.

    Ratios stop at the first entry at or below ``floor``; a drop from above the floor to below it counts as
    ``inf``. An entry of size one or more has no superlinear regime and gives ``0``.
    """
    ratios = []
    for before, after in zip(ledger, ledger[1:]):
        if before <= floor:
            break
        if before >= 1.0:
            ratios.append(0.0)
        elif after <= floor:
            ratios.append(float("inf"))
        else:
            ratios.append(float(np.log(after) / np.log(before)))
    return ratios


def parameter_derivative(state: KamState) -> float:
    """
    Largest difference quotient of the drift ``ω − ω⁰`` between pairs of tracked samples: a finite-sample
    stand-in for its ``ξ``-derivative.
    """
    best = 0.0
    for i, a in enumerate(state.samples):
        for b in state.samples[i + 1:]:
            step = float(np.linalg.norm(np.asarray(a.xi) - np.asarray(b.xi)))
            if step > 0:
                jump = float(np.abs((a.omega - a.omega0) - (b.omega - b.omega0)).max())
                best = max(best, jump / step)
    return best


def run_kam(
    model: FrequencyModel,
    R0: HamiltonianPoly,
    config: KamConfig,
    P0: HamiltonianPoly | None = None,
    frequency_map: FrequencyMap | None = None,
    B0: np.ndarray | None = None,
    box: ParameterBox | None = None,
    tracked: list[int] | None = None,
    steps: int = 4,
    target: float | None = None,
) -> KamRun:
    """
    Run ``steps`` KAM steps, or fewer once the ``R`` ledger drops below ``target``.

    Excision that empties the box stops the run with status ``exhausted`` and keeps the state reached;
    every other failure propagates.

    Returns:
        KamRun: Status (``converged``, ``completed`` or ``exhausted``), final state and per-step trace,
        with the drifts ``sup|ω − ω⁰|`` and ``‖B^∞ − B⁰‖_{h_p→h_q}`` per tracked sample.
    """
    if steps < 0:
        raise ConfigurationError(f"Number of steps must be nonnegative, got {steps}")
    state = initial_state(model, R0, config, P0, frequency_map, B0, box, tracked)
    status = "completed"
    for _ in range(steps):
        if target is not None and state.ledger["R"][-1] < target:
            status = "converged"
            break
        try:
            state = kam_step(state, model, config, frequency_map)
        except ExcisionExhaustedError as e:
            logger.error(f"KAM iteration halted at step {state.m}: {e}")
            state = e.state if e.state is not None else state
            status = "exhausted"
            break
    else:
        if target is not None and state.ledger["R"][-1] < target:
            status = "converged"

    weights = state.weights[list(state.sites)]
    q = config.norm_p + model.kappa
    omega_drift = {s.index: float(np.abs(s.omega - s.omega0).max(initial=0.0)) for s in state.samples}
    B_drift = {s.index: op_norm(s.B - s.B0, config.norm_p, q, weights) for s in state.samples}
    run = KamRun(
        status,
        state,
        state.records,
        state.stages,
        omega_drift,
        B_drift,
        growth_constants(state, config.schedule),
        parameter_derivative(state),
    )
    logger.info(
        f"KAM run {status} after {state.m} steps: ledger {['%.3e' % v for v in state.ledger['R']]}, "
        f"surviving fraction {state.box.fraction:.4f}"
    )
    return run


def composed_map(state: KamState, index: int) -> ComposedMap:
    """``Φ = Φ_0 ∘ Φ_1 ∘ ...`` for one tracked sample, from the recorded per-step maps."""
    if index not in state.maps:
        raise KeyError(f"No coordinate maps recorded for sample {index}")
    return ComposedMap(state.maps[index])

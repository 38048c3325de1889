import logging
from dataclasses import replace

import numpy as np

from kamlattice.tasks.algebra.bracket import poisson_bracket
from kamlattice.tasks.algebra.lie import CoordinateMap, lie_series
from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.algebra.types import multi_l1
from kamlattice.tasks.exceptions import ExcisionExhaustedError
from kamlattice.tasks.homology.constants import effective_K
from kamlattice.tasks.kam.corrections import bracket_corrections, frequency_and_operator_update
from kamlattice.tasks.kam.homological import solve_first_stage, solve_second_stage, solve_tangent
from kamlattice.tasks.kam.schedule import schedule
from kamlattice.tasks.kam.split import blocks_from_poly, blocks_to_poly, is_gauge, is_low, is_normal_form_term, normal_form, split_perturbation
from kamlattice.tasks.kam.types import KamConfig, KamState, LowBlocks, SampleState, ScheduleStep, StepRecord
from kamlattice.tasks.melnikov.excision import excise_first, excise_second, excise_tangent
from kamlattice.tasks.melnikov.report import stage_of
from kamlattice.tasks.melnikov.types import WitnessKind
from kamlattice.tasks.model.types import FrequencyMap, FrequencyModel
from kamlattice.tasks.norms.fields import vf_triple_norm
from kamlattice.tasks.norms.types import NormContext

logger = logging.getLogger(__name__)


def _shifted_map(state: KamState, model: FrequencyModel, frequency_map: FrequencyMap | None) -> FrequencyMap:
    """The frequency map moved by the mean drift ``ω^(m) − ω^(0)`` of the tracked samples."""
    fmap = frequency_map or FrequencyMap.identity(model.N, model.normal_frequencies)
    if not state.samples:
        return fmap
    drift = np.mean([s.omega - s.omega0 for s in state.samples], axis=0)
    return replace(fmap, omega_offset=fmap.omega_offset + drift)


def headblock_eigenvalues(state: KamState, model: FrequencyModel, fmap: FrequencyMap) -> np.ndarray | None:
    """
    Eigenvalues of ``diag(Ω(ξ)) + B̄`` for every box sample, with ``B̄`` the Hermitian part of the mean
    tracked operator. ``None`` when the state does not carry every normal site of the model.
    """
    normal = model.normal_indices
    if not state.samples or tuple(state.sites) != tuple(normal):
        return None
    B_mean = np.mean([s.B for s in state.samples], axis=0)
    B_mean = 0.5 * (B_mean + B_mean.conj().T)
    freqs = fmap.normal(state.box.samples)
    heads = freqs[:, :, None] * np.eye(len(normal))[None, :, :] + B_mean[None, :, :]
    return np.linalg.eigvalsh(heads)


def excise_box(state: KamState, model: FrequencyModel, config: KamConfig, K: int, frequency_map: FrequencyMap | None = None) -> KamState:
    """
    Tangent, first- and second-Melnikov excision of the live box at radius ``K``; tracked samples that die
    are dropped.

    Raises:
        ExcisionExhaustedError: if no sample of the box, or no tracked sample, survives.
    """
    profile = config.profile
    fmap = _shifted_map(state, model, frequency_map)
    precision = config.solver.extended_precision
    box = state.box
    passes = (
        (WitnessKind.TANGENT, profile.tangent_threshold(K), lambda b: excise_tangent(b, K, profile.c21, fmap, precision)),
        (WitnessKind.FIRST, profile.first_threshold(K), lambda b: excise_first(b, model, K, profile.c, profile.y, fmap, precision)),
        (
            WitnessKind.SECOND,
            profile.second_threshold(K),
            lambda b: excise_second(b, model, K, profile.c, headblock_eigenvalues(state, model, fmap), fmap, precision),
        ),
    )
    for kind, threshold, excise in passes:
        after, witnesses = excise(box)
        state.stages.append(stage_of(kind, K, threshold, box, after, witnesses))
        state.witnesses.extend(witnesses)
        box = after
    state.box = box
    dropped = [s.index for s in state.samples if not box.alive[s.index]]
    if dropped:
        logger.info(f"Tracked samples {dropped} excised at step {state.m}")
    state.samples = [s for s in state.samples if box.alive[s.index]]
    if not state.alive:
        raise ExcisionExhaustedError(f"Excision at K={K} left no tracked sample alive (box fraction {box.fraction:.4f})", state)
    return state


def field_norm(poly: HamiltonianPoly, ctx: NormContext, weights: np.ndarray, samples: int) -> float:
    return 0.0 if poly.is_zero() else vf_triple_norm(poly, ctx, weights, samples)


def _blocks_poly(blocks: LowBlocks, names: tuple[str, ...], sites: tuple[int, ...]) -> HamiltonianPoly:
    """Polynomial of the named generator blocks only."""
    n_angles = blocks.y.n_angles
    picked = LowBlocks.empty(n_angles, len(sites))
    for name in names:
        setattr(picked, name, getattr(blocks, name))
    return blocks_to_poly(picked, sites)


def step_sample(
    sample: SampleState,
    state: KamState,
    model: FrequencyModel,
    config: KamConfig,
    sched: ScheduleStep,
    K: int,
) -> tuple[SampleState, StepRecord, HamiltonianPoly, list]:
    """
    One KAM step for one parameter sample.

    Solves the homological equations in two stages, conjugates ``N + R + P`` by the time-one map of
    the generator and reads ``ω^(m+1)``, ``B^(m+1)``, ``R^(m+1)`` and ``P^(m+1)`` off the result.

    Returns:
        tuple: The updated sample, its step record, the generator and the solver witnesses.
    """
    sites = state.sites
    site_weights = state.weights[list(sites)]
    options = config.solver
    caps = dict(max_y_degree=config.max_y_degree, max_z_degree=config.max_z_degree)
    radius = config.lie_fourier_factor * K
    ctx = NormContext(config.norm_p, model.kappa, sched.s, sched.r)
    ctx_next = NormContext(config.norm_p, model.kappa, sched.s_bridge[-1], sched.r_bridge[-1])
    N = normal_form(sample.omega, sample.lam, sample.B, sites)

    R2, R3 = split_perturbation(sample.R)
    blocks = blocks_from_poly(R2, sites)
    P_tilde = R3 + sample.P

    fx = solve_tangent(sample.omega, blocks.x, K, options.floor)
    Fx = _blocks_poly(replace(blocks, x=fx.solution), ("x",), sites)
    corr_x = bracket_corrections(Fx, P_tilde, sites, fourier_radius=radius)
    first_rhs = replace(blocks, z=blocks.z + corr_x.z, zbar=blocks.zbar + corr_x.zbar)
    first = solve_first_stage(
        sample.omega, sample.lam, model.limit_point, sample.B, first_rhs, K, options, site_weights, options.first_partition, tangent=fx
    )
    F1 = _blocks_poly(first.blocks, ("x", "z", "zbar"), sites)

    corr = bracket_corrections(F1, P_tilde, sites, fourier_radius=radius)
    predicted_omega, predicted_B, update = frequency_and_operator_update(sample.omega, sample.B, blocks, corr)
    second = solve_second_stage(sample.omega, sample.lam, sample.B, blocks + corr, K, options, site_weights, options.second_partition)
    F = (F1 + _blocks_poly(second.blocks, ("y", "zz", "zzbar", "zbarzbar"), sites)).chop(config.chop)

    H = N + sample.R + sample.P
    lie = lie_series(H, F, config.lie_order, fourier_radius=radius, radius=sched.r, **caps)
    D = (lie.poly - N).chop(config.chop)
    low = D.filter(lambda key: is_low(key) and not is_gauge(key))
    D_blocks = blocks_from_poly(low, sites)
    zero = (0,) * len(sample.omega)
    d_omega = D_blocks.y[zero]
    d_B = D_blocks.zzbar[zero]
    new_omega = sample.omega + d_omega.real
    new_B = sample.B + d_B
    new_R = low.filter(lambda key: not is_normal_form_term(key)).chop(config.chop)
    new_P = D.filter(lambda key: not is_low(key)).chop(config.chop)

    tail = R2.filter(lambda key: multi_l1(key.k) > K)
    bracket_low = poisson_bracket(sample.R, F, fourier_radius=radius, **caps).filter(is_low)
    contributions = {
        "fourier_tail": field_norm(tail, ctx_next, state.weights, config.norm_samples),
        "bracket_low": field_norm(bracket_low, ctx_next, state.weights, config.norm_samples),
        "lie_remainder": float(lie.remainder_estimate),
        "prediction_defect": float(
            max(np.abs(predicted_omega - new_omega).max(initial=0.0), np.abs(predicted_B - new_B).max(initial=0.0))
        ),
        "omega_imag": float(np.abs(d_omega.imag).max(initial=0.0)),
        "predicted_omega_update": update["omega"],
    }
    witnesses = first.witnesses + second.witnesses
    for w in witnesses:
        w.sample = sample.index
    divisors = [r.min_divisor for r in (first, second)]
    record = StepRecord(
        m=state.m,
        sample=sample.index,
        epsilon=sched.epsilon,
        K=sched.K,
        K_used=K,
        r_norm_before=field_norm(R2, ctx, state.weights, config.norm_samples),
        r_norm_after=field_norm(new_R, ctx_next, state.weights, config.norm_samples),
        p_norm=field_norm(new_P, ctx_next, state.weights, config.norm_samples),
        omega_update=float(np.abs(d_omega).max(initial=0.0)),
        b_update=float(np.linalg.norm(d_B, 2)) if d_B.size else 0.0,
        min_divisor=float(min(divisors)),
        max_residual=float(max(first.max_residual, second.max_residual)),
        lie_remainder=float(lie.remainder_estimate),
        hermitian_defect=float(np.abs(new_B - new_B.conj().T).max(initial=0.0)),
        reality_defect=float(max(new_R.reality_defect(), new_P.reality_defect())),
        contributions=contributions,
        witnesses=len(witnesses),
    )
    updated = SampleState(sample.index, sample.xi, new_omega, sample.lam, new_B, new_R, new_P, sample.omega0, sample.B0)
    return updated, record, F, witnesses


def kam_step(state: KamState, model: FrequencyModel, config: KamConfig, frequency_map: FrequencyMap | None = None) -> KamState:
    """
    Advance the iteration from step ``m`` to ``m + 1``.

    The live box is excised at the step's Fourier radius first; every tracked sample then solves its
    homological equations and is conjugated by the resulting time-one map. Samples whose solves
    produce witnesses are excised as well. The norm ledger records ``max`` over samples of the
    triple norms of ``R^(m+1)`` and ``P^(m+1)``.

    Raises:
        ExcisionExhaustedError: if no tracked sample survives the step.
        NonConvergenceError: if a Lie series diverges.
    """
    sched = schedule(state.m, config.schedule)
    K = effective_K(sched.K, config.fourier_cap)
    logger.info(f"KAM step {state.m}: ε={sched.epsilon:.3e}, K_m={sched.K:.3e}, K={K}, {len(state.samples)} tracked samples")
    if config.excise:
        state = excise_box(state, model, config, K, frequency_map)

    samples: list[SampleState] = []
    killed: list[int] = []
    r_norms, p_norms = [], []
    for sample in state.samples:
        updated, record, F, witnesses = step_sample(sample, state, model, config, sched, K)
        state.records.append(record)
        if witnesses:
            logger.info(f"Sample {sample.index} excised by {len(witnesses)} solver witnesses at step {state.m}")
            state.witnesses.extend(witnesses)
            killed.append(sample.index)
            continue
        if config.track_maps:
            state.maps.setdefault(sample.index, []).append(
                CoordinateMap.from_generator(
                    F, state.sites, config.lie_order, config.max_y_degree, config.max_z_degree, config.lie_fourier_factor * K
                )
            )
        samples.append(updated)
        r_norms.append(record.r_norm_after)
        p_norms.append(record.p_norm)
        logger.debug(
            f"Sample {sample.index}: ‖R‖ {record.r_norm_before:.3e} -> {record.r_norm_after:.3e}, "
            f"‖P‖ {record.p_norm:.3e}, |Δω| {record.omega_update:.3e}, min divisor {record.min_divisor:.3e}"
        )
    if killed:
        state.box = state.box.kill(killed)
    state.samples = samples
    if not state.alive:
        raise ExcisionExhaustedError(f"No tracked sample survived the solves of step {state.m}", state)
    state.ledger["R"].append(float(max(r_norms)))
    state.ledger["P"].append(float(max(p_norms)))
    state.m += 1
    return state

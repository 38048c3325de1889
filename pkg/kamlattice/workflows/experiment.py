import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from kamlattice.storage.local.artifacts import export_rows, write_json, write_jsonl
from kamlattice.storage.local.config import ExperimentConfig, ModelSection, config_hash
from kamlattice.storage.local.settings import resolve_output_dir
from kamlattice.tasks.algebra.lie import ComposedMap
from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.birkhoff.normal_form import build_normal_form
from kamlattice.tasks.birkhoff.reduce import action_angle_reduce
from kamlattice.tasks.birkhoff.types import NormalFormPackage, ReducedNormalForm
from kamlattice.tasks.exceptions import KamLatticeError
from kamlattice.tasks.homology.constants import ExponentProfile
from kamlattice.tasks.kam.driver import composed_map, default_tracked, ledger_log_ratios, run_kam
from kamlattice.tasks.kam.forcing import angle_forcing
from kamlattice.tasks.kam.schedule import schedule
from kamlattice.tasks.kam.split import normal_form
from kamlattice.tasks.kam.types import KamConfig, KamRun, ScheduleParams, SolverOptions
from kamlattice.tasks.melnikov.report import measure_report, witness_rows
from kamlattice.tasks.melnikov.types import ParameterBox
from kamlattice.tasks.model.assumptions import check_assumptions
from kamlattice.tasks.model.bbm import bbm_model
from kamlattice.tasks.model.gpc import gpc_model
from kamlattice.tasks.model.types import Equation, FrequencyModel
from kamlattice.tasks.verify.report import TorusRecord, VerificationReport, VerificationSettings, verify_torus
from kamlattice.tasks.verify.torus import embedding_from_map

logger = logging.getLogger(__name__)

MEASURE_COLUMNS = {
    "kind": "VARCHAR",
    "K": "DOUBLE",
    "threshold": "DOUBLE",
    "before": "BIGINT",
    "after": "BIGINT",
    "killed_fraction": "DOUBLE",
    "surviving_fraction": "DOUBLE",
}
WITNESS_COLUMNS = {
    "K": "DOUBLE",
    "kind": "VARCHAR",
    "k": "VARCHAR",
    "sites": "VARCHAR",
    "divisor": "DOUBLE",
    "threshold": "DOUBLE",
    "sample": "BIGINT",
}


@dataclass
class ExperimentResult:
    """What a run produced: its directory, exit status, acceptance checks and the in-memory objects."""
    output_dir: Path
    exit_code: int
    checks: dict[str, bool] = field(default_factory=dict)
    report: VerificationReport | None = None
    run: KamRun | None = None
    package: NormalFormPackage | None = None
    reduced: ReducedNormalForm | None = None


def build_model(section: ModelSection) -> FrequencyModel:
    match section.equation:
        case Equation.BBM:
            return bbm_model(section.radius, section.tau[0], tuple(site[0] for site in section.tangent_sites))
        case Equation.GPC:
            model, _ = gpc_model(
                section.radius,
                tuple(section.tau),
                section.N,
                tuple(tuple(site) for site in section.tangent_sites),
                section.tangent_threshold,
            )
            return model
        case _:
            raise ValueError(f"Unsupported equation: {section.equation}")


def default_amplitudes(config: ExperimentConfig) -> np.ndarray:
    """``ζ`` from the configuration, or ``1.5√ε₀`` on every tangent site (inside the annulus ``[√ε₀, 2√ε₀]``)."""
    if config.model.zeta is not None:
        return np.asarray(config.model.zeta, dtype=float)
    return np.full(config.model.N, 1.5 * np.sqrt(config.schedule.epsilon0))


def kam_config(config: ExperimentConfig, model: FrequencyModel) -> KamConfig:
    solver = config.solver
    return KamConfig(
        schedule=ScheduleParams(config.schedule.epsilon0, config.schedule.rho0, config.schedule.s0, config.schedule.r0),
        profile=ExponentProfile(model.N, model.dim_d, model.kappa, config.norm.p, solver.profile_scale),
        solver=SolverOptions(solver.strategy, solver.floor, solver.tol, solver.extended_precision),
        lie_order=solver.lie_order,
        max_y_degree=solver.max_y_degree,
        max_z_degree=solver.max_z_degree,
        fourier_cap=solver.fourier_cap,
        norm_p=config.norm.p,
        norm_samples=config.norm.samples,
        excise=solver.excise,
    )


def parameter_box(xi: np.ndarray, config: ExperimentConfig) -> ParameterBox:
    """Box of relative half-width ``sampling.box_width`` around ``ξ``."""
    half = config.sampling.box_width * np.maximum(np.abs(xi), 1e-12)
    return ParameterBox.sample(xi - half, xi + half, count=config.sampling.parameters, seed=config.seed)


def initial_perturbation(config: ExperimentConfig, model: FrequencyModel, reduced: ReducedNormalForm) -> HamiltonianPoly:
    """``R⁰`` for the configured perturbation mode."""
    match config.model.perturbation:
        case "normal_form":
            return reduced.R0
        case "forced":
            amplitude = config.model.forcing or config.schedule.epsilon0
            return reduced.R0 + angle_forcing(model.N, tuple(model.normal_indices), amplitude)
        case _:
            return HamiltonianPoly.zero(model.N)


def verification_settings(config: ExperimentConfig) -> VerificationSettings:
    acceptance = config.acceptance
    return VerificationSettings(
        grid=config.sampling.grid,
        norm_p=config.norm.p,
        horizon=acceptance.horizon,
        dt=acceptance.dt,
        audit_samples=config.sampling.audit_samples,
        seed=config.seed,
        residual_factor=acceptance.residual_factor,
        residual_floor=acceptance.residual_floor,
        drift_tol=acceptance.drift_tol,
        symplectic_tol=acceptance.symplectic_tol,
        reality_tol=acceptance.reality_tol,
    )


def torus_record(run: KamRun, model: FrequencyModel, R0: HamiltonianPoly, kam: KamConfig, grid: int) -> TorusRecord:
    """
    Torus of the first surviving tracked sample: the composed map sampled on an angle grid, with the truncated
    Hamiltonian ``N⁰ + R⁰`` it should be invariant for.
    """
    state = run.final
    if not state.samples:
        raise KamLatticeError("No tracked sample survived: there is no torus to verify")
    sample = state.samples[0]
    transform = composed_map(state, sample.index) if sample.index in state.maps else ComposedMap([])
    H = normal_form(sample.omega0, sample.lam, sample.B0, state.sites) + R0
    embedding = embedding_from_map(transform, sample.omega, model.n_sites, grid)
    return TorusRecord(
        sample=sample.index,
        xi=np.asarray(sample.xi, dtype=float),
        omega=sample.omega,
        omega0=sample.omega0,
        lam=np.asarray(sample.lam, dtype=float),
        B=sample.B,
        epsilon=schedule(state.m, kam.schedule).epsilon,
        embedding=embedding,
        hamiltonian=H,
        transform=transform,
        weights=model.weights,
    )


def convergence_check(
    run: KamRun, epsilon0: float, factor: float, min_ratio: float = 1.3, floor: float = 1e-13
) -> bool:
    """
    The run did not exhaust its box, the drifts ``sup|ω − ω⁰|`` and ``‖B − B⁰‖_{h_p→h_q}`` stay within
    ``factor·ε₀`` on every tracked sample, and the ``R`` ledger decays with log-ratios of at least ``min_ratio``.
    """
    omega_drift = max(run.omega_drift.values(), default=0.0)
    B_drift = max(run.B_drift.values(), default=0.0)
    ratios = ledger_log_ratios(run.final.ledger["R"], floor)
    logger.info(
        f"Convergence: ω drift {omega_drift:.3e}, B drift {B_drift:.3e}, ledger log-ratios {['%.3f' % r for r in ratios]}"
    )
    return (
        run.status != "exhausted"
        and omega_drift <= factor * epsilon0
        and B_drift <= factor * epsilon0
        and all(r >= min_ratio for r in ratios)
    )


def trace_records(run: KamRun) -> list[dict]:
    ledger = run.final.ledger["R"]
    return [
        {**record.to_json(), "ledger_R": ledger[record.m + 1] if record.m + 1 < len(ledger) else None}
        for record in run.records
    ]


def run_experiment(config: ExperimentConfig, witness_format: str = "csv") -> ExperimentResult:
    """
    Run the pipeline model → normal form → reduction → KAM → verification → measure report and persist
    every artifact under the configured output directory.

    The exit code is 0 iff every enabled acceptance check passes, 1 otherwise.

    Raises:
        KamLatticeError: on a numerical failure; ``failure.json`` records the diagnostics first.
    """
    digest = config_hash(config)
    output_dir = resolve_output_dir(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    write_json(output_dir / "config.json", config.model_dump(mode="json"), digest)
    logger.info(f"Experiment {digest[:12]}: {config.model.equation.value} lattice, radius {config.model.radius}")

    try:
        model = build_model(config.model)
        package = build_normal_form(model, max_z_degree=config.model.max_z_degree, floor=config.solver.floor)
        zeta = default_amplitudes(config)
        reduced = action_angle_reduce(package, zeta, config.schedule.epsilon0)
        R0 = initial_perturbation(config, model, reduced)
        assumptions = check_assumptions(
            model, R0, reduced.H0, package.frequency_map, epsilon0=config.schedule.epsilon0
        )
        write_json(output_dir / "model.json", {"model": model.to_json(), "assumptions": assumptions.to_json()}, digest)
        write_json(
            output_dir / "normal_form.json",
            {"package": package.to_json(), "reduced": reduced.to_json(), "perturbation": config.model.perturbation},
            digest,
        )

        kam = kam_config(config, model)
        box = parameter_box(reduced.xi, config)
        run = run_kam(
            model,
            R0,
            kam,
            frequency_map=package.frequency_map,
            box=box,
            tracked=default_tracked(box, config.sampling.tracked),
            steps=config.schedule.steps,
            target=config.schedule.target,
        )
        write_jsonl(output_dir / "trace.jsonl", trace_records(run), digest)

        report = measure_report(run.final.stages, total=box.count)
        export_rows([row.to_json() for row in report.rows], output_dir, "measure", digest, MEASURE_COLUMNS)
        export_rows(witness_rows(run.final.stages), output_dir, "witnesses", digest, WITNESS_COLUMNS, witness_format)

        record = torus_record(run, model, R0, kam, config.sampling.grid)
        write_json(output_dir / "torus.json", {**record.to_json(), "run": run.to_json()}, digest)
        verification = verify_torus(record, verification_settings(config)) if config.acceptance.verify else None
    except KamLatticeError as e:
        logger.error(f"Experiment {digest[:12]} failed: {e}", exc_info=True)
        write_json(
            output_dir / "failure.json",
            {"error": type(e).__name__, "message": str(e), "diagnostics": getattr(e, "diagnostics", {})},
            digest,
        )
        raise

    checks: dict[str, bool] = {}
    if verification is not None:
        checks = {name: verification.checks[name] for name in config.acceptance.checks if name in verification.checks}
    if "convergence" in config.acceptance.checks:
        checks["convergence"] = convergence_check(
            run,
            config.schedule.epsilon0,
            config.acceptance.residual_factor,
            config.acceptance.ledger_ratio,
            config.acceptance.ledger_floor,
        )
    audits = {
        "verification": verification.to_json() if verification is not None else None,
        "checks": checks,
        "measure": report.to_json(),
        "status": run.status,
    }
    write_json(output_dir / "audits.json", audits, digest)
    exit_code = 0 if all(checks.values()) else 1
    logger.info(f"Experiment {digest[:12]} finished with exit code {exit_code}: {checks}")
    return ExperimentResult(output_dir, exit_code, checks, verification, run, package, reduced)

import logging
from pathlib import Path

import numpy as np
from rich.progress import track

from kamlattice.storage.local.artifacts import export_rows, write_json
from kamlattice.storage.local.config import ExperimentConfig, config_hash
from kamlattice.storage.local.settings import resolve_output_dir
from kamlattice.tasks.birkhoff.closed_forms import closed_form_twist, scan_tangent_sites, twist_frequency_map
from kamlattice.tasks.birkhoff.divisors import nonresonance_scan
from kamlattice.tasks.birkhoff.normal_form import build_normal_form
from kamlattice.tasks.birkhoff.reduce import action_angle_reduce
from kamlattice.tasks.homology.constants import ExponentProfile
from kamlattice.tasks.melnikov.excision import excise_first
from kamlattice.tasks.melnikov.report import excision_trend, measure_report, witness_rows
from kamlattice.tasks.melnikov.types import WitnessKind
from kamlattice.tasks.model.assumptions import check_assumptions
from kamlattice.workflows.experiment import MEASURE_COLUMNS, WITNESS_COLUMNS, build_model, default_amplitudes, parameter_box

logger = logging.getLogger(__name__)

TREND_RADII = (8, 16, 32, 64)


def scan_divisors(
    config: ExperimentConfig,
    Ks: tuple[int, ...] = TREND_RADII,
    N_tilde: int | None = None,
    display_progress: bool = True,
) -> dict:
    """
    Birkhoff nonresonance report and first-Melnikov excision trend of the configured model.

    The trend uses the closed-form frequency map, so no normal form is computed. Each radius excises the same
    starting box independently. Writes ``divisors.json``, ``trend.csv`` and ``trend_witnesses.csv``.
    """
    digest = config_hash(config)
    output_dir = resolve_output_dir(config.output_dir)
    model = build_model(config.model)
    nonresonance = nonresonance_scan(model, N_tilde=N_tilde, floor=config.solver.floor)

    twist, coupling = closed_form_twist(model)
    fmap = twist_frequency_map(model.tangent_frequencies, model.normal_frequencies, twist, coupling)
    xi = model.tangent_frequencies + twist @ default_amplitudes(config)
    box = parameter_box(xi, config)
    profile = ExponentProfile(model.N, model.dim_d, model.kappa, config.norm.p, config.solver.profile_scale)
    radii = list(Ks) if not display_progress else list(track(Ks, description="Excision trend", total=len(Ks)))

    def excise(b, K):
        return excise_first(b, model, K, profile.c, profile.y, fmap, config.solver.extended_precision)

    stages = excision_trend(box, radii, excise, WitnessKind.FIRST, profile.first_threshold)
    trend = measure_report(stages, total=box.count)
    slope = trend.slopes.get(WitnessKind.FIRST.value)
    if slope is not None and slope > -(model.N - 0.5):
        logger.warning(f"Excised fraction decays with slope {slope:.3f}, slower than K^-{model.N - 0.5}")

    result = {"nonresonance": nonresonance.to_json(), "trend": trend.to_json(), "xi": xi, "Ks": list(Ks)}
    write_json(output_dir / "divisors.json", result, digest)
    export_rows([row.to_json() for row in trend.rows], output_dir, "trend", digest, MEASURE_COLUMNS)
    export_rows(witness_rows(stages), output_dir, "trend_witnesses", digest, WITNESS_COLUMNS)
    return result


def normal_form_report(config: ExperimentConfig, write: bool = True) -> dict:
    """Birkhoff normal form and its action-angle reduction at the configured amplitudes, with diagnostics."""
    digest = config_hash(config)
    model = build_model(config.model)
    package = build_normal_form(model, max_z_degree=config.model.max_z_degree, floor=config.solver.floor)
    reduced = action_angle_reduce(package, default_amplitudes(config), config.schedule.epsilon0)
    result = {"package": package.to_json(), "reduced": reduced.to_json()}
    if write:
        write_json(resolve_output_dir(config.output_dir) / "normal_form.json", result, digest)
    return result


def assumption_report(config: ExperimentConfig, candidates: list[tuple] | None = None, K: int = 8) -> dict:
    """
    Standing assumptions on the reduced normal form, and optionally a ranking of candidate tangent sets by
    their directional-derivative margin.
    """
    model = build_model(config.model)
    package = build_normal_form(model, max_z_degree=config.model.max_z_degree, floor=config.solver.floor)
    reduced = action_angle_reduce(package, default_amplitudes(config), config.schedule.epsilon0)
    report = check_assumptions(model, reduced.R0, reduced.H0, package.frequency_map, epsilon0=config.schedule.epsilon0, fourier_K=K)
    result = {"assumptions": report.to_json(), "passed": report.passed}
    if candidates:
        result["candidates"] = [c.to_json() for c in scan_tangent_sites(model, candidates, K)]
    return result


def write_report(path: Path, result: dict, config: ExperimentConfig) -> Path:
    return write_json(Path(path), result, config_hash(config))

from types import SimpleNamespace

import numpy as np
import pytest

from kamlattice.storage.local.config import load_config
from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.kam.driver import ledger_log_ratios
from kamlattice.tasks.kam.schedule import schedule
from kamlattice.tasks.kam.split import split_perturbation
from kamlattice.tasks.kam.types import KamRun, KamState, ScheduleParams
from kamlattice.tasks.melnikov.types import ParameterBox
from kamlattice.workflows.experiment import convergence_check, initial_perturbation, run_experiment


def _run(ledger: list[float], omega_drift: float, B_drift: float, status: str = "completed") -> KamRun:
    box = ParameterBox.sample(np.zeros(2), np.ones(2), count=4)
    state = KamState(len(ledger) - 1, [], box, (), np.ones(3))
    state.ledger["R"] = list(ledger)
    return KamRun(status, state, [], [], {0: omega_drift}, {0: B_drift})


def test_convergence_check_requires_both_drifts_and_decay():
    decaying = [1e-3, 1e-6, 1e-14]
    assert convergence_check(_run(decaying, 1e-6, 1e-6), 1e-4, 10.0)
    assert not convergence_check(_run(decaying, 2e-3, 1e-6), 1e-4, 10.0)
    assert not convergence_check(_run(decaying, 1e-6, 2e-3), 1e-4, 10.0)
    assert not convergence_check(_run(decaying, 1e-6, 1e-6, status="exhausted"), 1e-4, 10.0)
    assert not convergence_check(_run([1e-3, 5e-4, 1e-14], 1e-6, 1e-6), 1e-4, 10.0)
    assert convergence_check(_run([1e-3, 5e-4], 1e-6, 1e-6), 1e-4, 10.0, min_ratio=1.05)


def test_initial_perturbation_modes(bbm_lattice):
    remainder = HamiltonianPoly.monomial(2, 1e-3, gamma=(2, 0))
    reduced = SimpleNamespace(R0=remainder)
    base = {"model": {"radius": 6}}
    normal = initial_perturbation(load_config(overrides=base), bbm_lattice, reduced)
    assert normal is remainder
    none = initial_perturbation(load_config(overrides={"model": {"radius": 6, "perturbation": "none"}}), bbm_lattice, reduced)
    assert none.is_zero()

    config = load_config(overrides={"model": {"radius": 6, "perturbation": "forced"}})
    forced = initial_perturbation(config, bbm_lattice, reduced)
    low, high = split_perturbation(forced)
    assert set(high) == set(remainder)
    assert low.max_abs() == pytest.approx(config.schedule.epsilon0)
    sized = load_config(overrides={"model": {"radius": 6, "perturbation": "forced", "forcing": 3e-5}})
    low, _ = split_perturbation(initial_perturbation(sized, bbm_lattice, reduced))
    assert low.max_abs() == pytest.approx(3e-5)


@pytest.mark.slow
def test_default_forced_run_meets_acceptance(tmp_path):
    config = load_config(overrides={
        "model": {"perturbation": "forced"},
        "acceptance": {"checks": ["residual", "convergence"]},
        "output_dir": str(tmp_path / "run"),
    })
    result = run_experiment(config)
    epsilon0 = config.schedule.epsilon0
    run = result.run
    assert run.status != "exhausted"
    assert run.final.box.fraction >= 0.9

    ledger = run.final.ledger["R"]
    ratios = ledger_log_ratios(ledger, config.acceptance.ledger_floor)
    assert ledger[0] > 0.0
    assert ratios
    assert min(ratios) >= 1.3
    assert max(run.omega_drift.values()) <= 10 * epsilon0
    assert max(run.B_drift.values()) <= 10 * epsilon0
    assert result.checks["convergence"]

    report = result.report
    assert report.residual <= report.residual_bound
    params = ScheduleParams(epsilon0, config.schedule.rho0, config.schedule.s0, config.schedule.r0)
    assert report.residual_bound == pytest.approx(max(10 * schedule(run.steps, params).epsilon, 1e-12))
    assert result.checks["residual"]

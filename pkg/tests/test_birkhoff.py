import numpy as np
import pytest

from kamlattice.storage.local.config import ExperimentConfig, ModelSection
from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.algebra.types import TermKey
from kamlattice.tasks.birkhoff.closed_forms import (
    bbm_coupling_matrix,
    bbm_twist_matrix,
    gpc_constants,
    gpc_twist_matrix,
    resonant_quartic_bbm,
    scan_tangent_sites,
    twist_frequency_map,
)
from kamlattice.tasks.birkhoff.divisors import cubic_divisor, default_tail_radius, nonresonance_scan, quartic_divisor_bbm
from kamlattice.tasks.birkhoff.generators import (
    cancellation_residual,
    fourth_order_reduction,
    is_resonant,
    monomial_divisor,
    third_order_generator,
)
from kamlattice.tasks.birkhoff.normal_form import bbm_normal_form, build_normal_form
from kamlattice.tasks.birkhoff.reduce import action_angle_reduce
from kamlattice.tasks.birkhoff.types import NormalFormPackage
from kamlattice.tasks.exceptions import ConfigurationError, ModelDomainError, SmallDivisorError
from kamlattice.tasks.model.bbm import bbm_cubic_table, bbm_hamiltonian, bbm_normal_frequency
from kamlattice.workflows.experiment import build_model


@pytest.fixture(scope="module")
def bbm_package(bbm_lattice):
    return build_normal_form(bbm_lattice)


def test_cubic_divisor_matches_direct_sum():
    # λ_1 + λ_1 + λ_{-2} = 0.5 + 0.5 - 0.4 at τ = 1
    assert cubic_divisor(1, 1, -2, 1.0) == pytest.approx(0.6)
    assert cubic_divisor(2, -1, -1, 1.0) == pytest.approx(-0.6)
    with pytest.raises(ModelDomainError):
        cubic_divisor(1, 1, 1, 1.0)
    with pytest.raises(ModelDomainError):
        cubic_divisor(0, 1, -1, 1.0)


def test_quartic_divisor_product_identity():
    for quad in [(1, 1, 1, -3), (2, 1, -4, 1), (3, -1, -1, -1)]:
        direct = sum(bbm_normal_frequency(v, 0.7) for v in quad)
        assert quartic_divisor_bbm(*quad, 0.7) == pytest.approx(direct, abs=1e-12)
    with pytest.raises(ModelDomainError):
        quartic_divisor_bbm(1, 1, 1, 1, 1.0)


def test_monomial_divisor():
    key = TermKey((), (), ((0, 1),), ((1, 2),))
    assert monomial_divisor(key, np.array([0.5, 0.4])) == pytest.approx(0.3)
    assert not is_resonant(key)
    assert is_resonant(TermKey((), (), ((0, 1),), ((0, 1),)))


def test_resonant_quartic_coefficients():
    T = 2 * np.pi
    assert resonant_quartic_bbm(1, 1, 1.0, T) == pytest.approx(1.0 / (24.0 * T))
    assert resonant_quartic_bbm(1, 2, 1.0, T) == pytest.approx(resonant_quartic_bbm(2, 1, 1.0, T))
    assert resonant_quartic_bbm(1, 2, 1.0, T) < 0
    with pytest.raises(ValueError):
        resonant_quartic_bbm(0, 1, 1.0, T)


def test_bbm_twist_and_coupling():
    T = 2 * np.pi
    twist = bbm_twist_matrix(1.0, T, (1, 2))
    np.testing.assert_allclose(twist, twist.T)
    np.testing.assert_allclose(np.diag(twist), [1.0 / (12.0 * T), 1.0 / (30.0 * T)])
    assert twist[0, 1] == pytest.approx(2.0 * resonant_quartic_bbm(1, 2, 1.0, T))
    coupling = bbm_coupling_matrix(1.0, T, (1, 2), (3, 4, 5))
    assert coupling.shape == (3, 2)
    with pytest.raises(ConfigurationError):
        bbm_coupling_matrix(1.0, T, (1, 2), (2, 3))


def test_gpc_constants():
    assert gpc_constants(1) == pytest.approx((0.375, 0.25))
    a, b = gpc_constants(2)
    assert a == pytest.approx(9.0 / 64.0)
    assert b == pytest.approx(16.0 / 64.0)
    with pytest.raises(ValueError):
        gpc_constants(0)


def test_gpc_twist_determinants():
    single = gpc_twist_matrix((1.5,), ((11,),))
    a, b = gpc_constants(1)
    assert single.det == pytest.approx(a)
    assert single.reference_defect == pytest.approx(0.0)
    assert single.det_quoted == pytest.approx(a + 4 * b)
    assert single.scale == pytest.approx(2 * np.pi / 1.5)
    five = gpc_twist_matrix((1.5,), tuple((j,) for j in range(11, 16)))
    assert five.det_quoted == pytest.approx(five.det_reference)
    np.testing.assert_allclose(five.twist, five.twist.T)
    assert five.to_json()["det"] == five.det


def test_twist_frequency_map():
    twist = np.array([[2.0, 0.5], [0.5, 1.0]])
    coupling = np.array([[1.0, 0.0]])
    lam_t = np.array([0.5, 0.4])
    lam_n = np.array([0.3])
    fmap = twist_frequency_map(lam_t, lam_n, twist, coupling)
    xi = np.array([0.6, 0.45])
    np.testing.assert_allclose(fmap.omega(xi), xi)
    np.testing.assert_allclose(fmap.normal(lam_t), lam_n)
    zeta = np.linalg.solve(twist, xi - lam_t)
    np.testing.assert_allclose(fmap.normal(xi), lam_n + coupling @ zeta)
    with pytest.raises(ConfigurationError):
        twist_frequency_map(lam_t, lam_n, np.ones((2, 2)), coupling)


def test_nonresonance_scan_bbm(bbm_lattice):
    assert default_tail_radius(bbm_lattice) == 8
    report = nonresonance_scan(bbm_lattice)
    assert report.passed
    assert report.tail_bound == pytest.approx(1.0 / (8.0 * bbm_lattice.tau[0]))
    assert report.minima["cubic"].scanned > 0
    assert report.minima["quartic"].scanned > 0
    assert report.minima["cubic"].identity_defect < 1e-12
    assert report.to_json()["passed"]
    assert not nonresonance_scan(bbm_lattice, floor=10.0).passed


def test_nonresonance_scan_gpc(small_gpc):
    model, _ = small_gpc
    report = nonresonance_scan(model)
    assert "cubic" not in report.minima
    assert report.minima["quartic"].value > 0


def test_bbm_normal_form_removes_cubic_terms(bbm_package):
    diagnostics = bbm_package.diagnostics
    assert diagnostics["cubic_cancellation"] < 1e-12
    assert diagnostics["cubic_leftover"] < 1e-12
    assert diagnostics["quartic_cancellation"] < 1e-12
    assert diagnostics["G_bar_asymmetry"] < 1e-14
    assert bbm_package.transformed.homogeneous(3).max_abs() < 1e-12
    assert len(bbm_package.F3) > 0


def test_bbm_twist_is_resonant_hessian(bbm_package):
    model = bbm_package.model
    tangent = list(model.tangent_indices)
    np.testing.assert_allclose(bbm_package.twist, 2.0 * bbm_package.G_bar[np.ix_(tangent, tangent)])
    np.testing.assert_allclose(bbm_package.twist, bbm_package.twist.T, atol=1e-14)
    assert bbm_package.coupling.shape == (4, 2)
    assert abs(bbm_package.diagnostics["twist_det"]) > 0
    zeta = np.array([0.01, 0.02])
    np.testing.assert_allclose(bbm_package.zeta_of(bbm_package.xi_of(zeta)), zeta)


def test_normal_form_package_json(bbm_package):
    restored = NormalFormPackage.from_json(bbm_package.to_json())
    np.testing.assert_allclose(restored.twist, bbm_package.twist)
    np.testing.assert_allclose(restored.coupling, bbm_package.coupling)
    assert (restored.transformed - bbm_package.transformed).max_abs() == 0.0


def test_normal_form_domain_checks(small_bbm, small_gpc):
    model, _ = small_gpc
    with pytest.raises(ModelDomainError):
        bbm_normal_form(model)
    with pytest.raises(ValueError):
        build_normal_form(small_bbm, max_z_degree=3)


def test_gpc_normal_form_has_no_cubic_generator(small_gpc):
    model, _ = small_gpc
    package = build_normal_form(model)
    assert len(package.F3) == 0
    assert package.twist.shape == (1, 1)


def test_action_angle_reduction_recovers_twist(bbm_package):
    zeta = np.array([0.01, 0.015])
    reduced = action_angle_reduce(bbm_package, zeta, epsilon0=1e-4)
    assert reduced.diagnostics["omega_defect"] < 1e-9
    assert reduced.diagnostics["omega_imag"] < 1e-12
    assert reduced.diagnostics["in_annulus"]
    np.testing.assert_allclose(reduced.xi, bbm_package.omega0(zeta))
    assert reduced.sites == bbm_package.model.normal_indices
    assert reduced.H0.n_angles == 2
    with pytest.raises(ValueError):
        action_angle_reduce(bbm_package, np.array([-0.01, 0.01]))
    with pytest.raises(ValueError):
        action_angle_reduce(bbm_package, np.array([0.01]))


def test_scan_tangent_sites_ranks_candidates(small_bbm):
    ranked = scan_tangent_sites(small_bbm, [((1,), (2,)), ((1,), (3,)), ((2,), (3,))], K=4)
    assert len(ranked) == 3
    margins = [c.margin for c in ranked]
    assert margins == sorted(margins, reverse=True)
    assert ranked[0].to_json()["J"][0] in ([1], [2])


def test_third_order_generator_cancels_cubic_terms(small_bbm, small_gpc):
    cubic = bbm_cubic_table(6, 1.0, 2 * np.pi)
    H0, R = bbm_hamiltonian(small_bbm, cubic)
    F = third_order_generator(cubic, small_bbm)
    assert len(F) == len(R)
    assert cancellation_residual(R, H0, F) < 1e-12
    model, _ = small_gpc
    with pytest.raises(ModelDomainError):
        third_order_generator(cubic, model)


def test_fourth_order_reduction_sorts_terms(small_bbm):
    t = small_bbm.tangent_indices[0]
    a = small_bbm.normal_indices[0]
    resonant = HamiltonianPoly.monomial(0, 0.3, alpha={t: 1, a: 1}, beta={t: 1, a: 1})
    removable = HamiltonianPoly.monomial(0, 0.2, alpha={t: 2}, beta={a: 2})
    tangent_free = HamiltonianPoly.monomial(0, 0.1, alpha={a: 2}, beta={a: 2})
    G_bar, F, G_hat = fourth_order_reduction(resonant + removable + tangent_free, small_bbm)
    assert G_bar[t, a] == pytest.approx(0.15)
    assert G_bar[a, t] == pytest.approx(0.15)
    assert np.count_nonzero(G_bar) == 2
    ((key, coeff),) = list(F.items())
    assert coeff == pytest.approx(0.2j / monomial_divisor(key, small_bbm.frequency_array))
    assert (G_hat - tangent_free).max_abs() == 0.0


def test_unit_tau_has_a_quartic_resonance_on_the_tangent_sites():
    lam = [bbm_normal_frequency(j, 1.0) for j in (1, 2, 3)]
    assert lam[0] + lam[2] - 2.0 * lam[1] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(SmallDivisorError):
        build_normal_form(build_model(ModelSection(radius=6, tau=[1.0])))


def test_default_tau_builds_a_normal_form():
    section = ModelSection(radius=6)
    lam = [bbm_normal_frequency(j, section.tau[0]) for j in (1, 2, 3)]
    assert abs(lam[0] + lam[2] - 2.0 * lam[1]) > 1e-3
    package = build_normal_form(build_model(section), max_z_degree=section.max_z_degree)
    assert abs(package.diagnostics["twist_det"]) > 0
    assert package.diagnostics["quartic_min_divisor"] > 1e-10


@pytest.mark.slow
def test_default_configuration_builds_a_normal_form():
    config = ExperimentConfig()
    package = build_normal_form(build_model(config.model), max_z_degree=config.model.max_z_degree, floor=config.solver.floor)
    assert package.diagnostics["cubic_cancellation"] < 1e-12
    assert package.diagnostics["quartic_min_divisor"] > config.solver.floor

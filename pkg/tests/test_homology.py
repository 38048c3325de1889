import numpy as np
import pytest
from scipy import linalg

from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.exceptions import (
    ContractionError,
    NonConvergenceError,
    SmallDivisorError,
    SolverNotApplicableError,
)
from kamlattice.tasks.homology.constants import ExponentProfile, effective_K
from kamlattice.tasks.homology.cutoff import cutoff
from kamlattice.tasks.homology.first import mode_shift, neumann_inverse, solve_first_melnikov
from kamlattice.tasks.homology.kron import kron_identities_check, kron_vec, solve_kron, vec
from kamlattice.tasks.homology.second import solve_second_melnikov
from kamlattice.tasks.homology.sylvester import (
    SylvesterIntegralOperator,
    contraction_ratio,
    sylvester_integral,
    sylvester_picard_k0,
)
from kamlattice.tasks.homology.types import (
    BlockPartition,
    FourierOperatorSeries,
    FourierVectorSeries,
    MelnikovSign,
    Strategy,
)
from kamlattice.tasks.melnikov.types import WitnessKind
from kamlattice.tasks.norms.sequence import hp_norm


def _hermitian(rng, n, size):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return size * (A + A.conj().T) / 2


def test_kronecker_identities():
    report = kron_identities_check(size=4, seed=3)
    assert set(report) == {"norm", "mixed_product", "inverse", "adjoint", "vec", "kron_vec"}
    for name, value in report.items():
        assert value < 1e-9, name


def test_kron_vec_matches_explicit_product(rng):
    X = rng.standard_normal((3, 2))
    Y = rng.standard_normal((4, 5))
    v = rng.standard_normal(10)
    np.testing.assert_allclose(kron_vec(X, Y, v), np.kron(X, Y) @ v)


def test_solve_kron_matches_scipy_sylvester(rng):
    M = _hermitian(rng, 3, 1.0) + 5 * np.eye(3)
    N = _hermitian(rng, 3, 1.0) + 5 * np.eye(3)
    R = rng.standard_normal((3, 3))
    F, divisor = solve_kron(M, N, R, shift=0.5)
    np.testing.assert_allclose(F, linalg.solve_sylvester(0.5 * np.eye(3) + M, N, R), atol=1e-12)
    assert divisor > 0


def test_sylvester_integral_solves_coercive_equation(rng):
    M = np.diag([1.0, 2.0, 3.0]) + _hermitian(rng, 3, 0.1)
    N = np.diag([0.5, 1.5]) + 0.05j * np.ones((2, 2))
    Y = rng.standard_normal((3, 2))
    X = sylvester_integral(M, N, Y, tol=1e-10)
    np.testing.assert_allclose(M @ X + X @ N, Y, atol=1e-8)


def test_sylvester_integral_flips_negative_definite_equation(rng):
    M = -np.diag([1.0, 2.0])
    N = -np.eye(2)
    Y = rng.standard_normal((2, 2))
    op = SylvesterIntegralOperator(M, N, tol=1e-10)
    assert op.sign == -1.0
    X = op(Y)
    np.testing.assert_allclose(M @ X + X @ N, Y, atol=1e-8)
    np.testing.assert_array_equal(op(np.zeros((2, 2))), np.zeros((2, 2)))


def test_sylvester_integral_needs_coercive_part():
    with pytest.raises(SolverNotApplicableError):
        SylvesterIntegralOperator(np.diag([1.0, -1.0]), np.zeros((2, 2)))


def test_picard_scheme_at_zero_mode(rng):
    lam = np.array([1.0, 2.0, 3.0])
    B = _hermitian(rng, 3, 0.05)
    B_breve = B.conj()
    R0 = rng.standard_normal((3, 3))
    result = sylvester_picard_k0(lam, B, B_breve, R0)
    X = result.solution
    residual = (np.diag(lam) + B) @ X + X @ (np.diag(lam) + B_breve) - R0
    assert np.abs(residual).max() < 1e-10
    assert result.ratio < 0.5
    assert result.iterations == len(result.defects)
    assert result.defects[-1] <= 1e-12


def test_picard_scheme_rejects_large_operator():
    lam = np.array([1.0, 2.0])
    assert contraction_ratio(lam, np.zeros((2, 2))) == 0.0
    with pytest.raises(ContractionError):
        sylvester_picard_k0(lam, np.diag(lam), np.zeros((2, 2)), np.eye(2))


def test_neumann_inverse():
    E = np.array([[0.1, 0.05], [0.05, -0.2]])
    np.testing.assert_allclose(neumann_inverse(2.0, E), np.linalg.inv(2.0 * np.eye(2) + E), atol=1e-13)
    assert neumann_inverse(0.1, E) is None
    assert neumann_inverse(0.0, E) is None


def test_mode_shift():
    omega = np.array([0.5, 0.25])
    assert mode_shift((1, 2), omega, 1.0) == pytest.approx(0.0)
    assert mode_shift((1, -1), omega, 0.0, extended_precision=True) == pytest.approx(-0.25)


def test_first_melnikov_diagonal_solution():
    omega = np.array([0.3])
    lam = np.array([1.0, 2.0])
    R = FourierVectorSeries(1, 2, {(1,): np.array([1.0, 1.0]), (-2,): np.array([0.0, 2.0]), (5,): np.ones(2)})
    result = solve_first_melnikov(omega, lam, None, R, K=3)
    np.testing.assert_allclose(result.solution[(1,)], [1.0 / 0.7, 1.0 / 1.7])
    np.testing.assert_allclose(result.solution[(-2,)], [0.0, 2.0 / 2.6])
    assert (5,) not in result.solution
    assert result.witnesses == []
    assert result.min_divisor == pytest.approx(0.7)
    assert result.max_residual < 1e-14


def test_first_melnikov_structured_matches_dense(rng):
    n = 6
    lam = np.linspace(0.8, 2.0, n)
    B = _hermitian(rng, n, 0.02)
    R = FourierVectorSeries(2, n, {
        (1, 0): rng.standard_normal(n) + 0j,
        (0, -1): rng.standard_normal(n) + 0j,
        (1, 1): rng.standard_normal(n) + 0j,
    })
    omega = np.array([0.31, 0.17])
    weights = np.arange(1.0, n + 1)
    dense = solve_first_melnikov(omega, lam, B, R, K=4, strategy=Strategy.DENSE)
    structured = solve_first_melnikov(omega, lam, B, R, K=4, strategy=Strategy.STRUCTURED, site_weights=weights, partition=4.0)
    for k in R.modes:
        np.testing.assert_allclose(structured.solution[k], dense.solution[k], atol=1e-10)
    assert {t.strategy for t in structured.traces} <= {"structured", "dense-fallback"}


def test_first_melnikov_collects_witness_on_zero_divisor():
    omega = np.array([0.5])
    lam = np.array([0.5, 2.0])
    R = FourierVectorSeries(1, 2, {(1,): np.ones(2)})
    result = solve_first_melnikov(omega, lam, None, R, K=2)
    assert len(result.witnesses) == 1
    witness = result.witnesses[0]
    assert witness.kind == WitnessKind.FIRST
    assert witness.k == (1,)
    assert witness.sites == (0,)
    assert len(result.solution) == 0
    with pytest.raises(SmallDivisorError):
        solve_first_melnikov(omega, lam, None, R, K=2, raise_on_small=True)


def test_second_melnikov_structured_matches_dense(rng):
    n = 5
    lam = 0.3 * np.arange(1.0, n + 1)
    B = _hermitian(rng, n, 0.01)
    B_breve = B.T
    R = FourierOperatorSeries(1, (n, n), {
        (1,): rng.standard_normal((n, n)) + 0j,
        (-1,): rng.standard_normal((n, n)) + 0j,
    })
    omega = np.array([0.7])
    weights = np.arange(1.0, n + 1)
    kwargs = dict(sign=MelnikovSign.SUM, site_weights=weights, partition=3.0)
    dense = solve_second_melnikov(omega, lam, B, B_breve, R, K=2, strategy=Strategy.DENSE, **kwargs)
    structured = solve_second_melnikov(omega, lam, B, B_breve, R, K=2, strategy=Strategy.STRUCTURED, **kwargs)
    for k in R.modes:
        np.testing.assert_allclose(structured.solution[k], dense.solution[k], atol=1e-8)
    assert structured.max_residual < 1e-8


def test_second_melnikov_zero_mode_uses_picard(rng):
    n = 3
    lam = np.array([1.0, 1.5, 2.5])
    B = _hermitian(rng, n, 0.02)
    R = FourierOperatorSeries(1, (n, n), {(0,): rng.standard_normal((n, n)) + 0j})
    result = solve_second_melnikov(np.array([0.4]), lam, B, B.T, R, K=1)
    assert result.traces[0].strategy == "picard-k0"
    assert result.max_residual < 1e-10


def test_difference_sign_rejects_resonant_rhs():
    lam = np.array([1.0, 2.0])
    R = FourierOperatorSeries(1, (2, 2), {(0,): np.diag([1.0, 0.0])})
    with pytest.raises(SmallDivisorError):
        solve_second_melnikov(np.array([0.4]), lam, None, None, R, K=1, sign=MelnikovSign.DIFFERENCE)


def test_difference_sign_solves_off_diagonal_rhs():
    lam = np.array([1.0, 3.0])
    R = FourierOperatorSeries(1, (2, 2), {(0,): np.array([[0.0, 2.0], [4.0, 0.0]])})
    result = solve_second_melnikov(np.array([0.4]), lam, None, None, R, K=1, sign=MelnikovSign.DIFFERENCE)
    np.testing.assert_allclose(result.solution[(0,)], [[0.0, -1.0], [2.0, 0.0]], atol=1e-12)
    assert result.traces[0].strategy == "resonant-eigenbasis"


def test_melnikov_sign_patterns():
    assert MelnikovSign.SUM.signs == (1, 1)
    assert MelnikovSign.NEG_SUM.signs == (-1, -1)
    assert MelnikovSign.DIFFERENCE.signs == (1, -1)
    assert MelnikovSign.NEG_DIFFERENCE.signs == (-1, 1)


def test_fourier_series_validation():
    with pytest.raises(ValueError):
        FourierVectorSeries(1, 2, {(1,): np.ones(3)})
    with pytest.raises(ValueError):
        FourierOperatorSeries(2, (2, 2), {(1,): np.eye(2)})


def test_cutoff_projects_modes():
    series = FourierVectorSeries(2, 1, {(1, 1): np.ones(1), (2, 1): np.ones(1), (0, 0): np.ones(1)})
    assert set(cutoff(series, 2).modes) == {(1, 1), (0, 0)}
    poly = HamiltonianPoly.monomial(1, 1.0, k=(3,)) + HamiltonianPoly.monomial(1, 1.0, k=(1,))
    assert cutoff(poly, 2).fourier_radius() == 1
    with pytest.raises(ValueError):
        cutoff(series, 0)


def test_block_partition():
    part = BlockPartition.at(np.array([1.0, 2.0, 3.0, 4.0]), 3.0)
    np.testing.assert_array_equal(part.head, [0, 1])
    np.testing.assert_array_equal(part.tail, [2, 3])
    assert not part.trivial
    assert BlockPartition.at(np.array([1.0, 2.0]), np.inf).trivial


def test_exponent_profile():
    profile = ExponentProfile(N=2, d=1, kappa=1.0)
    assert profile.y == pytest.approx(6.0)
    assert profile.c == pytest.approx(1.01 * 12.0)
    assert profile.c20 == 2.0
    assert profile.c21 == 4.0
    assert profile.tangent_threshold(2.0) == pytest.approx(1.0 / 16.0)
    assert profile.second_threshold(2.0) == pytest.approx(2.0 * profile.first_threshold(2.0))
    assert ExponentProfile.asymptotic(2, 1, 1.0).scale == pytest.approx(300.0)


def test_effective_radius():
    assert effective_K(40.0) == 16
    assert effective_K(3.7) == 3
    assert effective_K(0.2) == 1
    assert effective_K(float("inf")) == 16
    with pytest.raises(ValueError):
        effective_K(float("inf"), None)


@pytest.mark.parametrize("seed", [0, 3, 11, 2024])
def test_kronecker_identities_over_many_draws(seed):
    report = kron_identities_check(size=5, seed=seed, instances=16)
    for name, value in report.items():
        assert value < 1e-8, name


def test_kronecker_identities_need_an_instance():
    with pytest.raises(ValueError):
        kron_identities_check(instances=0)


def test_sylvester_integral_raises_when_quadrature_stalls(rng):
    M = np.diag([1.0, 2.0, 3.0]) + _hermitian(rng, 3, 0.1)
    N = np.diag([0.5, 1.5])
    Y = rng.standard_normal((3, 2))
    op = SylvesterIntegralOperator(M, N, tol=1e-30)
    with pytest.raises(NonConvergenceError) as info:
        op(Y)
    assert info.value.diagnostics["residual"] > 1e-30
    assert info.value.diagnostics["panels"] >= 2
    assert op.last_residual == info.value.diagnostics["residual"]


def test_first_melnikov_enforces_residual_bound(rng, caplog):
    n = 6
    lam = np.linspace(0.8, 2.0, n)
    B = _hermitian(rng, n, 0.02)
    R = FourierVectorSeries(2, n, {(1, 0): rng.standard_normal(n) + 1j * rng.standard_normal(n)})
    omega = np.array([0.31, 0.17])
    weights = np.arange(1.0, n + 1)
    result = solve_first_melnikov(omega, lam, B, R, K=4, site_weights=weights, partition=4.0)
    assert result.max_residual <= 1e-8
    with pytest.raises(NonConvergenceError) as info:
        solve_first_melnikov(omega, lam, B, R, K=4, strategy=Strategy.DENSE, residual_tol=1e-300)
    assert info.value.diagnostics["k"] == [1, 0]
    assert info.value.diagnostics["strategy"] == "dense"
    with caplog.at_level("WARNING", logger="kamlattice.tasks.homology"), pytest.raises(NonConvergenceError) as info:
        solve_first_melnikov(omega, lam, B, R, K=4, site_weights=weights, partition=4.0, residual_tol=1e-300)
    assert info.value.diagnostics["strategy"].endswith("dense")
    assert "solving densely" in caplog.text


def test_second_melnikov_enforces_residual_bound(rng, caplog):
    n = 5
    lam = 0.3 * np.arange(1.0, n + 1)
    B = _hermitian(rng, n, 0.01)
    R = FourierOperatorSeries(1, (n, n), {(1,): rng.standard_normal((n, n)) + 0j})
    omega = np.array([0.7])
    kwargs = dict(sign=MelnikovSign.SUM, site_weights=np.arange(1.0, n + 1), partition=3.0)
    result = solve_second_melnikov(omega, lam, B, B.T, R, K=2, **kwargs)
    assert result.max_residual <= 1e-8
    with pytest.raises(NonConvergenceError) as info:
        solve_second_melnikov(omega, lam, B, B.T, R, K=2, strategy=Strategy.DENSE, residual_tol=1e-300, **kwargs)
    assert info.value.diagnostics["k"] == [1]
    with caplog.at_level("WARNING", logger="kamlattice.tasks.homology"), pytest.raises(NonConvergenceError) as info:
        solve_second_melnikov(omega, lam, B, B.T, R, K=2, residual_tol=1e-300, **kwargs)
    assert info.value.diagnostics["strategy"].startswith("dense")
    assert "using dense Kronecker solve" in caplog.text


def _scaled_hermitian(rng, lam, ratio):
    """Hermitian ``B`` with ``‖Λ⁻¹⌊B⌉‖ = ratio``."""
    B = _hermitian(rng, len(lam), 1.0)
    return B * ratio * lam.min() / np.linalg.norm(np.abs(B), 2)


def test_sylvester_solvers_reproduce_the_diagonal_closed_form(rng):
    m, n = np.array([1.0, 1.7, 2.4, 3.1]), np.array([0.6, 1.2, 2.0])
    Y = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    expected = Y / (m[:, None] + n[None, :])
    np.testing.assert_allclose(sylvester_integral(np.diag(m), np.diag(n), Y, tol=1e-12), expected, atol=1e-11)
    np.testing.assert_allclose(solve_kron(np.diag(m), np.diag(n), Y)[0], expected, atol=1e-13)
    square = rng.standard_normal((4, 4)) + 0j
    picard = sylvester_picard_k0(m, np.zeros((4, 4)), np.zeros((4, 4)), square)
    np.testing.assert_allclose(picard.solution, square / (m[:, None] + m[None, :]), atol=1e-13)
    assert picard.iterations == 1


@pytest.mark.slow
def test_sylvester_solver_triad_agrees():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(3, 11))
        lam = np.sort(rng.uniform(1.0, 3.0, n))
        B = _scaled_hermitian(rng, lam, rng.uniform(0.01, 0.3))
        M, N = np.diag(lam) + B, np.diag(lam) + B.T
        Y = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        kron, _ = solve_kron(M, N, Y)
        scale = np.linalg.norm(kron)
        for X in (sylvester_integral(M, N, Y, tol=1e-12), sylvester_picard_k0(lam, B, B.T, Y).solution):
            assert np.linalg.norm(X - kron) <= 1e-9 * scale
        assert np.linalg.norm(linalg.solve_sylvester(M, N, Y) - kron) <= 1e-9 * scale


def test_picard_defects_decay_at_the_contraction_rate(rng):
    for _ in range(50):
        n = int(rng.integers(3, 9))
        lam = np.sort(rng.uniform(1.0, 3.0, n))
        B = _scaled_hermitian(rng, lam, rng.uniform(0.01, 0.3))
        R0 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        result = sylvester_picard_k0(lam, B, B.T, R0)
        sizes = [1.0] + [d for d in result.defects if d > 1e-10]
        worst = max(b / a for a, b in zip(sizes, sizes[1:]))
        assert worst <= 2.2 * contraction_ratio(lam, B)


def test_first_melnikov_is_linear(rng):
    n = 6
    lam = np.linspace(0.8, 2.0, n)
    B = _hermitian(rng, n, 0.02)
    omega = np.array([0.31, 0.17])
    modes = [(1, 0), (0, -1), (2, 1)]
    R1 = {k: rng.standard_normal(n) + 1j * rng.standard_normal(n) for k in modes}
    R2 = {k: rng.standard_normal(n) + 1j * rng.standard_normal(n) for k in modes}
    c = 2.5 - 0.7j
    kwargs = dict(site_weights=np.arange(1.0, n + 1), partition=4.0)

    def solve(modes_):
        return solve_first_melnikov(omega, lam, B, FourierVectorSeries(2, n, modes_), K=4, **kwargs).solution

    a, b, combined = solve(R1), solve(R2), solve({k: R1[k] + c * R2[k] for k in modes})
    for k in modes:
        np.testing.assert_allclose(combined[k], a[k] + c * b[k], atol=1e-11)


def test_second_melnikov_is_linear_and_keeps_the_zero_mode_hermitian(rng):
    n = 4
    lam = np.array([1.0, 1.4, 2.2, 3.0])
    B = rng.standard_normal((n, n))
    B = 0.02 * (B + B.T)
    omega = np.array([0.4])
    R1 = {k: rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) for k in [(0,), (1,)]}
    R2 = {k: rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) for k in [(0,), (1,)]}
    c = -1.5 + 0.25j

    def solve(modes_):
        return solve_second_melnikov(omega, lam, B, B, FourierOperatorSeries(1, (n, n), modes_), K=1).solution

    a, b, combined = solve(R1), solve(R2), solve({k: R1[k] + c * R2[k] for k in R1})
    for k in R1:
        np.testing.assert_allclose(combined[k], a[k] + c * b[k], atol=1e-10)

    hermitian = R1[(0,)] + R1[(0,)].conj().T
    X = solve({(0,): hermitian})[(0,)]
    np.testing.assert_allclose(X, X.conj().T, atol=1e-10)


def _sweep_instance(rng, low: int, high: int):
    n = int(rng.integers(low, high + 1))
    lam = np.sort(rng.uniform(1.0, 3.0, n))
    B = _scaled_hermitian(rng, lam, 0.1)
    omega = rng.uniform(0.1, 1.0, 2)
    modes = {tuple(int(v) for v in rng.integers(0, 9, 2)) for _ in range(2)}
    return n, lam, B, omega, sorted(modes)


@pytest.mark.slow
def test_structured_solvers_match_dense_oracles():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n, lam, B, omega, modes = _sweep_instance(rng, 8, 30)
        weights = np.arange(1.0, n + 1)
        R = FourierVectorSeries(2, n, {k: rng.standard_normal(n) + 1j * rng.standard_normal(n) for k in modes})
        dense = solve_first_melnikov(omega, lam, B, R, K=16, strategy=Strategy.DENSE)
        structured = solve_first_melnikov(omega, lam, B, R, K=16, site_weights=weights, partition=n / 2)
        assert set(structured.solution.modes) == set(dense.solution.modes)
        assert dense.solution
        for k in dense.solution.modes:
            error = hp_norm(structured.solution[k] - dense.solution[k], 2.0, weights)
            assert error <= 1e-7 * hp_norm(dense.solution[k], 2.0, weights)
        assert max(dense.max_residual, structured.max_residual) <= 1e-8

        n, lam, B, omega, modes = _sweep_instance(rng, 8, 20)
        weights = np.arange(1.0, n + 1)
        R = FourierOperatorSeries(2, (n, n), {k: rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) for k in modes})
        kwargs = dict(sign=MelnikovSign.SUM, site_weights=weights, partition=n / 2)
        dense = solve_second_melnikov(omega, lam, B, B.T, R, K=16, strategy=Strategy.DENSE, **kwargs)
        structured = solve_second_melnikov(omega, lam, B, B.T, R, K=16, **kwargs)
        assert set(structured.solution.modes) == set(dense.solution.modes)
        assert dense.solution
        for k in dense.solution.modes:
            error = np.linalg.norm(structured.solution[k] - dense.solution[k])
            assert error <= 1e-7 * np.linalg.norm(dense.solution[k])
        assert max(dense.max_residual, structured.max_residual) <= 1e-8

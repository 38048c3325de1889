import numpy as np
import pytest

from kamlattice.tasks.algebra.lie import ComposedMap, CoordinateMap
from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.verify.audits import AuditResult, reality_audit, symplectic_audit
from kamlattice.tasks.verify.report import TorusRecord, VerificationReport, VerificationSettings, verify_torus
from kamlattice.tasks.verify.stability import is_hermitian, norm_conservation
from kamlattice.tasks.verify.torus import TorusEmbedding, angle_grid, embedding_from_map, torus_residual


def _rotator(omega: float = 0.5, lam: float = 0.3) -> HamiltonianPoly:
    return HamiltonianPoly.monomial(1, omega, gamma=(1,)) + HamiltonianPoly.monomial(1, lam, alpha={0: 1}, beta={0: 1})


def _flat_embedding(omega: float = 0.5) -> TorusEmbedding:
    return embedding_from_map(ComposedMap([]), np.array([omega]), n_sites=1, grid=8)


def test_angle_grid():
    grid = angle_grid(2, 4)
    assert grid.shape == (16, 2)
    assert grid.min() == 0.0
    assert grid.max() == pytest.approx(1.5 * np.pi)


def test_flat_torus_is_invariant():
    embedding = _flat_embedding()
    assert embedding.support() == 0
    assert torus_residual(embedding, _rotator(), grid_size=8) < 1e-14


def test_residual_measures_angle_dependence():
    # H = 0.5y + 0.1cos(x) pushes y with speed 0.1 sin(x)
    H = (
        HamiltonianPoly.monomial(1, 0.5, gamma=(1,))
        + HamiltonianPoly.monomial(1, 0.05, k=(1,))
        + HamiltonianPoly.monomial(1, 0.05, k=(-1,))
    )
    assert torus_residual(_flat_embedding(), H, grid_size=8) == pytest.approx(0.1)


def test_residual_grid_must_resolve_support():
    coefficients = {block: np.zeros((4, 1), dtype=complex) for block in ("x", "y", "z", "zbar")}
    coefficients["y"][1, 0] = 0.1
    embedding = TorusEmbedding(np.array([0.5]), 1, coefficients)
    assert embedding.support() == 1
    with pytest.raises(ValueError):
        torus_residual(embedding, _rotator(), grid_size=1)


def test_embedding_samples_a_shift():
    # the generator 0.2y shifts the angle by -0.2
    shift = CoordinateMap.from_generator(HamiltonianPoly.monomial(1, 0.2, gamma=(1,)), (0,), order=2)
    embedding = embedding_from_map(ComposedMap([shift]), np.array([0.5]), n_sites=1, grid=8)
    point = embedding(np.array([[1.0]]))
    np.testing.assert_allclose(point.x, [[0.8]], atol=1e-12)
    restored = TorusEmbedding.from_json(embedding.to_json())
    np.testing.assert_allclose(restored(np.array([[1.0]])).x, point.x)


def test_norm_is_conserved_by_hermitian_flow(rng):
    n = 4
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    B = 0.01 * (A + A.conj().T)
    assert is_hermitian(B)
    z0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    drift = norm_conservation(B, np.linspace(0.5, 2.0, n), z0, horizon=50.0, dt=0.1)
    assert drift < 1e-12


def test_norm_drifts_under_non_hermitian_flow():
    B = np.array([[0.1j, 0.0], [0.0, 0.0]])
    drift = norm_conservation(B, np.array([1.0, 2.0]), np.array([1.0, 0.0]), horizon=1.0, dt=0.1)
    assert drift == pytest.approx(np.exp(0.1) - 1.0, rel=1e-6)


def test_norm_conservation_validation():
    with pytest.raises(ValueError):
        norm_conservation(np.zeros((2, 2)), np.ones(2), np.ones(3), 1.0, 0.1)
    with pytest.raises(ValueError):
        norm_conservation(np.zeros((2, 2)), np.ones(2), np.ones(2), 0.0, 0.1)


def test_reality_audit():
    assert reality_audit(_rotator()).passed
    result = reality_audit(HamiltonianPoly.monomial(0, 1j, alpha={0: 1}, beta={0: 1}))
    assert not result.passed
    assert result.violation > 0
    assert AuditResult.from_json(result.to_json()) == result


def test_identity_is_symplectic():
    result = symplectic_audit(CoordinateMap.identity(1, (0, 1)))
    assert result.passed
    assert result.violation == 0.0
    with pytest.raises(ValueError):
        symplectic_audit(ComposedMap([]))


def _record(epsilon: float = 1e-6) -> TorusRecord:
    return TorusRecord(
        sample=0,
        xi=np.array([0.5]),
        omega=np.array([0.5]),
        omega0=np.array([0.5]),
        lam=np.array([0.3]),
        B=np.zeros((1, 1)),
        epsilon=epsilon,
        embedding=_flat_embedding(),
        hamiltonian=_rotator(),
        transform=ComposedMap([]),
        weights=np.array([1.0]),
    )


def test_verify_flat_torus():
    settings = VerificationSettings(grid=8, horizon=10.0, dt=0.1)
    report = verify_torus(_record(), settings)
    assert report.passed
    assert report.checks == {"residual": True, "stability": True, "reality": True, "symplectic": True}
    assert report.residual_bound == pytest.approx(1e-5)
    restored = VerificationReport.from_json(report.to_json())
    assert restored.numbers() == report.numbers()


def test_torus_record_json():
    record = _record()
    restored = TorusRecord.from_json(record.to_json())
    np.testing.assert_allclose(restored.B, record.B)
    assert restored.epsilon == record.epsilon
    assert restored.transform.maps == []
    settings = VerificationSettings(grid=8, horizon=10.0, dt=0.1)
    assert verify_torus(restored, settings).numbers() == verify_torus(record, settings).numbers()

import numpy as np
import pytest

from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.norms.fields import VectorFieldPoly, vf_triple_norm
from kamlattice.tasks.norms.sequence import default_weights, hp_norm, majorant, op_norm
from kamlattice.tasks.norms.types import LatticeOperator, NormContext


def test_hp_norm_weights():
    assert hp_norm(np.array([3.0, 4.0]), 0) == pytest.approx(5.0)
    assert hp_norm(np.array([3.0, 4.0]), 1) == pytest.approx(np.sqrt(73.0))
    assert hp_norm(np.array([3.0, 4.0]), 1, weights=np.array([0.0, 1.0])) == pytest.approx(5.0)


def test_hp_norm_is_batched():
    z = np.array([[3.0, 4.0], [1.0, 0.0]])
    np.testing.assert_allclose(hp_norm(z, 0), [5.0, 1.0])


def test_op_norm_of_diagonal():
    # diag(1, 2) from h_0 to h_1 with weights 1, 2 scales by |j|
    A = np.diag([1.0, 2.0])
    assert op_norm(A, 0, 1) == pytest.approx(4.0)
    assert op_norm(A, 1, 1) == pytest.approx(2.0)
    assert op_norm(np.zeros((0, 0)), 0, 1) == 0.0


def test_op_norm_accepts_lattice_operator():
    op = LatticeOperator(np.array([[0.0, 1.0], [1.0, 0.0]]), default_weights(2))
    assert op_norm(op, 0, 0) == pytest.approx(1.0)
    assert op_norm(op, 1, 1) == pytest.approx(2.0)


def test_majorant_dispatch():
    np.testing.assert_allclose(majorant(np.array([-1.0, 2j])), [1.0, 2.0])
    poly = HamiltonianPoly.monomial(1, -3j, k=(1,))
    assert list(majorant(poly).items())[0][1] == pytest.approx(3.0)


def test_norm_context():
    ctx = NormContext(p=1.0, kappa=2.0, s=0.5, r=0.1)
    assert ctx.q == 3.0
    assert ctx.with_domain(0.2, 0.05).q == 3.0
    with pytest.raises(ValueError):
        NormContext(p=1.0, kappa=0.0, s=0.5, r=0.1)
    with pytest.raises(ValueError):
        NormContext(p=-1.0, kappa=1.0, s=0.5, r=0.1)
    with pytest.raises(ValueError):
        NormContext(p=1.0, kappa=1.0, s=0.5, r=0.0)


def test_lattice_operator_blocks():
    weights = np.array([1.0, 2.0, 3.0, 4.0])
    entries = np.arange(16, dtype=float).reshape(4, 4)
    op = LatticeOperator(entries, weights, thresholds=(2.0,))
    low, high = op.row_sets()
    np.testing.assert_array_equal(low, [0, 1])
    np.testing.assert_array_equal(high, [2, 3])
    np.testing.assert_allclose(op.block(0, 1).entries, [[2.0, 3.0], [6.0, 7.0]])
    assert op.hermitian_defect() > 0
    assert (op + op.adjoint()).hermitian_defect() == 0.0


def test_lattice_operator_validation():
    with pytest.raises(ValueError):
        LatticeOperator(np.zeros((2, 3)), np.ones(2))
    with pytest.raises(ValueError):
        LatticeOperator(np.zeros((2, 2)), np.ones(2), thresholds=(3.0, 2.0))


def test_triple_norm_of_normal_rotation():
    # H = |z_0|² has field Z = −i z_0 so the triple norm is r at weight one
    ctx = NormContext(p=0.0, kappa=1.0, s=0.1, r=0.2)
    H = HamiltonianPoly.monomial(0, 1.0, alpha={0: 1}, beta={0: 1})
    value = vf_triple_norm(H, ctx, np.array([1.0]))
    assert value == pytest.approx(np.sqrt(2.0) * 0.2)


def test_triple_norm_is_homogeneous():
    ctx = NormContext(p=1.0, kappa=1.0, s=0.1, r=0.1)
    H = HamiltonianPoly.monomial(1, 1.0, k=(1,), alpha={0: 1}, beta={1: 1})
    H = H + H.conj()
    weights = default_weights(2)
    assert vf_triple_norm(H.scale(3.0), ctx, weights) == pytest.approx(3.0 * vf_triple_norm(H, ctx, weights))


def test_triple_norm_of_constant_field():
    ctx = NormContext(p=1.0, kappa=1.0, s=0.1, r=0.1)
    W = VectorFieldPoly.constant(2, x=np.array([3.0, 4.0]))
    assert vf_triple_norm(W, ctx, np.array([1.0])) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        vf_triple_norm(W, ctx, np.array([1.0]), samples=0)


def _random_matrix(rng, n: int, m: int | None = None) -> np.ndarray:
    m = n if m is None else m
    return rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))


def _random_weights(rng, n: int) -> np.ndarray:
    return np.sort(rng.uniform(1.0, 12.0, n))


def test_majorant_is_sub_additive_and_sub_multiplicative(rng):
    for _ in range(1000):
        n = int(rng.integers(2, 8))
        p = float(rng.uniform(0.0, 2.0))
        weights = _random_weights(rng, n)
        X, Y = _random_matrix(rng, n), _random_matrix(rng, n)

        def norm(A):
            return op_norm(majorant(A), p, p, weights)

        np.testing.assert_array_equal(majorant(majorant(X)), majorant(X))
        assert op_norm(X, p, p, weights) <= norm(X) * (1 + 1e-12)
        assert norm(X + Y) <= (norm(X) + norm(Y)) * (1 + 1e-12)
        assert norm(X @ Y) <= norm(X) * norm(Y) * (1 + 1e-12)


def test_block_views_never_exceed_the_operator(rng):
    for _ in range(1000):
        n = int(rng.integers(3, 10))
        thresholds = tuple(sorted(set(np.round(rng.uniform(1.0, 12.0, 2), 6))))
        op = LatticeOperator(_random_matrix(rng, n), _random_weights(rng, n), thresholds=thresholds)
        p = float(rng.uniform(0.0, 2.0))
        q = p + float(rng.uniform(0.0, 2.0))
        full = op_norm(op, p, q)
        for a in range(len(thresholds) + 1):
            for b in range(len(thresholds) + 1):
                assert op_norm(op.block(a, b), p, q) <= full * (1 + 1e-12)
                np.testing.assert_array_equal(op.majorant().block(a, b).entries, op.block(a, b).majorant().entries)


def test_hermitian_spectral_norm_is_below_weighted_norm(rng):
    for _ in range(1000):
        n = int(rng.integers(2, 10))
        A = _random_matrix(rng, n)
        A = A + A.conj().T
        p = float(rng.uniform(0.0, 3.0))
        assert np.linalg.norm(A, 2) <= op_norm(A, p, p, _random_weights(rng, n)) * (1 + 1e-10)


def test_majorant_inflation_on_finite_blocks(rng):
    for _ in range(1000):
        size = int(rng.integers(1, 10))
        weights = _random_weights(rng, size)
        A = _random_matrix(rng, size)
        p = float(rng.uniform(0.0, 2.0))
        q = p + 1.0
        assert op_norm(majorant(A), p, q, weights) <= np.sqrt(size) * op_norm(A, p, q, weights) * (1 + 1e-12)


def test_norms_are_homogeneous_and_subadditive(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        weights = _random_weights(rng, n)
        p = float(rng.uniform(0.0, 2.0))
        c = complex(rng.standard_normal(), rng.standard_normal())
        u, v = _random_matrix(rng, 1, n)[0], _random_matrix(rng, 1, n)[0]
        assert hp_norm(c * u, p, weights) == pytest.approx(abs(c) * hp_norm(u, p, weights))
        assert hp_norm(u + v, p, weights) <= (hp_norm(u, p, weights) + hp_norm(v, p, weights)) * (1 + 1e-12)
        X, Y = _random_matrix(rng, n), _random_matrix(rng, n)
        assert op_norm(c * X, p, p + 1, weights) == pytest.approx(abs(c) * op_norm(X, p, p + 1, weights))
        assert op_norm(X + Y, p, p + 1, weights) <= (op_norm(X, p, p + 1, weights) + op_norm(Y, p, p + 1, weights)) * (1 + 1e-12)
        assert op_norm(X, 0, 0, weights) == pytest.approx(np.linalg.norm(X, 2))


def test_weight_ratio_bounds_the_norm_gain(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 10))
        weights = _random_weights(rng, n)
        z = _random_matrix(rng, 1, n)[0] * (rng.random(n) < 0.6)
        if not np.any(z):
            continue
        p, kappa = float(rng.uniform(0.0, 2.0)), float(rng.uniform(0.5, 2.0))
        support = np.flatnonzero(z)
        bound = weights[support].min() ** kappa
        assert hp_norm(z, p + kappa, weights) >= bound * hp_norm(z, p, weights) * (1 - 1e-12)

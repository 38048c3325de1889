import numpy as np
import pytest
from scipy import linalg

from kamlattice.tasks.algebra.bracket import poisson_bracket
from kamlattice.tasks.algebra.lie import ComposedMap, CoordinateMap, lie_series, lie_transform, poisson_tensor
from kamlattice.tasks.algebra.poly import HamiltonianPoly, frequency_hamiltonian, quadratic_form
from kamlattice.tasks.algebra.types import PhasePoint, TermKey, Variable, make_exponent
from kamlattice.tasks.exceptions import NonConvergenceError
from kamlattice.tasks.model.vector_field import real_point
from kamlattice.tasks.verify.audits import symplectic_audit


def _point(rng, n_angles, n_sites, radius=0.3):
    x = rng.uniform(0, 2 * np.pi, n_angles)
    y = rng.uniform(-radius, radius, n_angles)
    z = radius * (rng.standard_normal(n_sites) + 1j * rng.standard_normal(n_sites))
    return real_point(x, y, z)


def _flat_gradient(poly: HamiltonianPoly, point: PhasePoint) -> np.ndarray:
    g = poly.gradient(point)
    return np.concatenate([g.x, g.y, g.z, g.zbar])


def test_make_exponent_merges_and_sorts():
    assert make_exponent([(3, 1), (1, 2), (3, 2), (2, 0)]) == ((1, 2), (3, 3))
    with pytest.raises(ValueError):
        make_exponent({0: -1})


def test_zero_coefficients_are_not_stored():
    p = HamiltonianPoly.monomial(1, 1.0, alpha={0: 1})
    assert len(p - p) == 0
    assert (p - p).is_zero()


def test_term_key_must_match_angle_count():
    key = TermKey((0, 0), (0, 0), (), ())
    with pytest.raises(ValueError):
        HamiltonianPoly(1, {key: 1.0})


def test_elementary_brackets():
    n = 1
    y = HamiltonianPoly.coordinate(n, Variable.Y, 0)
    wave = HamiltonianPoly.monomial(n, 1.0, k=(2,))
    # {y, e^{2ix}} = 2i e^{2ix}
    assert poisson_bracket(y, wave)[TermKey((2,), (0,), (), ())] == pytest.approx(2j)

    z = HamiltonianPoly.coordinate(n, Variable.Z, 0)
    zbar = HamiltonianPoly.coordinate(n, Variable.ZBAR, 0)
    assert poisson_bracket(z, zbar)[TermKey((0,), (0,), (), ())] == pytest.approx(1j)
    assert poisson_bracket(zbar, z)[TermKey((0,), (0,), (), ())] == pytest.approx(-1j)


def test_bracket_is_antisymmetric(poly_factory):
    f = poly_factory()
    g = poly_factory()
    total = poisson_bracket(f, g) + poisson_bracket(g, f)
    assert total.max_abs() < 1e-12


def test_jacobi_identity(poly_factory):
    f, g, h = poly_factory(terms=4), poly_factory(terms=4), poly_factory(terms=4)
    jacobi = (
        poisson_bracket(f, poisson_bracket(g, h))
        + poisson_bracket(g, poisson_bracket(h, f))
        + poisson_bracket(h, poisson_bracket(f, g))
    )
    assert jacobi.max_abs() < 1e-10


def test_bracket_matches_poisson_tensor(rng, poly_factory):
    f = poly_factory()
    g = poly_factory()
    point = _point(rng, 2, 3)
    Pi = poisson_tensor(2, 3)
    expected = _flat_gradient(f, point) @ Pi @ _flat_gradient(g, point)
    assert poisson_bracket(f, g).evaluate(point) == pytest.approx(expected, abs=1e-10)


def test_bracket_caps_drop_high_terms():
    n = 1
    f = HamiltonianPoly.monomial(n, 1.0, alpha={0: 2})
    g = HamiltonianPoly.monomial(n, 1.0, beta={0: 1}, alpha={1: 2})
    full = poisson_bracket(f, g)
    assert full.max_z_degree() == 3
    assert poisson_bracket(f, g, max_z_degree=2).is_zero()


def test_gradient_of_frequency_hamiltonian(rng):
    H = frequency_hamiltonian(2, np.array([0.3, 0.7]), np.array([1.5, 2.5]), [0, 1])
    point = _point(rng, 2, 2)
    grad = H.gradient(point)
    np.testing.assert_allclose(grad.y, [0.3, 0.7])
    np.testing.assert_allclose(grad.z, np.array([1.5, 2.5]) * point.zbar)
    np.testing.assert_allclose(grad.zbar, np.array([1.5, 2.5]) * point.z)


def test_quadratic_form_evaluates_hermitian_form(rng):
    A = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    A = A + A.conj().T
    H = quadratic_form(0, A, [0, 1, 2], "zzbar")
    z = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    value = H.evaluate(real_point(np.zeros(0), np.zeros(0), z))
    assert value == pytest.approx(np.conj(z) @ A @ z, abs=1e-12)
    assert H.reality_defect() < 1e-12


def test_reality_defect_detects_non_real_terms():
    p = HamiltonianPoly.monomial(1, 1j, alpha={0: 1})
    assert p.reality_defect() == pytest.approx(1.0)
    real = p + p.conj()
    assert real.reality_defect() == 0.0


def test_lie_series_of_action_shift():
    # exp(ad_{a y}) e^{ix} = e^{-ia} e^{ix}
    a = 0.1
    F = HamiltonianPoly.monomial(1, a, gamma=(1,))
    H = HamiltonianPoly.monomial(1, 1.0, k=(1,))
    series = lie_series(H, F, order=8)
    assert series.poly[TermKey((1,), (0,), (), ())] == pytest.approx(np.exp(-1j * a), abs=1e-12)
    assert series.term_norms == sorted(series.term_norms, reverse=True)


def test_lie_series_with_zero_generator_is_identity(poly_factory):
    H = poly_factory()
    series = lie_series(H, HamiltonianPoly.zero(2))
    assert series.terms_used == 0
    assert (series.poly - H).is_zero()


def test_lie_series_rejects_growing_terms():
    F = HamiltonianPoly.monomial(1, 10.0, gamma=(1,))
    H = HamiltonianPoly.monomial(1, 1.0, k=(1,))
    with pytest.raises(NonConvergenceError):
        lie_series(H, F, order=6)


def _rotation_generator() -> HamiltonianPoly:
    hop = HamiltonianPoly.monomial(0, 0.05, alpha={0: 1}, beta={1: 1})
    return hop + hop.conj()


def test_lie_transform_agrees_with_coordinate_map(rng):
    F = _rotation_generator()
    H = HamiltonianPoly.monomial(0, 1.0, alpha={0: 1}, beta={0: 1}) + HamiltonianPoly.monomial(0, 0.3, alpha={1: 2})
    cmap = CoordinateMap.from_generator(F, (0, 1), order=8)
    transformed = lie_transform(H, F, order=8)
    for _ in range(4):
        point = _point(rng, 0, 2)
        assert transformed.evaluate(point) == pytest.approx(H.evaluate(cmap(point)), abs=1e-10)


def test_coordinate_map_is_symplectic():
    F = _rotation_generator() + HamiltonianPoly.monomial(0, 0.02, alpha={0: 1, 1: 1}, beta={0: 1})
    F = F + F.conj()
    cmap = CoordinateMap.from_generator(F, (0, 1), order=8)
    audit = symplectic_audit(cmap, sample_count=4, radius=0.05, tol=1e-8)
    assert audit.passed, audit.violation


def test_composed_map_pushes_through_last_map_first():
    shift = CoordinateMap.from_generator(HamiltonianPoly.monomial(1, 0.2, gamma=(1,)), (0,), order=2)
    scale = CoordinateMap(1, (0,), {(Variable.Z, 0): HamiltonianPoly.coordinate(1, Variable.Z, 0)})
    point = PhasePoint(np.array([1.0]), np.array([0.0]), np.array([0.5 + 0j]), np.array([0.5 + 0j]))
    image = ComposedMap([shift, scale])(point)
    np.testing.assert_allclose(image.x, [0.8])
    np.testing.assert_allclose(image.z, [1.0])


def test_empty_composition_has_no_jacobian():
    with pytest.raises(ValueError):
        ComposedMap([]).jacobian(PhasePoint(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1)))


def test_composed_map_json_preserves_action(rng):
    F = _rotation_generator()
    composed = ComposedMap([CoordinateMap.from_generator(F, (0, 1), order=4)])
    restored = ComposedMap.from_json(composed.to_json())
    point = _point(rng, 0, 2)
    for a, b in zip(composed(point), restored(point)):
        np.testing.assert_allclose(a, b)


def test_bracket_satisfies_leibniz_rule(poly_factory):
    f, g, h = poly_factory(terms=4), poly_factory(terms=4), poly_factory(terms=4)
    leibniz = poisson_bracket(f, g * h) - (poisson_bracket(f, g) * h + g * poisson_bracket(f, h))
    assert leibniz.max_abs() < 1e-10


@pytest.mark.slow
def test_bracket_identities_on_many_random_triples(poly_factory):
    for _ in range(1000):
        f, g, h = poly_factory(terms=3), poly_factory(terms=3), poly_factory(terms=3)
        assert (poisson_bracket(f, g) + poisson_bracket(g, f)).max_abs() < 1e-12
        jacobi = (
            poisson_bracket(f, poisson_bracket(g, h))
            + poisson_bracket(g, poisson_bracket(h, f))
            + poisson_bracket(h, poisson_bracket(f, g))
        )
        assert jacobi.max_abs() < 1e-9
        leibniz = poisson_bracket(f, g * h) - (poisson_bracket(f, g) * h + g * poisson_bracket(f, h))
        assert leibniz.max_abs() < 1e-10


def _linear(coefficients: np.ndarray) -> HamiltonianPoly:
    out = HamiltonianPoly.zero(0)
    for site, c in enumerate(coefficients):
        out = out + HamiltonianPoly.monomial(0, complex(c), alpha={site: 1})
    return out


def test_lie_series_of_quadratic_generator_matches_matrix_exponential(rng):
    # ad_F z = iA z for F = ⟨A z, z̄⟩, so the series conjugates by the unitary flow e^{iA}
    n = 3
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A = 0.05 * (A + A.conj().T)
    F = quadratic_form(0, A, list(range(n)), "zzbar")
    U = linalg.expm(1j * A)
    c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    C = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    linear = lie_series(_linear(c), F, order=30).poly
    quadratic = lie_series(quadratic_form(0, C, list(range(n)), "zzbar"), F, order=30).poly
    for _ in range(4):
        z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        point = real_point(np.zeros(0), np.zeros(0), z)
        assert linear.evaluate(point) == pytest.approx(c @ (U @ z), abs=1e-12)
        assert quadratic.evaluate(point) == pytest.approx(np.conj(U @ z) @ C @ (U @ z), abs=1e-11)

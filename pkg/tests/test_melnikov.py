import numpy as np
import pytest

from kamlattice.tasks.exceptions import ConfigurationError
from kamlattice.tasks.melnikov.excision import (
    enumerate_k,
    excise_first,
    excise_second,
    excise_tangent,
    far_site_check,
    rescan_witness,
)
from kamlattice.tasks.melnikov.report import excision_trend, fit_slope, measure_report, witness_rows
from kamlattice.tasks.melnikov.types import ExcisionStage, ExcisionWitness, ParameterBox, SamplingMethod, WitnessKind


def _diagonal_box() -> ParameterBox:
    return ParameterBox.sample([0.9, 0.9], [1.1, 1.1], count=100)


def test_grid_sampling():
    box = _diagonal_box()
    assert box.method == SamplingMethod.GRID
    assert box.count == 100
    assert box.fraction == 1.0
    assert np.all(box.samples > box.lower) and np.all(box.samples < box.upper)
    assert box.volume == pytest.approx(0.04)


def test_sobol_sampling_beyond_three_parameters():
    box = ParameterBox.sample(np.zeros(4), np.ones(4), count=64, seed=7)
    assert box.method == SamplingMethod.SOBOL
    assert box.samples.shape == (64, 4)
    assert np.all((box.samples >= 0) & (box.samples <= 1))


def test_kill_and_json_round_trip():
    box = _diagonal_box().kill([0, 5, 5])
    assert box.alive_count == 98
    assert box.fraction == pytest.approx(0.98)
    restored = ParameterBox.from_json(box.to_json())
    np.testing.assert_array_equal(restored.alive, box.alive)
    np.testing.assert_allclose(restored.samples, box.samples)


def test_box_validation():
    with pytest.raises(ConfigurationError):
        ParameterBox.sample([1.0, 1.0], [1.0, 2.0])
    with pytest.raises(ConfigurationError):
        ParameterBox(np.zeros(1), np.ones(1), np.array([[0.5]]), np.array([True, False]))


def test_witness_must_lie_below_threshold():
    with pytest.raises(ValueError):
        ExcisionWitness(WitnessKind.TANGENT, (1, -1), (), 0.5, 0.1)
    witness = ExcisionWitness(WitnessKind.FIRST, (1, 0), (3,), -0.01, 0.1, 12)
    assert ExcisionWitness.from_json(witness.to_json()) == witness


def test_enumerate_k_identifies_opposite_vectors():
    assert enumerate_k(2, 1).tolist() == [[0, 1], [1, 0]]
    assert len(enumerate_k(2, 2)) == 6
    with_zero = enumerate_k(2, 2, include_zero=True)
    assert with_zero[0].tolist() == [0, 0]
    assert len(with_zero) == 7
    assert enumerate_k(1, 3).ravel().tolist() == [1, 2, 3]
    for k in enumerate_k(3, 3):
        assert k[np.flatnonzero(k)[0]] > 0


def test_tangent_excision_kills_the_diagonal():
    box = _diagonal_box()
    after, witnesses = excise_tangent(box, K=2, c21=8.0)
    assert after.alive_count == 90
    assert len(witnesses) == 10
    for w in witnesses:
        assert w.kind == WitnessKind.TANGENT
        assert w.k in ((1, -1), (-1, 1))
        omega = box.samples[w.sample]
        assert omega[0] == pytest.approx(omega[1])
        assert not after.alive[w.sample]


def test_tangent_excision_extended_precision_agrees():
    box = _diagonal_box()
    plain, _ = excise_tangent(box, K=3, c21=6.0)
    extended, _ = excise_tangent(box, K=3, c21=6.0, extended_precision=True)
    np.testing.assert_array_equal(plain.alive, extended.alive)


def test_first_excision_witnesses_rescan(small_bbm):
    box = ParameterBox.sample(*small_bbm.param_box, count=400)
    after, witnesses = excise_first(box, small_bbm, K=4, c=1.0)
    assert witnesses
    assert after.alive_count + len(witnesses) == box.alive_count
    for w in witnesses:
        assert w.kind == WitnessKind.FIRST
        assert w.sites[0] in small_bbm.normal_indices
        divisor = rescan_witness(w, box.samples[w.sample], small_bbm.frequency_array)
        assert abs(divisor) <= abs(w.divisor) + 1e-15
        assert abs(divisor) < w.threshold


def test_far_sites_are_within_the_tangent_bound(small_bbm):
    check = far_site_check(small_bbm, K=4, c=1.0)
    assert check["K2"] == pytest.approx(16.0)
    assert check["far_sites"] == 0
    assert check["passed"]


def test_second_excision_witnesses_rescan(small_bbm):
    box = ParameterBox.sample(*small_bbm.param_box, count=100)
    after, witnesses = excise_second(box, small_bbm, K=2, c=2.0)
    assert after.alive_count + len(witnesses) == box.alive_count
    for w in witnesses:
        assert len(w.sites) == 2
        divisor = rescan_witness(w, box.samples[w.sample], small_bbm.frequency_array)
        assert abs(divisor) < w.threshold
    with pytest.raises(ValueError):
        excise_second(box, small_bbm, K=2, c=2.0, headblock_eigs=np.zeros((3, 4)))


def test_fit_slope():
    Ks = np.array([2.0, 4.0, 8.0, 16.0])
    assert fit_slope(Ks, 3.0 * Ks ** -2.0) == pytest.approx(-2.0)
    assert fit_slope([2.0, 4.0], [0.1, 0.0]) is None


def test_measure_report_rows_and_slopes():
    witness = ExcisionWitness(WitnessKind.TANGENT, (1, -1), (), 0.0, 0.1, 0)
    stages = [
        ExcisionStage(WitnessKind.TANGENT, K, K ** -2.0, 10_000, 10_000 - int(6400 / K ** 2), [witness])
        for K in (2.0, 4.0, 8.0)
    ]
    report = measure_report(stages)
    assert report.total == 10_000
    assert [row.after for row in report.rows] == [8400, 9600, 9900]
    assert report.rows[0].killed_fraction == pytest.approx(0.16)
    assert report.slopes["tangent"] == pytest.approx(-2.0)
    assert report.fraction == pytest.approx(0.99)
    assert report.histograms["tangent"] == {2: 3}
    assert report.to_json()["histograms"]["tangent"] == {"2": 3}
    assert measure_report([]).fraction == 1.0


def test_excision_trend_runs_each_scale_from_the_same_box():
    box = _diagonal_box()
    stages = excision_trend(box, [1, 2, 3], lambda b, K: excise_tangent(b, K, 8.0), WitnessKind.TANGENT, lambda K: K ** -8.0)
    assert [stage.before for stage in stages] == [100, 100, 100]
    assert stages[0].after == 100
    assert stages[1].after == 90
    rows = witness_rows(stages)
    assert len(rows) == sum(len(stage.witnesses) for stage in stages)
    assert rows[0]["K"] == 2.0


@pytest.mark.slow
def test_first_melnikov_measure_decays_faster_than_K_to_the_minus_N(bbm_lattice):
    box = ParameterBox.sample(*bbm_lattice.param_box, count=10_000)
    c = 2 * bbm_lattice.N - 0.5
    stages = excision_trend(
        box,
        [8, 16, 32, 64],
        lambda b, K: excise_first(b, bbm_lattice, K, c),
        WitnessKind.FIRST,
        lambda K: 0.5 * K ** -c,
    )
    report = measure_report(stages, total=box.count)
    assert all(stage.after < stage.before for stage in stages)
    slope = report.slopes[WitnessKind.FIRST.value]
    assert slope is not None
    assert slope <= -(bbm_lattice.N - 0.5)

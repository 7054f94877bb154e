import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from normverify import probe, sdt
from normverify.errors import DimensionMismatch, DomainError, NoDistractors, NoTargets
from normverify.norms import MACHINE, BinaryFeatureMatrix, CellLabelMatrix, binarize_human, label_cells
from normverify.sdt import DetectionTally, Scope, dprime, probit, rates
from normverify.synthetic import make_synthetic

from oracles import binomial_interval, normal_cdf, quantile_hp

# frozen from oracles.quantile_hp (50-digit bisection + Newton on mpmath.ncdf)
Z_0975 = 1.9599639845400538
Z_095 = 1.6448536269514722
Z_1EM9 = -5.9978070150076865
Z_1M1EM9 = 5.9978070196016375  # at the double nearest 1 - 1e-9
D_070_019 = 1.4022968077592692
D_8413_1587 = 1.999630187229489


# ------------------------------------------------------------------ probit

def test_probit_center():
    assert probit(0.5) == 0.0


@pytest.mark.parametrize("p, z", [(0.975, Z_0975), (0.95, Z_095), (1e-9, Z_1EM9), (1 - 1e-9, Z_1M1EM9)])
def test_probit_frozen_values(p, z):
    assert probit(p) == pytest.approx(z, abs=1e-9)


def test_probit_spec_example():
    assert abs(probit(0.975) - 1.959964) <= 1e-5


@pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.5, float("nan")])
def test_probit_domain(p):
    with pytest.raises(DomainError):
        probit(p)


def test_probit_vectorized():
    ps = np.array([0.1, 0.5, 0.9])
    z = probit(ps)
    assert z.shape == (3,)
    assert z[0] == pytest.approx(-z[2], abs=1e-15)


@given(st.floats(-6, 6))
def test_probit_round_trip(z):
    assert abs(probit(normal_cdf(z)) - z) <= 1e-6


def test_probit_round_trip_1234():
    assert probit(normal_cdf(1.234)) == pytest.approx(1.234, abs=1e-6)


# ------------------------------------------------------------------ dprime

@pytest.mark.parametrize("h, f, expected, tol", [
    (0.5, 0.5, 0.0, 1e-12),
    (0.8413, 0.1587, 2.000, 0.005),
    (0.70, 0.19, 1.402, 0.005),
])
def test_dprime_examples(h, f, expected, tol):
    assert abs(dprime(h, f) - expected) <= tol


def test_dprime_matches_frozen_oracle():
    assert dprime(0.70, 0.19) == pytest.approx(D_070_019, abs=1e-12)
    assert dprime(0.8413, 0.1587) == pytest.approx(D_8413_1587, abs=1e-12)


unit = st.floats(1e-6, 1 - 1e-6)


@given(unit)
def test_dprime_equal_rates_zero(p):
    assert abs(dprime(p, p)) < 1e-12


@given(unit, unit)
def test_dprime_antisymmetric(h, f):
    assert dprime(h, f) == pytest.approx(-dprime(f, h), abs=1e-12)


@given(unit, unit, unit)
def test_dprime_monotone(a, b, f):
    assume(abs(a - b) > 1e-9)
    lo, hi = min(a, b), max(a, b)
    assert dprime(hi, f) > dprime(lo, f)
    assert dprime(f, hi) < dprime(f, lo)


# ------------------------------------------------------------------- rates

def test_rates_plain():
    r = rates(DetectionTally(70, 30, 10, 90))
    assert r.hit_rate == 0.70 and r.false_alarm_rate == 0.10
    assert not r.hr_corrected and not r.far_corrected


def test_rates_correction_hits_all():
    r = rates(DetectionTally(10, 0, 5, 5))
    assert r.hit_rate == 0.95 and r.hr_corrected


def test_rates_correction_no_false_alarms():
    r = rates(DetectionTally(5, 5, 0, 20))
    assert r.false_alarm_rate == 0.025 and r.far_corrected


def test_rates_no_correction_leaves_boundary():
    r = rates(DetectionTally(10, 0, 0, 20), correction="none")
    assert (r.hit_rate, r.false_alarm_rate) == (1.0, 0.0)
    with pytest.raises(DomainError):
        dprime(r.hit_rate, r.false_alarm_rate)


def test_rates_errors():
    with pytest.raises(NoTargets):
        rates(DetectionTally(0, 0, 1, 1))
    with pytest.raises(NoDistractors):
        rates(DetectionTally(1, 1, 0, 0))


# ------------------------------------------------------------------- tally

def _pair(machine, targets):
    from normverify.norms import Concept, Domain, Feature
    cs = tuple(Concept(f"c{i}", Domain.ANIMAL, "x") for i in range(len(machine)))
    fs = tuple(Feature(f"f{j}", Domain.ANIMAL) for j in range(len(machine[0])))
    m = BinaryFeatureMatrix(cs, fs, np.array(machine), MACHINE)
    return m, CellLabelMatrix(np.array(targets, bool), 1.0)


def test_tally_enumeration():
    m, lab = _pair([[1, 0], [1, 1]], [[1, 0], [0, 1]])
    t = sdt.tally(m, lab)
    assert (t.hits, t.misses, t.false_alarms, t.correct_rejections) == (2, 0, 1, 1)


def test_tally_identity_and_zero(toy):
    lab = label_cells(toy, 1.0)
    same = binarize_human(toy, 1.0)
    t = sdt.tally(same, lab)
    assert t.false_alarms == 0 and t.misses == 0
    zero = BinaryFeatureMatrix(toy.concepts, toy.features, np.zeros(toy.shape, np.uint8), MACHINE)
    t = sdt.tally(zero, lab)
    assert t.hits == 0 and t.false_alarms == 0


def test_tally_dimension_mismatch(toy):
    m, lab = _pair([[1, 0]], [[1, 0], [0, 1]])
    with pytest.raises(DimensionMismatch):
        sdt.tally(m, lab)


def test_scope_blocks(toy):
    m = binarize_human(toy, 0.25)
    animals = sdt.tally(m, label_cells(toy, 1.0), Scope.ANIMALS)
    n_animal_concepts = int(toy.concept_domains.sum())
    n_animal_features = int(toy.feature_domains.sum())
    assert animals.total == n_animal_concepts * n_animal_features
    whole = sdt.tally(m, label_cells(toy, 1.0), Scope.WHOLE)
    assert whole.total == toy.shape[0] * toy.shape[1]


@given(st.integers(0, 2**31), st.sampled_from(list(Scope)), st.sampled_from([0.25, 0.5, 0.75, 1.0]))
@settings(max_examples=30, deadline=None)
def test_tally_conservation(seed, scope, tau):
    ds = make_synthetic(n_animals=6, n_artifacts=5, n_animal_features=7, n_artifact_features=8,
                        animal_categories=2, artifact_categories=2, seed=seed)
    rng = np.random.default_rng(seed)
    m = BinaryFeatureMatrix(ds.concepts, ds.features, rng.integers(0, 2, ds.shape), MACHINE)
    lab = label_cells(ds, tau)
    t = sdt.tally(m, lab, scope)
    inside = sdt.scope_mask(ds, scope)
    assert t.total == inside.sum()
    assert t.n_targets == (lab.is_target & inside).sum()


# -------------------------------------------------------------- score_scope

def test_identity_oracle_scores_maximal(synth_small):
    truth = binarize_human(synth_small, 1.0)
    run = probe.run_verification(probe.build_probe_plan(synth_small), probe.MockOracle(truth), None,
                                 dataset=synth_small)
    s = sdt.score_scope(synth_small, run.machine, 1.0)
    assert s.hit_rate == 1.0 and s.false_alarm_rate == 0.0
    assert s.hr_corrected and s.far_corrected
    n_t, n_d = s.tally.n_targets, s.tally.n_distractors
    assert s.d_prime == pytest.approx(probit(1 - 1 / (2 * n_t)) - probit(1 / (2 * n_d)))
    assert math.isfinite(s.d_prime)
    assert s.correction_label == "hr+far"


def test_seeded_mock_rates_in_interval():
    ds = make_synthetic(n_animals=50, n_artifacts=50, n_animal_features=50, n_artifact_features=50, seed=3)
    truth = binarize_human(ds, 1.0)
    run = probe.run_verification(probe.build_probe_plan(ds), probe.MockOracle(truth, 0.3, 0.1, seed=9),
                                 None, dataset=ds)
    s = sdt.score_scope(ds, run.machine, 1.0)
    lo, hi = binomial_interval(s.tally.n_targets, 0.7)
    assert lo <= s.hit_rate <= hi
    lo, hi = binomial_interval(s.tally.n_distractors, 0.1)
    assert lo <= s.false_alarm_rate <= hi


def test_sweep(synth_small):
    machine = probe.run_verification(probe.build_probe_plan(synth_small),
                                     probe.MockOracle(binarize_human(synth_small), 0.2, 0.1, 1), None,
                                     dataset=synth_small).machine
    rows = sdt.sensitivity_sweep(synth_small, machine, scope="animals")
    assert [r.tau for r in rows] == [0.25, 0.5, 0.75, 1.0]
    sizes = [r.tally.n_targets for r in rows]
    assert sizes == sorted(sizes, reverse=True)
    single = sdt.sensitivity_sweep(synth_small, machine, [1.0], "animals")
    assert single == [sdt.score_scope(synth_small, machine, 1.0, "animals")]


# ---------------------------------------------------------- disagreements

def test_disagreements_identical(toy):
    h = binarize_human(toy)
    assert all(n == 0 for _, n in sdt.top_disagreements(h, h, 50))


def test_disagreements_single_flip(toy):
    h = binarize_human(toy)
    cells = h.cells.copy()
    j = toy.feature_index("artifact:is_sharp")
    cells[toy.concept_index("saw"), j] = 0
    m = BinaryFeatureMatrix(toy.concepts, toy.features, cells, MACHINE)
    top = sdt.top_disagreements(h, m, 3, sdt.HUMAN_YES_MACHINE_NO)
    assert top[0][0].name == "is_sharp" and top[0][1] == 1
    assert top[1][1] == 0
    assert sdt.top_disagreements(h, m, 1, sdt.MACHINE_YES_HUMAN_NO)[0][1] == 0


def _random_pair(seed, n=50, f=80):
    rng = np.random.default_rng(seed)
    ds = make_synthetic(n_animals=n, n_artifacts=0, n_animal_features=f, n_artifact_features=0, seed=seed)
    h = BinaryFeatureMatrix(ds.concepts, ds.features, rng.integers(0, 2, ds.shape), MACHINE)
    m = BinaryFeatureMatrix(ds.concepts, ds.features, rng.integers(0, 2, ds.shape), MACHINE)
    return h, m


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("direction", [sdt.HUMAN_YES_MACHINE_NO, sdt.MACHINE_YES_HUMAN_NO])
def test_disagreements_brute_force(seed, direction):
    from oracles import recount_disagreements
    h, m = _random_pair(seed)
    got = [(f.name, n) for f, n in sdt.top_disagreements(h, m, 80, direction)]
    assert got == recount_disagreements(h.cells, m.cells, [f.name for f in h.features], direction)


@given(st.integers(0, 1000), st.permutations(range(12)))
@settings(max_examples=25, deadline=None)
def test_disagreements_concept_permutation_invariant(seed, perm):
    h, m = _random_pair(seed, n=12, f=15)
    perm = list(perm)
    hp = BinaryFeatureMatrix(tuple(h.concepts[i] for i in perm), h.features, h.cells[perm], MACHINE)
    mp_ = BinaryFeatureMatrix(tuple(m.concepts[i] for i in perm), m.features, m.cells[perm], MACHINE)
    for d in (sdt.HUMAN_YES_MACHINE_NO, sdt.MACHINE_YES_HUMAN_NO):
        assert sdt.top_disagreements(h, m, 10, d) == sdt.top_disagreements(hp, mp_, 10, d)


# ------------------------------------------------------------------ export

def test_scores_csv_columns(synth_small):
    machine = binarize_human(synth_small, 0.5)
    machine = BinaryFeatureMatrix(machine.concepts, machine.features, machine.cells, MACHINE)
    text = sdt.scores_to_csv(sdt.sensitivity_sweep(synth_small, machine, scope="animals"))
    lines = text.splitlines()
    assert lines[0] == "scope,tau,hits,misses,fas,crs,hr,far,dprime,corrected"
    assert len(lines) == 5 and lines[4].startswith("animals,1,")


def test_sweep_markdown_shape(synth_small):
    machine = BinaryFeatureMatrix(synth_small.concepts, synth_small.features,
                                  binarize_human(synth_small, 0.5).cells, MACHINE)
    md = sdt.sweep_markdown(sdt.sensitivity_sweep(synth_small, machine, scope="artifacts"))
    rows = [line for line in md.splitlines() if line.startswith("| ") and "%" in line]
    assert [r.split("|")[1].strip() for r in rows] == ["25%", "50%", "75%", "100%"]

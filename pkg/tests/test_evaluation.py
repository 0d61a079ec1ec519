import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmumo.evaluation import (
    EvaluationReport,
    LookupScoreSource,
    ScoreUnavailable,
    SyntheticScoreSource,
    aggregate,
    merge_reports,
    relative_improvement,
    score_case,
)
from cmumo.gateway import CandidateSet
from cmumo.molgraph import canonicalize
from cmumo.properties import MissingProperty, OptimizationObjective, PropertyRegistry
from cmumo.tasks import TestCase

from conftest import corpus_rows
from oracles import oracle_run, relative_improvement_by_hand, score_case_by_hand

REG = PropertyRegistry.default()
SMILES = [r["smiles"] for r in corpus_rows()]


def tagged(*smiles):
    return CandidateSet.from_completions([f"<SMILES> {s} </SMILES>" for s in smiles])


def qed_case(x=0.5):
    return TestCase(canonicalize("CCO"), {"QED": x}, OptimizationObjective(frozenset({"QED"}), frozenset()))


# --- relative improvement -----------------------------------------------------

def test_relative_improvement_examples():
    assert relative_improvement({"QED": 0.4}, {"QED": 0.6}, {"QED"}, REG) == pytest.approx(0.5)
    assert relative_improvement({"hERG": 0.5}, {"hERG": 0.3}, {"hERG"}, REG) == pytest.approx(0.4)
    x = {"QED": 0.4, "BBBP": 0.5}
    y = {"QED": 0.6, "BBBP": 0.55}
    assert relative_improvement(x, y, {"QED", "BBBP"}, REG) == pytest.approx(0.3)


def test_relative_improvement_guards():
    assert relative_improvement({"DRD2": 0.0}, {"DRD2": 0.01}, {"DRD2"}, REG) == pytest.approx(0.01 / 1e-8)
    assert relative_improvement({"PlogP": -2.0}, {"PlogP": -1.0}, {"PlogP"}, REG) == pytest.approx(0.5)
    with pytest.raises(MissingProperty):
        relative_improvement({"QED": 0.4}, {}, {"QED"}, REG)
    with pytest.raises(ValueError):
        relative_improvement({}, {}, set(), REG)


def test_relative_improvement_matches_hand_oracle():
    rng = random.Random(2024)
    for _ in range(100):
        names = rng.sample(REG.names, rng.randint(1, 5))
        x = {p: rng.uniform(-3, 3) for p in names}
        y = {p: rng.uniform(-3, 3) for p in names}
        want = relative_improvement_by_hand(x, y, names, REG)
        assert abs(relative_improvement(x, y, names, REG) - want) <= 1e-9 * max(1.0, abs(want))


# --- per case -----------------------------------------------------------------

def test_chosen_is_largest_improvement():
    scorer = LookupScoreSource({"CCN": {"QED": 0.65}, "CCCl": {"QED": 0.75}, "CCBr": {"QED": 0.55}})
    r = score_case(qed_case(), tagged("CCN", "CCCl", "CCBr"), scorer, REG)
    assert r.success and r.chosen == 1
    assert r.chosen_candidate.cumulative_improvement == pytest.approx(0.5)
    assert [c.success for c in r.per_candidate] == [True, True, False]


def test_ties_go_to_first_candidate():
    scorer = LookupScoreSource({"CCN": {"QED": 0.7}, "CCCl": {"QED": 0.7}})
    assert score_case(qed_case(), tagged("CCN", "CCCl"), scorer, REG).chosen == 0


def test_identity_candidate_never_succeeds():
    scorer = LookupScoreSource({"CCO": {"QED": 0.5}})
    r = score_case(qed_case(), tagged("CCO"), scorer, REG)
    assert not r.success and r.chosen is None and r.any_valid


def test_unscored_candidate_is_rejected():
    scorer = LookupScoreSource({"CCN": {"QED": 0.95}})
    r = score_case(qed_case(), tagged("CCCl", "CCN"), scorer, REG)
    assert r.score_rejects == 1 and r.chosen == 1 and r.strict_success
    assert r.to_dict()["rejects"] == 1
    with pytest.raises(ScoreUnavailable):
        scorer.scores(canonicalize("CCCl"))


def test_strict_success_needs_threshold():
    scorer = LookupScoreSource({"CCN": {"QED": 0.85}, "CCCl": {"QED": 0.95}})
    assert not score_case(qed_case(), tagged("CCN"), scorer, REG).strict_success
    assert score_case(qed_case(), tagged("CCN", "CCCl"), scorer, REG).strict_success


score_grid = st.integers(-8, 8).map(lambda k: k / 20)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(REG.names), min_size=1, max_size=3, unique=True), st.data())
def test_score_case_matches_brute_force(names, data):
    k = data.draw(st.integers(1, len(names)))
    obj = OptimizationObjective(frozenset(names[:k]), frozenset(names[k:]))
    x = {p: round(REG[p].theta + data.draw(score_grid) * REG[p].delta * 10, 6) for p in names}
    n = data.draw(st.integers(1, 6))
    pool = ["CCN", "CCCl", "CCBr", "CCI", "CCF", "CCS"][:n]
    cand_scores, table = [], {}
    for s in pool:
        if data.draw(st.booleans()) and len(table) < n - 1:
            cand_scores.append(None)
            continue
        y = {p: round(x[p] + data.draw(score_grid) * REG[p].delta * 10, 6) for p in names}
        cand_scores.append(y)
        table[s] = y
    r = score_case(TestCase(canonicalize("CCO"), x, obj), tagged(*pool), LookupScoreSource(table), REG)
    chosen, success, strict = score_case_by_hand(x, obj, cand_scores, REG)
    assert (r.chosen, r.success, r.strict_success) == (chosen, success, strict)
    assert r.score_rejects == cand_scores.count(None)


# --- aggregation --------------------------------------------------------------

@pytest.fixture(scope="module")
def oracle_fixture():
    cases, answers, table = oracle_run(SMILES[:80], REG, random.Random(7))
    scorer = LookupScoreSource(table)
    return cases, answers, scorer


def run(cases, pick, scorer):
    return [score_case(c, tagged(*pick(c)), scorer, REG) for c in cases]


def test_oracle_generator_always_succeeds(oracle_fixture):
    cases, answers, scorer = oracle_fixture
    assert len(cases) >= 60
    rep = aggregate(run(cases, lambda c: answers[c.molecule.text], scorer), reg=REG)
    assert rep.sr == 1.0 and rep.val == 1.0
    assert rep.sr_theta <= rep.sr
    assert 0.0 <= rep.sim <= 1.0 and 1.0 <= rep.sas <= 10.0 and rep.ri > 0
    assert rep.nov == 1.0


def test_identity_generator_never_succeeds(oracle_fixture):
    cases, _, scorer = oracle_fixture
    rep = aggregate(run(cases, lambda c: [c.molecule.text], scorer), reg=REG)
    assert (rep.sr, rep.sr_theta, rep.val) == (0.0, 0.0, 1.0)
    assert rep.sim is None and rep.ri is None and rep.aps == {}


def test_novelty_uses_train_index(oracle_fixture):
    cases, answers, scorer = oracle_fixture
    results = run(cases, lambda c: answers[c.molecule.text], scorer)
    half = [answers[c.molecule.text][0] for c in cases[::2]]
    rep = aggregate(results, train_index=half, reg=REG)
    assert rep.nov == pytest.approx(1 - len(half) / len(cases))


def test_similarity_and_aps_by_hand():
    case = TestCase(canonicalize("c1ccccc1O"), {"QED": 0.5, "HIA": 0.6},
                    OptimizationObjective(frozenset({"QED"}), frozenset({"HIA"})))
    scorer = LookupScoreSource({"Oc1ccccc1": {"QED": 0.5, "HIA": 0.6},
                                "Cc1ccccc1O": {"QED": 0.7, "HIA": 0.65}})
    rep = aggregate([score_case(case, tagged("Cc1ccccc1O"), scorer, REG)], reg=REG)
    from cmumo.molgraph import morgan_fingerprint, parse_smiles, tanimoto
    want = tanimoto(morgan_fingerprint(parse_smiles("c1ccccc1O")), morgan_fingerprint(parse_smiles("Cc1ccccc1O")))
    assert rep.sim == want
    assert rep.aps == {"HIA": 0.65, "QED": 0.7}
    assert rep.ri == pytest.approx(0.4)


def test_empty_candidates_are_not_valid():
    rep = aggregate([score_case(qed_case(), CandidateSet.from_completions(["junk"]), LookupScoreSource({}), REG)])
    assert rep.val == 0.0 and rep.sr == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 30))
def test_merge_equals_concatenation(seed, cut):
    rng = random.Random(seed)
    cases, answers, table = oracle_run(rng.sample(SMILES, 40), REG, rng)
    scorer = LookupScoreSource(table)
    results = run(cases, lambda c: rng.choice([answers[c.molecule.text], [c.molecule.text], []]), scorer)
    cut = min(cut, len(results) - 1)
    whole = aggregate(results, reg=REG)
    merged = merge_reports([aggregate(results[:cut], reg=REG), aggregate(results[cut:], reg=REG)])
    assert merged.to_dict(9) == whole.to_dict(9)
    rng.shuffle(results)
    assert aggregate(results, reg=REG).to_dict(9) == whole.to_dict(9)
    assert whole.sr_theta <= whole.sr <= whole.val


def test_report_needs_cases():
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(ValueError):
        merge_reports([])


def test_report_columns():
    rep = aggregate([score_case(qed_case(), tagged("CCN"), LookupScoreSource({"CCN": {"QED": 0.7}}), REG)], reg=REG)
    d = rep.to_dict()
    assert list(d)[:9] == ["n_cases", "SR", "SR_theta", "Val", "Sim", "Nov", "SAS", "RI", "APS"]
    assert list(d["per_objective"]) == ["improve=QED;maintain="]
    assert isinstance(rep, EvaluationReport)


def test_synthetic_scores_are_deterministic_and_bounded():
    src = SyntheticScoreSource(REG, salt="s")
    a = src.scores(canonicalize("CCO"))
    assert a == src.scores(canonicalize("OCC"))
    assert a != SyntheticScoreSource(REG, salt="t").scores(canonicalize("CCO"))
    for p in REG:
        spec = REG[p]
        assert abs(a[p] - spec.theta) <= 5 * spec.delta + 1e-6
        assert math.isfinite(a[p])

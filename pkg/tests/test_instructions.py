import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmumo.molgraph import CanonicalSmiles
from cmumo.properties import OptimizationObjective, PropertyRegistry
from cmumo.instructions import (
    MissingLexiconEntry,
    Mode,
    PropertyLexicon,
    TemplateError,
    TemplateSet,
    ThresholdSource,
    extract_smiles,
    format_value,
    load_templates,
    quantize_target,
    render,
)
from cmumo.properties import Direction
from cmumo.tasks import MoleculePair, TaskInstance, TestCase

REG = PropertyRegistry.default()
TEMPLATES, LEXICON = load_templates()

# As printed, except that the figure's closing tag lacks its slash.
FIGURE_A2 = (
    "Modify the molecule <SMILES> C#Cc1ccc(C2CC3CCC(C2C(=O)OC)N3C)cc1 </SMILES> to decrease the value of "
    "Mutagenicity to be at most <THRESHOLD> 0.2 </THRESHOLD>, increase QED to be at least "
    "<THRESHOLD> 0.8 </THRESHOLD> and increase DRD2 inhibition to be at least <THRESHOLD> 0.2 "
    "</THRESHOLD> while keeping Intestinal adsorption unchanged."
)


def case(smiles="CCO", improve=("QED",), maintain=()):
    scores = {p: REG[p].theta for p in (*improve, *maintain)}
    return TestCase(CanonicalSmiles(smiles), scores, OptimizationObjective(frozenset(improve), frozenset(maintain)))


def task(improve=("QED", "BBBP"), maintain=("PlogP",)):
    x = {"QED": 0.5, "BBBP": 0.4, "PlogP": 2.0}
    y = {"QED": 0.87, "BBBP": 0.66, "PlogP": 2.3}
    pair = MoleculePair(CanonicalSmiles("CCO"), CanonicalSmiles("CCN"), x, y, 0.7)
    obj = OptimizationObjective(frozenset(improve), frozenset(maintain))
    return TaskInstance(pair, obj, tuple(REG.order(obj.combination)))


objectives = st.lists(st.sampled_from(REG.names), min_size=1, max_size=5, unique=True).flatmap(
    lambda names: st.integers(1, 2 ** len(names) - 1).map(
        lambda mask: OptimizationObjective(
            frozenset(n for i, n in enumerate(names) if mask >> i & 1),
            frozenset(n for i, n in enumerate(names) if not mask >> i & 1),
        )))


def test_figure_a2_sentence():
    c = case("C#Cc1ccc(C2CC3CCC(C2C(=O)OC)N3C)cc1", ("MUT", "QED", "DRD2"), ("HIA",))
    rp = render(c, TEMPLATES, LEXICON, REG, Mode.EVAL_SEEN,
                improve_order=["MUT", "QED", "DRD2"],
                adjustment_ids={"MUT": 2, "QED": 1, "DRD2": 1},
                thresholds={"QED": 0.8, "DRD2": 0.2})
    assert rp.task_text == FIGURE_A2
    assert rp.task_text.split() == FIGURE_A2.split()


def test_shipped_templates():
    assert len(TEMPLATES.general) == 6 and len(TEMPLATES.adjustments) == 5
    assert TEMPLATES.holdout_index == 6
    assert TEMPLATES.general[5].startswith("Modify the molecule to bring its properties to at least the levels")
    assert TEMPLATES.adjustments[0] == "{change} {property} to be {direction} <THRESHOLD> {value} </THRESHOLD>"
    assert LEXICON.covers(REG)
    assert LEXICON.name("LIV") == "liver injury risk"
    assert LEXICON.name("LIV", unseen=True) == "potential to cause liver disease"
    assert LEXICON.name("HIA") == "Intestinal adsorption"


def test_template_set_validation():
    with pytest.raises(TemplateError):
        TemplateSet(TEMPLATES.general[:5], TEMPLATES.adjustments)
    with pytest.raises(TemplateError):
        TemplateSet(TEMPLATES.general, TEMPLATES.adjustments[:4])
    with pytest.raises(TemplateError):
        TemplateSet(TEMPLATES.general, TEMPLATES.adjustments, holdout_index=7)
    with pytest.raises(TemplateError):
        TemplateSet(TEMPLATES.general, ["{change} {property}"] * 5)


def test_unseen_mode_uses_holdout_and_unseen_names():
    rp = render(case(improve=("QED",), maintain=("HIA",)), TEMPLATES, LEXICON, REG, Mode.EVAL_UNSEEN, rng_seed=3)
    assert rp.provenance.general_id == 6
    assert rp.instruction.startswith(TEMPLATES.general[5])
    assert "drug-likeness quantified by QED score" in rp.task_text
    assert "human intestinal adsorption ability" in rp.task_text
    assert rp.provenance.lexicon_mode == "unseen"


def test_missing_lexicon_entry():
    lex = PropertyLexicon({"QED": ("QED", "QED score")})
    with pytest.raises(MissingLexiconEntry):
        render(case(improve=("BBBP",)), TEMPLATES, lex, REG)


def test_same_seed_same_prompt():
    c = case(improve=("QED", "BBBP", "MUT"), maintain=("HIA",))
    a = render(c, TEMPLATES, LEXICON, REG, rng_seed=42)
    b = render(c, TEMPLATES, LEXICON, REG, rng_seed=42)
    assert a == b
    assert any(render(c, TEMPLATES, LEXICON, REG, rng_seed=s).text != a.text for s in range(5))


def test_training_prompt_carries_target():
    rp = render(task(), TEMPLATES, LEXICON, REG, Mode.TRAIN, rng_seed=1)
    assert extract_smiles(rp.text) == ["CCO", "CCN"]
    assert rp.text.endswith("\n\n<SMILES> CCN </SMILES>")
    assert rp.target == CanonicalSmiles("CCN")


def test_target_derived_thresholds():
    rp = render(task(), TEMPLATES, LEXICON, REG, Mode.TRAIN, ThresholdSource.TARGET_DERIVED, rng_seed=1)
    assert rp.provenance.thresholds == {"QED": 0.8, "BBBP": 0.6}
    assert rp.provenance.threshold_source == "target"
    with pytest.raises(ValueError):
        render(case(), TEMPLATES, LEXICON, REG, Mode.EVAL_SEEN, ThresholdSource.TARGET_DERIVED)


def test_quantize_target_stays_on_satisfied_side():
    assert quantize_target(0.87, Direction.HIGHER) == 0.8
    assert quantize_target(0.13, Direction.LOWER) == 0.2
    assert quantize_target(0.3, Direction.HIGHER) == 0.3
    assert quantize_target(-1.25, Direction.HIGHER) == -1.3


def test_format_value():
    assert [format_value(v) for v in (0.2, 1.0, 1.5, -0.37, 0.30000000000000004)] == ["0.2", "1", "1.5", "-0.37", "0.3"]


@settings(max_examples=200, deadline=None)
@given(objectives, st.integers(0, 2**32 - 1), st.sampled_from(list(Mode)))
def test_render_invariants(obj, seed, mode):
    scores = {p: REG[p].theta for p in obj.combination}
    pair = MoleculePair(CanonicalSmiles("c1ccccc1O"), CanonicalSmiles("c1ccccc1N"), scores, scores, 0.7)
    item = (TaskInstance(pair, obj, tuple(REG.order(obj.combination))) if mode is Mode.TRAIN
            else TestCase(CanonicalSmiles("c1ccccc1O"), scores, obj))
    rp = render(item, TEMPLATES, LEXICON, REG, mode, rng_seed=seed)
    found = extract_smiles(rp.text)
    assert found == (["c1ccccc1O", "c1ccccc1N"] if mode is Mode.TRAIN else ["c1ccccc1O"])
    assert rp.task_text.count("<THRESHOLD>") == len(obj.improve)
    assert rp.task_text.count("</THRESHOLD>") == len(obj.improve)
    if mode is Mode.EVAL_UNSEEN:
        assert rp.provenance.general_id == 6
    else:
        assert rp.provenance.general_id in range(1, 6)
    assert set(rp.provenance.adjustment_ids) == set(obj.improve)
    assert all(1 <= k <= 5 for k in rp.provenance.adjustment_ids.values())
    unseen = mode is Mode.EVAL_UNSEEN
    keep = re.search(r" while keeping (.*) unchanged\.$", rp.task_text)
    if obj.maintain:
        for p in obj.maintain:
            assert LEXICON.name(p, unseen) in keep.group(1)
        assert "<THRESHOLD>" not in keep.group(1)
    else:
        assert keep is None


def test_training_covers_all_template_pairs():
    c = task(improve=("QED",), maintain=())
    seen = set()
    for seed in range(400):
        prov = render(c, TEMPLATES, LEXICON, REG, Mode.TRAIN, rng_seed=seed).provenance
        seen.add((prov.general_id, prov.adjustment_ids["QED"]))
    assert seen == {(g, a) for g in range(1, 6) for a in range(1, 6)}


def test_extract_smiles_examples():
    assert extract_smiles("<SMILES> CCO </SMILES>") == ["CCO"]
    assert extract_smiles("a <SMILES>C</SMILES> b <SMILES> N </SMILES>") == ["C", "N"]
    assert extract_smiles("no tags here") == []
    assert extract_smiles("<SMILES> CCO <SMILES>") == []
    assert extract_smiles("<SMILES> </SMILES> then <SMILES> O </SMILES>") == ["O"]


@given(st.lists(st.from_regex(r"[A-Za-z0-9()=#@+\-\[\]/\\%]{1,30}", fullmatch=True), max_size=5), st.text(max_size=20))
def test_extract_smiles_recovers_tagged_items(items, filler):
    filler = filler.replace("<", "").replace(">", "")
    text = filler.join(f"<SMILES> {s} </SMILES>" for s in items)
    assert extract_smiles(text) == [s.strip() for s in items]

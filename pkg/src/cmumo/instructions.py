"""Instruction rendering for optimization tasks.

A prompt is a general instruction followed by a task sentence naming the
input molecule, one adjustment clause per property to improve and a single
clause listing the properties to keep. Training prompts also carry the target
molecule as the response. The template texts and property names are data
(``data/templates.json``); framing tokens for particular models are added in
the generator gateway, not here.
"""

from __future__ import annotations

import enum
import json
import math
import random
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .molgraph import CanonicalSmiles
from .properties import Direction, OptimizationObjective, PropertyRegistry

_SMILES_TAG = re.compile(r"<SMILES>((?:(?!<SMILES>|</SMILES>).)*)</SMILES>", re.DOTALL)


class MissingLexiconEntry(KeyError):
    pass


class TemplateError(ValueError):
    pass


class Mode(str, enum.Enum):
    TRAIN = "train"
    EVAL_SEEN = "eval_seen"
    EVAL_UNSEEN = "eval_unseen"


class ThresholdSource(str, enum.Enum):
    THETA_DEFAULT = "theta"
    TARGET_DERIVED = "target"


@dataclass(frozen=True)
class TemplateSet:
    """General instructions (1-based ids), adjustment clauses and the held-out id."""

    general: tuple[str, ...]
    adjustments: tuple[str, ...]
    holdout_index: int = 6
    task: str = "Modify the molecule <SMILES> {smiles} </SMILES> to {adjustments}{maintain}."
    maintain: str = " while keeping {names} unchanged"

    def __post_init__(self) -> None:
        object.__setattr__(self, "general", tuple(self.general))
        object.__setattr__(self, "adjustments", tuple(self.adjustments))
        if len(self.general) != 6:
            raise TemplateError(f"expected 6 general instructions, got {len(self.general)}")
        if len(self.adjustments) != 5:
            raise TemplateError(f"expected 5 adjustment templates, got {len(self.adjustments)}")
        if not 1 <= self.holdout_index <= len(self.general):
            raise TemplateError(f"holdout_index {self.holdout_index} out of range")
        for a in self.adjustments:
            for slot in ("{change}", "{property}", "{direction}", "{value}"):
                if slot not in a:
                    raise TemplateError(f"adjustment template lacks {slot}: {a!r}")

    @property
    def training_ids(self) -> tuple[int, ...]:
        return tuple(i for i in range(1, len(self.general) + 1) if i != self.holdout_index)


@dataclass(frozen=True)
class PropertyLexicon:
    """Seen (training) and unseen (held-out evaluation) names per property."""

    names: Mapping[str, tuple[str, str]]

    def name(self, prop: str, unseen: bool = False) -> str:
        try:
            seen_name, unseen_name = self.names[prop]
        except KeyError:
            raise MissingLexiconEntry(prop) from None
        return unseen_name if unseen else seen_name

    def covers(self, reg: PropertyRegistry) -> bool:
        return all(p in self.names for p in reg)


def load_templates(path=None) -> tuple[TemplateSet, PropertyLexicon]:
    """Templates and lexicon from ``path``, or the shipped defaults."""
    if path is None:
        text = resources.files("cmumo").joinpath("data", "templates.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
        ts = TemplateSet(
            general=doc["general"],
            adjustments=doc["adjustments"],
            holdout_index=int(doc.get("holdout_index", 6)),
            task=doc.get("task", TemplateSet.task),
            maintain=doc.get("maintain", TemplateSet.maintain),
        )
        lex = PropertyLexicon({k: (v["seen"], v["unseen"]) for k, v in doc["lexicon"].items()})
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise TemplateError(f"bad template file: {exc}") from exc
    return ts, lex


@dataclass(frozen=True)
class PromptProvenance:
    general_id: int
    adjustment_ids: dict[str, int]
    lexicon_mode: str
    thresholds: dict[str, float]
    threshold_source: str
    improve_order: tuple[str, ...]
    mode: str
    seed: int

    def to_dict(self) -> dict:
        return {
            "general_id": self.general_id,
            "adjustment_ids": dict(self.adjustment_ids),
            "lexicon_mode": self.lexicon_mode,
            "thresholds": dict(self.thresholds),
            "threshold_source": self.threshold_source,
            "improve_order": list(self.improve_order),
            "mode": self.mode,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class RenderedPrompt:
    """Instruction text plus the slots used to build it.

    ``instruction`` is the general instruction, a blank line and
    ``task_text``. ``text`` is ``instruction`` alone for evaluation modes and
    ``instruction`` followed by the tagged target for training.
    """

    text: str
    instruction: str
    task_text: str
    source: CanonicalSmiles
    objective: OptimizationObjective
    provenance: PromptProvenance
    target: CanonicalSmiles | None = None
    response: str | None = None


def format_value(v: float) -> str:
    """Shortest faithful decimal for a threshold (``0.2``, ``1.5``, ``-0.37``)."""
    text = repr(round(float(v), 6))
    if text.endswith(".0"):
        text = text[:-2]
    return "0" if text == "-0" else text


def quantize_target(score: float, direction: Direction) -> float:
    """Round an achieved score to one decimal on the side it already satisfies."""
    scaled = score * 10
    q = math.floor(scaled + 1e-9) if direction is Direction.HIGHER else math.ceil(scaled - 1e-9)
    return q / 10


def _join(parts: Sequence[str]) -> str:
    if len(parts) == 1:
        return parts[0]
    return ", ".join(parts[:-1]) + " and " + parts[-1]


def render(
    task_or_case,
    templates: TemplateSet,
    lexicon: PropertyLexicon,
    reg: PropertyRegistry,
    mode: Mode | str = Mode.EVAL_SEEN,
    threshold_source: ThresholdSource | str = ThresholdSource.THETA_DEFAULT,
    rng_seed: int = 0,
    *,
    improve_order: Sequence[str] | None = None,
    adjustment_ids: Mapping[str, int] | None = None,
    thresholds: Mapping[str, float] | None = None,
    general_id: int | None = None,
) -> RenderedPrompt:
    """Render one prompt for a training task or a test case.

    Parameters
    ----------
    task_or_case
        A ``TaskInstance`` (source ``pair.x``, target ``pair.y``) or a
        ``TestCase`` (source ``molecule``, no target).
    mode
        ``train`` and ``eval_seen`` draw a general instruction among the
        non-held-out ones with seen names; ``eval_unseen`` uses the held-out
        instruction and unseen names.
    threshold_source
        ``theta`` uses the registry level; ``target`` uses the target's score
        rounded to one decimal on its satisfied side (training only).
    improve_order, adjustment_ids, thresholds, general_id
        Explicit slot values; anything not given is drawn from ``rng_seed``.
        ``thresholds`` overrides both sources per property.

    Raises
    ------
    MissingLexiconEntry
        A property of the objective has no lexicon entry.
    """
    mode = Mode(mode)
    threshold_source = ThresholdSource(threshold_source)
    objective: OptimizationObjective = task_or_case.objective
    if not objective.improve:
        raise ValueError("cannot render an objective with nothing to improve")
    pair = getattr(task_or_case, "pair", None)
    if pair is not None:
        source, target, target_scores = pair.x, pair.y, pair.scores_y
    else:
        source, target, target_scores = task_or_case.molecule, None, None
    if mode is Mode.TRAIN and target is None:
        raise ValueError("training prompts need a task with a target molecule")
    if threshold_source is ThresholdSource.TARGET_DERIVED and target_scores is None:
        raise ValueError("target-derived thresholds need a task with target scores")

    rng = random.Random(rng_seed)
    unseen = mode is Mode.EVAL_UNSEEN
    if general_id is None:
        general_id = templates.holdout_index if unseen else rng.choice(templates.training_ids)
    if improve_order is None:
        order = list(reg.order(objective.improve))
        rng.shuffle(order)
    else:
        order = list(improve_order)
        if set(order) != set(objective.improve) or len(order) != len(objective.improve):
            raise ValueError("improve_order must list each improve property once")
    adj_ids: dict[str, int] = {}
    used: dict[str, float] = {}
    clauses = []
    for p in order:
        spec = reg[p]
        name = lexicon.name(p, unseen)
        k = (adjustment_ids or {}).get(p)
        if k is None:
            k = rng.randint(1, len(templates.adjustments))
        adj_ids[p] = k
        if thresholds is not None and p in thresholds:
            value = float(thresholds[p])
        elif threshold_source is ThresholdSource.TARGET_DERIVED:
            value = quantize_target(target_scores[p], spec.direction)
        else:
            value = spec.theta
        used[p] = value
        higher = spec.direction is Direction.HIGHER
        clauses.append(templates.adjustments[k - 1].format(
            change="increase" if higher else "decrease",
            property=name,
            direction="at least" if higher else "at most",
            value=format_value(value),
        ))
    keep = [lexicon.name(p, unseen) for p in reg.order(objective.maintain)]
    maintain = templates.maintain.format(names=_join(keep)) if keep else ""
    task_text = templates.task.format(smiles=source.text, adjustments=_join(clauses), maintain=maintain)
    instruction = templates.general[general_id - 1] + "\n\n" + task_text
    response = None
    text = instruction
    if mode is Mode.TRAIN:
        response = f"<SMILES> {target.text} </SMILES>"
        text = instruction + "\n\n" + response
    prov = PromptProvenance(
        general_id=general_id,
        adjustment_ids=adj_ids,
        lexicon_mode="unseen" if unseen else "seen",
        thresholds=used,
        threshold_source=threshold_source.value,
        improve_order=tuple(order),
        mode=mode.value,
        seed=rng_seed,
    )
    return RenderedPrompt(text, instruction, task_text, source, objective, prov,
                          target if mode is Mode.TRAIN else None, response)


def extract_smiles(text: str) -> list[str]:
    """Trimmed contents of every well-formed ``<SMILES> ... </SMILES>`` pair, in order.

    Empty pairs, such as the format reminder inside the instructions, are skipped.
    """
    found = (m.group(1).strip() for m in _SMILES_TAG.finditer(text))
    return [s for s in found if s]

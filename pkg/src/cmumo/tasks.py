"""Task construction from scored molecule pairs, pair filtering and test sets.

A task is a molecule pair together with an objective: the properties that
improve from ``x`` to ``y`` beyond their thresholds and the near-optimal
properties that stay within them. :func:`enumerate_tasks` derives every task
a pair supports, :func:`pairs_for_combination` keeps the tasks that cover one
property combination exactly, and :func:`build_test_set` samples input
molecules whose scores make each objective meaningful.
"""

from __future__ import annotations

import math
import random
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from .molgraph import CanonicalSmiles, canonicalize, morgan_fingerprint, parse_smiles, tanimoto
from .properties import (
    OptimizationObjective,
    PropertyRegistry,
    PropertyVector,
    Status,
    UnknownProperty,
    all_objectives,
    classify,
    improved,
    maintained,
)

SIMILARITY_GATE = 0.6
DEFAULT_CAP = 100
DEFAULT_TEST_SIZE = 500
SAMPLER = "python random.Random (MT19937); test sample seeded with <seed>, caps with '<seed>|<objective key>'"


class EmptyInput(ValueError):
    pass


class PairError(ValueError):
    """A pair cannot be ingested (identical molecules, bad SMILES)."""


class InsufficientPool(UserWarning):
    """Fewer eligible test molecules than requested; all were returned."""


@dataclass(frozen=True)
class MoleculePair:
    """An ordered (x, y) pair with scores and fingerprint similarity."""

    x: CanonicalSmiles
    y: CanonicalSmiles
    scores_x: PropertyVector
    scores_y: PropertyVector
    similarity: float

    @classmethod
    def ingest(cls, smiles_x: str, smiles_y: str,
               scores_x: Mapping[str, float], scores_y: Mapping[str, float],
               cache: dict | None = None) -> "MoleculePair":
        """Parse, canonicalize and recompute the similarity of a raw pair.

        ``cache`` maps input text to ``(canonical, fingerprint)`` and is
        filled as a side effect; pass one dict across a file of pairs.
        """
        cx, fx = _prepared(smiles_x, cache)
        cy, fy = _prepared(smiles_y, cache)
        if cx == cy:
            raise PairError(f"pair members are the same molecule: {cx.text}")
        return cls(cx, cy, PropertyVector(scores_x), PropertyVector(scores_y), tanimoto(fx, fy))

    def swapped(self) -> "MoleculePair":
        return MoleculePair(self.y, self.x, self.scores_y, self.scores_x, self.similarity)

    def admitted(self, gate: float = SIMILARITY_GATE) -> bool:
        return self.similarity > gate


def _prepared(text: str, cache: dict | None):
    if cache is not None and text in cache:
        return cache[text]
    mol = parse_smiles(text)
    out = (canonicalize(mol), morgan_fingerprint(mol))
    if cache is not None:
        cache[text] = out
    return out


@dataclass(frozen=True)
class TaskInstance:
    pair: MoleculePair
    objective: OptimizationObjective
    combination: tuple[str, ...]

    def check(self, reg: PropertyRegistry) -> None:
        """Raise ``AssertionError`` if the task's own invariants fail."""
        x, y = self.pair.scores_x, self.pair.scores_y
        assert set(self.combination) == self.objective.combination
        for p in self.objective.improve:
            assert improved(x[p], y[p], reg[p]), p
        for p in self.objective.maintain:
            assert maintained(x[p], y[p], reg[p]), p
            assert classify(x[p], reg[p]) is Status.NEAR_OPTIMAL, p


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    molecule: CanonicalSmiles
    scores: PropertyVector
    objective: OptimizationObjective

    def check(self, reg: PropertyRegistry) -> None:
        for p in self.objective.improve:
            assert classify(self.scores[p], reg[p]) is Status.SUB_OPTIMAL, p
        for p in self.objective.maintain:
            assert classify(self.scores[p], reg[p]) is Status.NEAR_OPTIMAL, p


class TestCases(list):
    """List of :class:`TestCase` with a flag for short pools."""

    __test__ = False
    insufficient: bool = False


@dataclass
class DatasetSplit:
    train: list[TaskInstance]
    test: list[TestCase]
    manifest: dict = field(default_factory=dict)


def enumerate_tasks(pair: MoleculePair, reg: PropertyRegistry,
                    max_props: int | None = None) -> list[TaskInstance]:
    """All tasks a pair supports over subsets of ``reg`` of size 1..max_props.

    A property with change magnitude above its delta can only be improved;
    one within delta can only be maintained, and only if it is near-optimal
    in the (possibly swapped) source molecule. A subset is emitted when it
    has at least one improvable property, all of them move the same way
    relative to their desirable direction, and every other member can be
    maintained. If all improvable members move the undesirable way the pair
    is used in reverse.

    Raises
    ------
    UnknownProperty
        A registry name is missing from the pair's score vectors.
    """
    names = reg.names
    if max_props is None:
        max_props = len(names)
    if max_props < 1:
        raise ValueError("max_props must be >= 1")
    x, y = pair.scores_x, pair.scores_y
    for n in names:
        if n not in x or n not in y:
            raise UnknownProperty(f"pair lacks a score for {n}")
    big: set[str] = set()
    desired: dict[str, bool] = {}
    for n in names:
        spec = reg[n]
        change = y[n] - x[n]
        desired[n] = change * spec.direction.sign > 0
        if not maintained(x[n], y[n], spec):
            big.add(n)
    stable_fwd = {n for n in names if n not in big and classify(x[n], reg[n]) is Status.NEAR_OPTIMAL}
    stable_rev = {n for n in names if n not in big and classify(y[n], reg[n]) is Status.NEAR_OPTIMAL}
    rev = None
    out: list[TaskInstance] = []
    for size in range(1, min(max_props, len(names)) + 1):
        for combo in combinations(names, size):
            ci = [n for n in combo if n in big]
            if not ci:
                continue
            flags = {desired[n] for n in ci}
            if len(flags) > 1:
                continue
            swap = flags == {False}
            stable = stable_rev if swap else stable_fwd
            cs = [n for n in combo if n in stable]
            if len(ci) + len(cs) != size:
                continue
            if swap:
                if rev is None:
                    rev = pair.swapped()
                use = rev
            else:
                use = pair
            out.append(TaskInstance(use, OptimizationObjective(frozenset(ci), frozenset(cs)), combo))
    return out


def pairs_for_combination(tasks: Sequence[TaskInstance], combination: Iterable[str],
                          cap: int = DEFAULT_CAP, seed: int = 0) -> list[TaskInstance]:
    """Tasks covering exactly ``combination``, at most ``cap`` per objective.

    Groups larger than ``cap`` are subsampled with a generator seeded from
    ``seed`` and the group's objective; kept tasks stay in input order.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    target = frozenset(combination)
    groups: "OrderedDict[OptimizationObjective, list[int]]" = OrderedDict()
    for i, t in enumerate(tasks):
        if t.objective.combination == target:
            groups.setdefault(t.objective, []).append(i)
    keep: list[int] = []
    for obj, idx in groups.items():
        if len(idx) > cap:
            rng = random.Random(f"{seed}|{obj.key()}")
            idx = sorted(rng.sample(idx, cap))
        keep.extend(idx)
    keep.sort()
    return [tasks[i] for i in keep]


def nearest_rank(values: Sequence[float], percentile: float) -> float:
    """Nearest-rank percentile of already ordered ``values`` (1-based rank ceil(p/100*n))."""
    if not values:
        raise EmptyInput("no values")
    if not 0 < percentile < 100:
        raise ValueError("percentile must be in (0, 100)")
    rank = math.ceil(Fraction(str(percentile)) * len(values) / 100)
    return values[max(rank, 1) - 1]


def calibrate_thresholds(vectors: Sequence[Mapping[str, float]], percentile: float,
                         reg: PropertyRegistry) -> PropertyRegistry:
    """Registry with each theta set to the nearest-rank percentile of the data.

    Scores are ordered from least to most desirable, so the chosen value has
    ``percentile`` percent of molecules at or on the less desirable side.
    Properties absent from every vector keep their current theta.
    """
    if not vectors:
        raise EmptyInput("calibration needs at least one score vector")
    thetas = {}
    for name in reg:
        vals = [v[name] for v in vectors if name in v]
        if not vals:
            continue
        vals.sort(reverse=reg[name].direction.sign < 0)
        thetas[name] = nearest_rank(vals, percentile)
    return reg.with_thetas(thetas)


def eligible(scores: Mapping[str, float], obj: OptimizationObjective, reg: PropertyRegistry) -> bool:
    """Whether a molecule can serve as a test input for ``obj``."""
    for p in obj.improve:
        if p not in scores or classify(scores[p], reg[p]) is not Status.SUB_OPTIMAL:
            return False
    for p in obj.maintain:
        if p not in scores or classify(scores[p], reg[p]) is not Status.NEAR_OPTIMAL:
            return False
    return True


def build_test_set(pool: Sequence[tuple[CanonicalSmiles, Mapping[str, float]]],
                   combination: Iterable[str],
                   objectives: Sequence[OptimizationObjective],
                   reg: PropertyRegistry,
                   n: int = DEFAULT_TEST_SIZE,
                   train_index: Iterable[CanonicalSmiles] = (),
                   seed: int = 0) -> TestCases:
    """Sample up to ``n`` test molecules shared by the objectives of a combination.

    A molecule enters the candidate pool when it is not in ``train_index`` and
    is eligible for at least one objective. ``n`` candidates are sampled
    under ``seed`` (kept in pool order) and one :class:`TestCase` is emitted
    per eligible (molecule, objective). A short pool is returned whole with
    an :class:`InsufficientPool` warning and ``insufficient`` set.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    combo = frozenset(combination)
    for o in objectives:
        if o.combination != combo:
            raise ValueError(f"objective {o.key()} is not over the combination {sorted(combo)}")
    train = {str(s) for s in train_index}
    seen: set[str] = set()
    candidates = []
    for smi, scores in pool:
        key = str(smi)
        if key in seen or key in train:
            continue
        seen.add(key)
        fits = [o for o in objectives if eligible(scores, o, reg)]
        if fits:
            candidates.append((CanonicalSmiles(key), PropertyVector(scores), fits))
    out = TestCases()
    if len(candidates) < n:
        out.insufficient = True
        warnings.warn(InsufficientPool(f"{len(candidates)} eligible molecules, {n} requested"),
                      stacklevel=2)
        chosen = candidates
    else:
        idx = sorted(random.Random(seed).sample(range(len(candidates)), n))
        chosen = [candidates[i] for i in idx]
    for mol, scores, fits in chosen:
        out.extend(TestCase(mol, scores, o) for o in fits)
    return out


def build_split(pairs: Iterable[MoleculePair], reg: PropertyRegistry, combination: Iterable[str],
                test_pool: Sequence[tuple[CanonicalSmiles, Mapping[str, float]]],
                objectives: Sequence[OptimizationObjective] | None = None,
                n_test: int = DEFAULT_TEST_SIZE, cap: int = DEFAULT_CAP, seed: int = 0,
                gate: float = SIMILARITY_GATE) -> DatasetSplit:
    """Training tasks and test cases for one combination, plus a manifest.

    Only subsets of ``combination`` are enumerated, which yields the same
    covering tasks as enumerating the whole registry and filtering.
    """
    names = reg.order(combination)
    sub = reg.subset(names)
    if objectives is None:
        objectives = all_objectives(names, reg)
    tasks: list[TaskInstance] = []
    n_pairs = n_admitted = 0
    for pair in pairs:
        n_pairs += 1
        if not pair.admitted(gate):
            continue
        n_admitted += 1
        tasks.extend(t for t in enumerate_tasks(pair, sub, len(names))
                     if len(t.combination) == len(names))
    wanted = set(objectives)
    train = [t for t in pairs_for_combination(tasks, names, cap, seed) if t.objective in wanted]
    train_index = set()
    for t in train:
        train_index.add(t.pair.x.text)
        train_index.add(t.pair.y.text)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        test = build_test_set(test_pool, names, objectives, reg, n_test, train_index, seed)
    for w in caught:
        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    per_obj = OrderedDict((o.key(reg), {"train": 0, "test": 0}) for o in objectives)
    for t in train:
        per_obj[t.objective.key(reg)]["train"] += 1
    for c in test:
        per_obj[c.objective.key(reg)]["test"] += 1
    manifest = {
        "combination": list(names),
        "combination_code": reg.combination_code(names),
        "split_label": reg.combinations.get(reg.combination_code(names) or "", None),
        "pairs_read": n_pairs,
        "pairs_admitted": n_admitted,
        "similarity_gate": gate,
        "cap": cap,
        "n_test_requested": n_test,
        "test_molecules": len({c.molecule.text for c in test}),
        "test_pool_insufficient": test.insufficient,
        "seed": seed,
        "sampler": SAMPLER,
        "registry_sha256": reg.digest(),
        "objectives": per_obj,
    }
    return DatasetSplit(train, list(test), manifest)

"""Per-case scoring of generated candidates and run-level metrics.

For each test case every candidate is checked against the objective; a case
succeeds when at least one candidate does, and the successful candidate with
the largest mean relative improvement is kept. Run metrics are the success
rates, the validity rate and, over the kept candidates of successful cases
only, similarity to the input, novelty, synthetic accessibility, relative
improvement and per-property average scores.

Aggregation goes through :class:`Tally`, a mergeable sum of counts, so a
report over a concatenation of runs equals the merge of their reports.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

from .gateway import CandidateSet
from .molgraph import CanonicalSmiles, FragmentScoreTable, morgan_fingerprint, parse_smiles, sa_score, tanimoto
from .properties import (
    MissingProperty,
    PropertyRegistry,
    PropertyVector,
    satisfies_objective,
)
from .tasks import TestCase

RI_EPS = 1e-8
CONDITIONING = "success"


class ScoreUnavailable(KeyError):
    """The score source has no scores for a molecule."""


# --- score sources ----------------------------------------------------------

class PropertyScoreSource(Protocol):
    def scores(self, smiles: CanonicalSmiles) -> PropertyVector:
        """Scores for ``smiles``; raises :class:`ScoreUnavailable`."""


@dataclass
class LookupScoreSource:
    """Pre-scored molecules keyed by canonical SMILES."""

    table: Mapping[str, Mapping[str, float]]

    def scores(self, smiles: CanonicalSmiles) -> PropertyVector:
        try:
            return PropertyVector(self.table[smiles.text])
        except KeyError:
            raise ScoreUnavailable(smiles.text) from None


@dataclass
class SyntheticScoreSource:
    """Deterministic pseudo-scores for desk-scale runs.

    Each score is uniform on ``[theta - spread*delta, theta + spread*delta]``,
    derived from a SHA-256 of ``salt``, the property name and the SMILES text.
    Nothing about the molecule's chemistry enters the value.
    """

    reg: PropertyRegistry
    salt: str = "0"
    spread: float = 5.0

    def scores(self, smiles: CanonicalSmiles) -> PropertyVector:
        out = {}
        for name in self.reg:
            spec = self.reg[name]
            h = hashlib.sha256(f"{self.salt}|{name}|{smiles.text}".encode()).digest()
            u = int.from_bytes(h[:8], "big") / 2 ** 64
            lo = spec.theta - self.spread * spec.delta
            out[name] = round(lo + u * 2 * self.spread * spec.delta, 6)
        return PropertyVector(out)


@dataclass
class RemoteScoreSource:
    """Scores from an HTTP endpoint: POST ``{"smiles": s}`` returns ``{"scores": {...}}``."""

    url: str
    timeout: float = 30.0
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def scores(self, smiles: CanonicalSmiles) -> PropertyVector:
        if smiles.text in self._cache:
            return self._cache[smiles.text]
        import httpx

        try:
            resp = httpx.post(self.url, json={"smiles": smiles.text}, timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise ScoreUnavailable(f"{smiles.text}: {exc}") from exc
        if resp.status_code == 404:
            raise ScoreUnavailable(smiles.text)
        resp.raise_for_status()
        vec = PropertyVector(resp.json()["scores"])
        self._cache[smiles.text] = vec
        return vec


# --- per case ---------------------------------------------------------------

def relative_improvement(x: Mapping[str, float], y: Mapping[str, float],
                         improve: Iterable[str], reg: PropertyRegistry, eps: float = RI_EPS) -> float:
    """Mean over ``improve`` of ``sign * (y - x) / max(|x|, eps)``.

    Raises
    ------
    MissingProperty
        A name is absent from ``x`` or ``y``.
    """
    names = list(improve)
    if not names:
        raise ValueError("relative_improvement needs at least one property")
    total = 0.0
    for p in names:
        if p not in x or p not in y:
            raise MissingProperty(p)
        total += reg[p].direction.sign * (y[p] - x[p]) / max(abs(x[p]), eps)
    return total / len(names)


@dataclass(frozen=True)
class CandidateResult:
    smiles: CanonicalSmiles
    valid: bool
    scores: PropertyVector | None = None
    success: bool = False
    strict_success: bool = False
    cumulative_improvement: float | None = None


@dataclass(frozen=True)
class MoleculeResult:
    case: TestCase
    candidates: CandidateSet
    per_candidate: tuple[CandidateResult, ...]
    chosen: int | None
    success: bool
    strict_success: bool
    score_rejects: int = 0

    @property
    def any_valid(self) -> bool:
        return any(c.valid for c in self.per_candidate)

    @property
    def chosen_candidate(self) -> CandidateResult | None:
        return None if self.chosen is None else self.per_candidate[self.chosen]

    def to_dict(self) -> dict:
        ch = self.chosen_candidate
        return {
            "molecule": self.case.molecule.text,
            "objective": self.case.objective.to_dict(),
            "n_raw": len(self.candidates.raw),
            "n_parsed": len(self.candidates.parsed),
            "rejects": self.candidates.rejects + self.score_rejects,
            "success": self.success,
            "strict_success": self.strict_success,
            "chosen": None if ch is None else ch.smiles.text,
            "chosen_scores": None if ch is None else ch.scores.to_dict(),
            "cumulative_improvement": None if ch is None else ch.cumulative_improvement,
        }


def score_case(case: TestCase, candidates: CandidateSet, scorer: PropertyScoreSource,
               reg: PropertyRegistry) -> MoleculeResult:
    """Assess every parsed candidate of ``case`` and pick the best success.

    Candidates the scorer cannot resolve are invalid and counted in
    ``score_rejects``. The chosen candidate has the highest mean relative
    improvement among successes; ties go to the earliest.
    """
    obj = case.objective
    x = case.scores
    results = []
    rejects = 0
    chosen = None
    best = -math.inf
    for k, smi in enumerate(candidates.parsed):
        try:
            y = scorer.scores(smi)
        except ScoreUnavailable:
            rejects += 1
            results.append(CandidateResult(smi, valid=False))
            continue
        ok = satisfies_objective(x, y, obj, reg, strict=False)
        strict = ok and satisfies_objective(x, y, obj, reg, strict=True)
        ri = relative_improvement(x, y, obj.improve, reg) if obj.improve else 0.0
        results.append(CandidateResult(smi, True, y, ok, strict, ri))
        if ok and ri > best:
            best, chosen = ri, k
    return MoleculeResult(
        case=case,
        candidates=candidates,
        per_candidate=tuple(results),
        chosen=chosen,
        success=chosen is not None,
        strict_success=any(r.strict_success for r in results),
        score_rejects=rejects,
    )


# --- aggregation ------------------------------------------------------------

@dataclass
class Tally:
    """Additive sufficient statistics for a report."""

    n_cases: int = 0
    n_success: int = 0
    n_strict: int = 0
    n_valid: int = 0
    n_novel: int = 0
    sum_sim: float = 0.0
    sum_sas: float = 0.0
    sum_ri: float = 0.0
    aps_sum: dict = field(default_factory=dict)
    aps_n: dict = field(default_factory=dict)

    def merge(self, other: "Tally") -> "Tally":
        aps_sum = dict(self.aps_sum)
        aps_n = dict(self.aps_n)
        for k, v in other.aps_sum.items():
            aps_sum[k] = aps_sum.get(k, 0.0) + v
            aps_n[k] = aps_n.get(k, 0) + other.aps_n[k]
        return Tally(
            self.n_cases + other.n_cases, self.n_success + other.n_success,
            self.n_strict + other.n_strict, self.n_valid + other.n_valid,
            self.n_novel + other.n_novel, self.sum_sim + other.sum_sim,
            self.sum_sas + other.sum_sas, self.sum_ri + other.sum_ri, aps_sum, aps_n,
        )


def _tally_one(r: MoleculeResult, train_index: set[str], table: FragmentScoreTable) -> Tally:
    t = Tally(n_cases=1, n_valid=int(r.any_valid), n_strict=int(r.strict_success))
    ch = r.chosen_candidate
    if ch is None:
        return t
    t.n_success = 1
    mol_y = parse_smiles(ch.smiles.text)
    mol_x = parse_smiles(r.case.molecule.text)
    t.sum_sim = tanimoto(morgan_fingerprint(mol_x), morgan_fingerprint(mol_y))
    t.sum_sas = sa_score(mol_y, table)
    t.sum_ri = ch.cumulative_improvement
    t.n_novel = int(ch.smiles.text not in train_index)
    for name in r.case.objective.combination:
        t.aps_sum[name] = ch.scores[name]
        t.aps_n[name] = 1
    return t


@dataclass(frozen=True)
class EvaluationReport:
    """Run metrics; success-conditioned means are ``None`` when nothing succeeded."""

    sr: float
    sr_theta: float
    val: float
    sim: float | None
    nov: float | None
    sas: float | None
    ri: float | None
    aps: dict
    n_cases: int
    per_objective: dict
    tally: Tally
    sas_approximate: bool = False

    @classmethod
    def from_tally(cls, t: Tally, per_objective: Mapping[str, Tally] | None = None,
                   sas_approximate: bool = False) -> "EvaluationReport":
        if t.n_cases == 0:
            raise ValueError("cannot report on zero cases")
        s = t.n_success

        def mean(v: float) -> float | None:
            return v / s if s else None

        per = {k: cls.from_tally(v, None, sas_approximate) for k, v in (per_objective or {}).items()}
        return cls(
            sr=t.n_success / t.n_cases,
            sr_theta=t.n_strict / t.n_cases,
            val=t.n_valid / t.n_cases,
            sim=mean(t.sum_sim),
            nov=mean(t.n_novel),
            sas=mean(t.sum_sas),
            ri=mean(t.sum_ri),
            aps={k: t.aps_sum[k] / t.aps_n[k] for k in sorted(t.aps_sum)},
            n_cases=t.n_cases,
            per_objective=per,
            tally=t,
            sas_approximate=sas_approximate,
        )

    def to_dict(self, digits: int = 6) -> dict:
        def r(v):
            return None if v is None else round(v, digits)

        out = {
            "n_cases": self.n_cases,
            "SR": r(self.sr), "SR_theta": r(self.sr_theta), "Val": r(self.val),
            "Sim": r(self.sim), "Nov": r(self.nov), "SAS": r(self.sas), "RI": r(self.ri),
            "APS": {k: r(v) for k, v in self.aps.items()},
        }
        if self.per_objective:
            out["per_objective"] = {k: v.to_dict(digits) for k, v in self.per_objective.items()}
        return out


def aggregate(results: Sequence[MoleculeResult], train_index: Iterable[CanonicalSmiles | str] = (),
              frag_table: FragmentScoreTable | None = None,
              reg: PropertyRegistry | None = None) -> EvaluationReport:
    """Fold case results into an :class:`EvaluationReport`.

    SR, SR_theta and Val are over all cases. Sim, Nov, SAS, RI and APS are
    over the chosen candidates of successful cases.
    """
    if not results:
        raise ValueError("aggregate needs at least one result")
    table = frag_table if frag_table is not None else FragmentScoreTable()
    train = {s.text if isinstance(s, CanonicalSmiles) else str(s) for s in train_index}
    total = Tally()
    per: dict[str, Tally] = {}
    for r in results:
        t = _tally_one(r, train, table)
        total = total.merge(t)
        key = r.case.objective.key(reg)
        per[key] = per.get(key, Tally()).merge(t)
    per = {k: per[k] for k in sorted(per)}
    return EvaluationReport.from_tally(total, per, table.approximate)


def merge_reports(reports: Sequence[EvaluationReport]) -> EvaluationReport:
    """Count-weighted merge, equal to aggregating the concatenated results."""
    if not reports:
        raise ValueError("nothing to merge")
    total = Tally()
    per: dict[str, Tally] = {}
    for rep in reports:
        total = total.merge(rep.tally)
        for k, v in rep.per_objective.items():
            per[k] = per.get(k, Tally()).merge(v.tally)
    per = {k: per[k] for k in sorted(per)}
    return EvaluationReport.from_tally(total, per, any(r.sas_approximate for r in reports))


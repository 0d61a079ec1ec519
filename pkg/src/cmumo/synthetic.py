"""Synthetic pair and score files for desk-scale runs.

Pairs are (base, variant) where each variant is a single-edit neighbour of a
base molecule produced by :func:`cmumo.gateway.mock_mutate`. Scores come from
:class:`cmumo.evaluation.SyntheticScoreSource`, so they are deterministic but
carry no chemical meaning.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .evaluation import SyntheticScoreSource
from .gateway import mock_mutate
from .molgraph import CanonicalSmiles, canonicalize
from .properties import PropertyRegistry

#: Properties of the default five-property demo universe.
DEMO_PROPERTIES = ("BBBP", "DRD2", "HIA", "PlogP", "QED")


@dataclass
class SyntheticData:
    pairs: list[dict]
    scores: list[dict]


def read_smiles_column(path) -> list[str]:
    """First tab- or space-separated field of each non-comment, non-blank line."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        out.append(line.split()[0])
    return out


def make_synthetic(base_smiles: Sequence[str], reg: PropertyRegistry, n_pairs: int,
                   seed: int = 1, salt: str = "0", variants_per_base: int = 20) -> SyntheticData:
    """Up to ``n_pairs`` (base, variant) pairs and scores for every molecule used.

    Bases are taken in order; each contributes at most ``variants_per_base``
    pairs. Fewer pairs come back if the bases run out.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    scorer = SyntheticScoreSource(reg, salt=salt)
    pairs: list[dict] = []
    scored: dict[str, dict] = {}

    def score(c: CanonicalSmiles) -> dict:
        if c.text not in scored:
            scored[c.text] = scorer.scores(c).to_dict()
        return scored[c.text]

    for text in base_smiles:
        if len(pairs) >= n_pairs:
            break
        base = canonicalize(text)
        for variant in mock_mutate(base, variants_per_base + 1, seed)[1:]:
            if len(pairs) >= n_pairs:
                break
            pairs.append({"smiles_x": base.text, "smiles_y": variant.text,
                          "scores_x": score(base), "scores_y": score(variant)})
    scores = [{"smiles": k, "scores": v} for k, v in scored.items()]
    return SyntheticData(pairs, scores)


def demo_registry(names: Iterable[str] = DEMO_PROPERTIES) -> PropertyRegistry:
    return PropertyRegistry.default().subset(list(names))

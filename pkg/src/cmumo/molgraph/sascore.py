"""Synthetic accessibility score (Ertl-style).

The score combines the mean contribution of radius-2 circular fragments,
looked up in an external table, with complexity penalties for size, stereo
centres, spiro atoms, bridgeheads and macrocycles plus a fingerprint-density
correction for symmetric molecules. The raw value is mapped affinely onto
[1, 10] (1 = easy) with a logarithmic soft cap above 8.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Mapping

from .fingerprint import morgan_counts
from .stereo import _distinct_neighbours, _tetrahedral_candidate

if TYPE_CHECKING:
    from .graph import MolGraph

_RAW_MIN = -4.0
_RAW_MAX = 2.5


class FragmentTableError(ValueError):
    pass


@dataclass(frozen=True)
class FragmentScoreTable:
    """Fragment id -> contribution, with a default for unseen ids.

    Attributes
    ----------
    entries
        Contribution per unsigned fragment identifier.
    default
        Contribution of fragments missing from ``entries``.
    provenance
        Free-text source label.
    default_declared
        False when the file gave no ``#default`` line; reports built with such
        a table are labelled approximate.
    """

    entries: Mapping[int, float] = field(default_factory=dict)
    default: float = 0.0
    provenance: str = "empty"
    default_declared: bool = False

    def __post_init__(self) -> None:
        for k, v in self.entries.items():
            if not math.isfinite(v):
                raise FragmentTableError(f"non-finite score for fragment {k}")
        if not math.isfinite(self.default):
            raise FragmentTableError("non-finite default score")

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, key: int) -> float:
        return self.entries.get(key, self.default)

    @property
    def approximate(self) -> bool:
        return not self.default_declared or not self.entries

    @classmethod
    def parse(cls, text: str, provenance: str = "inline") -> "FragmentScoreTable":
        entries: dict[int, float] = {}
        default = 0.0
        declared = False
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "default":
                    try:
                        default = float(parts[1])
                    except ValueError as exc:
                        raise FragmentTableError(f"line {lineno}: bad default {parts[1]!r}") from exc
                    declared = True
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FragmentTableError(f"line {lineno}: expected '<id>\\t<score>'")
            try:
                key = int(parts[0])
                score = float(parts[1])
            except ValueError as exc:
                raise FragmentTableError(f"line {lineno}: {exc}") from exc
            if key < 0:
                raise FragmentTableError(f"line {lineno}: fragment ids are unsigned")
            entries[key] = score
        return cls(entries, default, provenance, declared)

    @classmethod
    def load(cls, path) -> "FragmentScoreTable":
        path = Path(path)
        return cls.parse(path.read_text(encoding="utf-8"), provenance=str(path))

    def dumps(self) -> str:
        lines = [f"#default {self.default!r}"] if self.default_declared else []
        lines.extend(f"{k}\t{v!r}" for k, v in sorted(self.entries.items()))
        return "\n".join(lines) + "\n"


def chiral_centre_count(mol: "MolGraph") -> int:
    """Potential tetrahedral centres, assigned or not."""
    classes = mol.stereo_classes()
    return sum(
        1 for i in range(mol.num_atoms)
        if _tetrahedral_candidate(mol, i) and _distinct_neighbours(mol, i, classes)
    )


def spiro_count(mol: "MolGraph") -> int:
    rings = [set(r.atoms) for r in mol.ring_info().rings]
    spiro: set[int] = set()
    for i in range(len(rings)):
        for j in range(i + 1, len(rings)):
            shared = rings[i] & rings[j]
            if len(shared) == 1:
                spiro |= shared
    return len(spiro)


def bridgehead_count(mol: "MolGraph") -> int:
    rings = mol.ring_info().rings
    heads: set[int] = set()
    for i in range(len(rings)):
        for j in range(i + 1, len(rings)):
            shared = rings[i].bonds & rings[j].bonds
            if len(shared) < 2:
                continue
            seen: dict[int, int] = {}
            for bi in shared:
                b = mol.bonds[bi]
                seen[b.begin] = seen.get(b.begin, 0) + 1
                seen[b.end] = seen.get(b.end, 0) + 1
            heads.update(a for a, c in seen.items() if c == 1)
    return len(heads)


def complexity_penalty(mol: "MolGraph") -> float:
    """Sum of the size, stereo, spiro, bridgehead and macrocycle penalties (>= 0)."""
    n = mol.num_atoms
    size = n ** 1.005 - n
    stereo = math.log10(chiral_centre_count(mol) + 1)
    spiro = math.log10(spiro_count(mol) + 1)
    bridge = math.log10(bridgehead_count(mol) + 1)
    macro = math.log10(2) if any(len(r) > 8 for r in mol.ring_info().rings) else 0.0
    return size + stereo + spiro + bridge + macro


def _symmetry_bonus(mol: "MolGraph", counts) -> float:
    n = mol.num_atoms
    return 0.5 * math.log(n / len(counts)) if n > len(counts) else 0.0


def raw_sa_score(mol: "MolGraph", table: FragmentScoreTable) -> float:
    counts = morgan_counts(mol, 2)
    total = sum(counts.values())
    frag = sum(table.get(k) * c for k, c in counts.items()) / total
    return frag - complexity_penalty(mol) + _symmetry_bonus(mol, counts)


def sa_score(mol: "MolGraph", table: FragmentScoreTable) -> float:
    """Synthetic accessibility on [1, 10] (lower is easier).

    With an empty table there is no fragment evidence at all, so the score
    is complexity-only: zero net complexity maps to 1 and each unit of
    penalty adds the same amount as in the full mapping.
    """
    if mol.num_atoms == 0:
        raise ValueError("sa_score needs at least one atom")
    if not table.entries:
        net = complexity_penalty(mol) - _symmetry_bonus(mol, morgan_counts(mol, 2))
        score = 1.0 + max(0.0, net) * 9.0 / (_RAW_MAX - _RAW_MIN)
    else:
        raw = raw_sa_score(mol, table)
        score = 11.0 - (raw - _RAW_MIN + 1) / (_RAW_MAX - _RAW_MIN) * 9.0
    if score > 8.0:
        score = 8.0 + math.log(score + 1.0 - 9.0)
    return min(10.0, max(1.0, score))

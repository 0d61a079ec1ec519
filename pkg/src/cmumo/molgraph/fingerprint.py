"""Morgan (ECFP-style) circular fingerprints and Tanimoto similarity.

Environment identifiers use the 32-bit boost-style ``hash_combine`` scheme of
the common open-source toolkit, so the sparse ids coincide with the ids that
published fragment-score tables are keyed on. Stereo marks are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from . import elements

if TYPE_CHECKING:
    from .graph import MolGraph

_MASK = 0xFFFFFFFF


class LengthMismatch(ValueError):
    """Fingerprints of different lengths were compared."""


def _hash_value(v) -> int:
    if isinstance(v, tuple):
        seed = 0
        for x in v:
            seed = _combine(seed, x)
        return seed
    return v & _MASK


def _combine(seed: int, v) -> int:
    h = _hash_value(v)
    return (seed ^ ((h + 0x9E3779B9 + ((seed << 6) & _MASK) + (seed >> 2)) & _MASK)) & _MASK


def _hash_range(values) -> int:
    seed = 0
    for v in values:
        seed = _combine(seed, v)
    return seed


def atom_invariants(mol: "MolGraph") -> list[int]:
    """Radius-0 identifiers (connectivity invariants)."""
    info = mol.ring_info()
    out = []
    for i, a in enumerate(mol.atoms):
        delta_mass = 0
        if a.isotope is not None:
            # integer part of (isotope mass - standard weight); mass number stands in for the mass
            delta_mass = int(a.isotope - elements.ELEMENTS[a.element].weight)
        comp = [a.number, mol.total_degree(i), a.hydrogens, a.charge, delta_mass]
        if info.atom_in_ring[i]:
            comp.append(1)
        out.append(_hash_range(comp))
    return out


def morgan_environments(mol: "MolGraph", radius: int = 2) -> list[tuple[int, int, int]]:
    """Deduplicated environments as ``(identifier, centre atom, radius)``."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    n = mol.num_atoms
    cur = atom_invariants(mol)
    envs = [(cur[i], i, 0) for i in range(n)]
    covered = [0] * n
    dead = [False] * n
    seen: set[int] = set()
    codes = [int(b.order) for b in mol.bonds]
    for layer in range(radius):
        nxt = list(cur)
        new_cov = list(covered)
        round_items = []
        for i in range(n):
            if dead[i]:
                continue
            if mol.degree(i) == 0:
                dead[i] = True
                continue
            pairs = []
            for w, bi in mol.neighbors(i):
                new_cov[i] |= 1 << bi
                new_cov[i] |= covered[w]
                pairs.append((codes[bi], cur[w]))
            pairs.sort()
            h = _combine(layer, cur[i])
            for p in pairs:
                h = _combine(h, p)
            nxt[i] = h
            round_items.append((new_cov[i], h, i))
        round_items.sort()
        for cov, h, i in round_items:
            if cov in seen:
                dead[i] = True
            else:
                seen.add(cov)
                envs.append((h, i, layer + 1))
        cur, covered = nxt, new_cov
    return envs


def morgan_counts(mol: "MolGraph", radius: int = 2) -> dict[int, int]:
    """Sparse count fingerprint: environment id -> occurrences."""
    counts: dict[int, int] = {}
    for h, _, _ in morgan_environments(mol, radius):
        counts[h] = counts.get(h, 0) + 1
    return counts


@dataclass(frozen=True)
class Fingerprint:
    """Fixed-length bit vector stored as a Python integer bitmask."""

    bits: int
    nbits: int = 2048
    radius: int = 2

    def on_bits(self) -> list[int]:
        out = []
        b = self.bits
        while b:
            low = b & -b
            out.append(low.bit_length() - 1)
            b ^= low
        return out

    def count(self) -> int:
        return self.bits.bit_count()

    def __len__(self) -> int:
        return self.nbits

    @classmethod
    def from_indices(cls, indices, nbits: int = 2048, radius: int = 2) -> "Fingerprint":
        bits = 0
        for i in indices:
            if not 0 <= i < nbits:
                raise ValueError(f"bit {i} outside [0, {nbits})")
            bits |= 1 << i
        return cls(bits, nbits, radius)


def morgan_fingerprint(mol: "MolGraph", radius: int = 2, nbits: int = 2048) -> Fingerprint:
    if nbits < 64 or nbits & (nbits - 1):
        raise ValueError("nbits must be a power of two >= 64")
    bits = 0
    for h in morgan_counts(mol, radius):
        bits |= 1 << (h % nbits)
    return Fingerprint(bits, nbits, radius)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a & b| / |a | b|; two empty vectors count as identical."""
    if a.nbits != b.nbits:
        raise LengthMismatch(f"fingerprint lengths differ: {a.nbits} vs {b.nbits}")
    union = (a.bits | b.bits).bit_count()
    if union == 0:
        return 1.0
    return (a.bits & b.bits).bit_count() / union

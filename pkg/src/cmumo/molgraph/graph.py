"""Molecular graph container.

Atoms carry their full hydrogen count, so a ``MolGraph`` never has implicit
state left to resolve. Tetrahedral chirality is stored relative to a fixed
reference ordering of the neighbours (implicit hydrogen or lone pair first,
then neighbour atom indices ascending), which makes it independent of the
SMILES text the graph came from.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from . import elements

H_TOKEN = -1  # stand-in for an implicit hydrogen / lone pair in neighbour lists


class MolGraphError(ValueError):
    """Base class for structure errors raised by the kernel."""


class SmilesSyntaxError(MolGraphError):
    pass


class ValenceError(MolGraphError):
    pass


class KekulizeError(ValenceError):
    """Aromatic input that admits no alternating single/double assignment."""


class BondOrder(enum.IntEnum):
    # numeric codes follow the usual toolkit bond-type numbering, which the
    # circular fingerprint hashes directly
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 12

    @property
    def valence(self) -> int:
        return 1 if self is BondOrder.AROMATIC else int(self)


@dataclass(frozen=True, slots=True)
class AtomRecord:
    element: str
    charge: int = 0
    hydrogens: int = 0
    aromatic: bool = False
    isotope: int | None = None
    chirality: str | None = None  # "@" or "@@" w.r.t. reference neighbour order

    @property
    def number(self) -> int:
        return elements.ELEMENTS[self.element].number


@dataclass(frozen=True, slots=True)
class BondRecord:
    begin: int
    end: int
    order: BondOrder
    # (reference neighbour of begin, reference neighbour of end, "cis"|"trans")
    stereo: tuple[int, int, str] | None = None

    def other(self, idx: int) -> int:
        return self.end if idx == self.begin else self.begin


def permutation_parity(source: Sequence, target: Sequence) -> int:
    """0 if ``target`` is an even permutation of ``source``, else 1."""
    pos = {v: i for i, v in enumerate(target)}
    perm = [pos[v] for v in source]
    seen = [False] * len(perm)
    parity = 0
    for i in range(len(perm)):
        if seen[i]:
            continue
        j = i
        length = 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        parity ^= (length - 1) & 1
    return parity


def flip_chirality(tag: str) -> str:
    return "@@" if tag == "@" else "@"


class MolGraph:
    """Immutable molecular graph.

    Parameters
    ----------
    atoms, bonds
        Atom and bond records. Bond endpoints index into ``atoms``.
    kekule
        Optional per-bond integer orders with aromatic bonds resolved into
        single/double. Computed on demand when omitted.
    validate
        Check the structural invariants (endpoints, duplicates, aromatic
        consistency, valence). Raises ``MolGraphError`` subclasses.
    """

    __slots__ = ("atoms", "bonds", "_adj", "_pairs", "_cache", "_lock")

    def __init__(
        self,
        atoms: Iterable[AtomRecord],
        bonds: Iterable[BondRecord],
        *,
        kekule: Sequence[int] | None = None,
        validate: bool = True,
    ) -> None:
        self.atoms: tuple[AtomRecord, ...] = tuple(atoms)
        self.bonds: tuple[BondRecord, ...] = tuple(bonds)
        n = len(self.atoms)
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        pairs: dict[tuple[int, int], int] = {}
        for bi, b in enumerate(self.bonds):
            if not (0 <= b.begin < n and 0 <= b.end < n):
                raise MolGraphError(f"bond {bi} references a missing atom")
            if b.begin == b.end:
                raise MolGraphError(f"bond {bi} joins atom {b.begin} to itself")
            key = (min(b.begin, b.end), max(b.begin, b.end))
            if key in pairs:
                raise MolGraphError(f"duplicate bond between atoms {key[0]} and {key[1]}")
            pairs[key] = bi
            adj[b.begin].append((b.end, bi))
            adj[b.end].append((b.begin, bi))
        self._adj = tuple(tuple(sorted(a)) for a in adj)
        self._pairs = pairs
        self._cache: dict = {}
        self._lock = threading.RLock()
        if kekule is not None:
            self._cache["kekule"] = tuple(kekule)
        if validate:
            self._validate()

    # -- basic accessors -------------------------------------------------

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    def neighbors(self, idx: int) -> tuple[tuple[int, int], ...]:
        """``(neighbour index, bond index)`` pairs, neighbour-sorted."""
        return self._adj[idx]

    def degree(self, idx: int) -> int:
        return len(self._adj[idx])

    def bond_index(self, a: int, b: int) -> int | None:
        return self._pairs.get((min(a, b), max(a, b)))

    def bond_between(self, a: int, b: int) -> BondRecord | None:
        bi = self.bond_index(a, b)
        return None if bi is None else self.bonds[bi]

    def reference_neighbors(self, idx: int) -> list[int]:
        """Neighbour order that stored chirality refers to."""
        ref = [nbr for nbr, _ in self._adj[idx]]
        if len(ref) == 3 or self.atoms[idx].hydrogens:
            ref.insert(0, H_TOKEN)
        return ref

    # -- cached derived data ---------------------------------------------

    def _cached(self, key: str, fn):
        try:
            return self._cache[key]
        except KeyError:
            pass
        with self._lock:
            if key not in self._cache:
                self._cache[key] = fn()
            return self._cache[key]

    def kekule_orders(self) -> tuple[int, ...]:
        """Integer bond orders with aromatic bonds kekulized."""
        from .aromaticity import kekulize

        return self._cached("kekule", lambda: kekulize(self))

    def ring_info(self):
        from .rings import RingInfo

        return self._cached("rings", lambda: RingInfo.from_graph(self))

    def symmetry_classes(self) -> tuple[int, ...]:
        """Graph-invariant atom classes (refinement without tie breaking)."""
        from .canon import refine_classes

        return self._cached("symclasses", lambda: tuple(refine_classes(self)))

    def stereo_classes(self) -> tuple[int, ...]:
        """Like :meth:`symmetry_classes` but pseudo-asymmetric branches differ."""
        from .canon import stereo_refine_classes

        return self._cached("stereoclasses", lambda: tuple(stereo_refine_classes(self)))

    def valence(self, idx: int) -> int:
        orders = self.kekule_orders()
        return sum(orders[bi] for _, bi in self._adj[idx]) + self.atoms[idx].hydrogens

    def heavy_degree(self, idx: int) -> int:
        return len(self._adj[idx])

    def total_degree(self, idx: int) -> int:
        return len(self._adj[idx]) + self.atoms[idx].hydrogens

    # -- transformations -------------------------------------------------

    def permuted(self, perm: Sequence[int]) -> "MolGraph":
        """Relabel atoms: old atom ``i`` becomes new atom ``perm[i]``."""
        n = len(self.atoms)
        if sorted(perm) != list(range(n)):
            raise ValueError("perm must be a permutation of atom indices")
        new_atoms: list[AtomRecord | None] = [None] * n
        for old, atom in enumerate(self.atoms):
            if atom.chirality is not None:
                old_ref = [H_TOKEN if x == H_TOKEN else perm[x] for x in self.reference_neighbors(old)]
                new_ref = sorted(x for x in old_ref if x != H_TOKEN)
                if H_TOKEN in old_ref:
                    new_ref.insert(0, H_TOKEN)
                if permutation_parity(old_ref, new_ref):
                    atom = replace(atom, chirality=flip_chirality(atom.chirality))
            new_atoms[perm[old]] = atom
        new_bonds = []
        for b in self.bonds:
            stereo = None
            if b.stereo is not None:
                stereo = (perm[b.stereo[0]], perm[b.stereo[1]], b.stereo[2])
            new_bonds.append(BondRecord(perm[b.begin], perm[b.end], b.order, stereo))
        kek = self._cache.get("kekule")
        return MolGraph(new_atoms, new_bonds, kekule=kek, validate=False)

    def without_stereo(self) -> "MolGraph":
        atoms = [replace(a, chirality=None) if a.chirality else a for a in self.atoms]
        bonds = [replace(b, stereo=None) if b.stereo else b for b in self.bonds]
        return MolGraph(atoms, bonds, kekule=self._cache.get("kekule"), validate=False)

    # -- validation ------------------------------------------------------

    def _validate(self) -> None:
        for bi, b in enumerate(self.bonds):
            if b.order is BondOrder.AROMATIC and not (
                self.atoms[b.begin].aromatic and self.atoms[b.end].aromatic
            ):
                raise MolGraphError(f"aromatic bond {bi} joins a non-aromatic atom")
        for i, atom in enumerate(self.atoms):
            if atom.element not in elements.ELEMENTS:
                raise MolGraphError(f"unknown element {atom.element!r}")
            if atom.hydrogens < 0:
                raise MolGraphError(f"atom {i} has a negative hydrogen count")
        check_valences(self)

    def __repr__(self) -> str:
        from .canon import canonical_smiles

        try:
            text = canonical_smiles(self)
        except Exception:  # pragma: no cover - repr must not raise
            text = f"{len(self.atoms)} atoms"
        return f"MolGraph({text!r})"


def check_valences(mol: MolGraph) -> None:
    for i, atom in enumerate(mol.atoms):
        allowed = elements.allowed_valences(atom.element, atom.charge)
        if allowed is None:
            continue
        total = mol.valence(i)
        if total > max(allowed):
            raise ValenceError(
                f"atom {i} ({atom.element}{atom.charge:+d}) has valence {total}, "
                f"allowed {allowed}"
            )

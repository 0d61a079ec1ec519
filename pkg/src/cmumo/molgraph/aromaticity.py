"""Kekulization and aromaticity perception.

Perception follows the widely used toolkit convention: each ring atom is
typed by how many electrons it can donate to a cyclic pi system (0, 1 or 2),
single rings and fused combinations of rings are tested against the 4n+2
rule, and an exocyclic double bond to a more electronegative partner pulls
the ring atom's electron out of the ring (so 2-pyridone is aromatic while
benzoquinone is not).
"""

from __future__ import annotations

from itertools import combinations
from typing import TYPE_CHECKING

from . import elements
from .graph import BondOrder, KekulizeError

if TYPE_CHECKING:
    from .graph import MolGraph

_MAX_STEPS = 200_000
_MAX_COMBO = 12


def needs_pi(
    element: str, charge: int, hydrogens: int, fixed_valence: int, n_aromatic: int
) -> bool:
    """Whether an aromatic atom must take a double bond in a Kekule form.

    ``fixed_valence`` is the summed order of its non-aromatic bonds.
    """
    allowed = elements.allowed_valences(element, charge)
    if allowed is None:
        return False
    used = fixed_valence + n_aromatic + hydrogens
    for v in allowed:
        if v >= used:
            return v - used >= 1
    return False


def kekulize(mol: "MolGraph") -> tuple[int, ...]:
    """Integer bond orders with every aromatic bond resolved to 1 or 2.

    Raises
    ------
    KekulizeError
        No alternating assignment exists for the aromatic atoms.
    """
    orders = [b.order.valence if b.order is not BondOrder.AROMATIC else 1 for b in mol.bonds]
    arom_bonds = [bi for bi, b in enumerate(mol.bonds) if b.order is BondOrder.AROMATIC]
    if not arom_bonds:
        return tuple(orders)
    need: set[int] = set()
    for i, atom in enumerate(mol.atoms):
        if not atom.aromatic:
            continue
        fixed = 0
        n_arom = 0
        for _, bi in mol.neighbors(i):
            if mol.bonds[bi].order is BondOrder.AROMATIC:
                n_arom += 1
            else:
                fixed += mol.bonds[bi].order.valence
        if n_arom and needs_pi(atom.element, atom.charge, atom.hydrogens, fixed, n_arom):
            need.add(i)
    options: dict[int, list[tuple[int, int]]] = {i: [] for i in need}
    for bi in arom_bonds:
        b = mol.bonds[bi]
        if b.begin in need and b.end in need:
            options[b.begin].append((b.end, bi))
            options[b.end].append((b.begin, bi))
    matching = _perfect_matching(options)
    if matching is None:
        raise KekulizeError("cannot assign alternating bonds to the aromatic system")
    for bi in matching:
        orders[bi] = 2
    return tuple(orders)


def _perfect_matching(options: dict[int, list[tuple[int, int]]]) -> list[int] | None:
    if len(options) % 2:
        return None
    unmatched = set(options)
    chosen: list[int] = []
    steps = 0

    def solve() -> bool:
        nonlocal steps
        steps += 1
        if steps > _MAX_STEPS:
            return False
        if not unmatched:
            return True
        # most constrained atom first
        best = None
        best_opts = None
        for v in unmatched:
            opts = [(w, bi) for w, bi in options[v] if w in unmatched]
            if best_opts is None or len(opts) < len(best_opts) or (
                len(opts) == len(best_opts) and v < best
            ):
                best, best_opts = v, opts
                if not opts:
                    return False
        for w, bi in best_opts:
            unmatched.discard(best)
            unmatched.discard(w)
            chosen.append(bi)
            if solve():
                return True
            chosen.pop()
            unmatched.add(best)
            unmatched.add(w)
        return False

    return chosen if solve() else None


# electron donor categories
_NONE, _VACANT, _ONE, _TWO = None, 0, 1, 2


def _donor(mol: "MolGraph", i: int, orders, bond_in_ring) -> int | None:
    atom = mol.atoms[i]
    elem = elements.ELEMENTS[atom.element]
    if elem.number > 18 and elem.number not in (34, 52):
        return _NONE
    dv = elem.default_valence
    if dv <= 1:
        return _NONE
    heavy = mol.degree(i)
    degree = heavy + atom.hydrogens
    if degree > 3:
        return _NONE
    bond_sum = 0
    multiples = []
    for w, bi in mol.neighbors(i):
        o = orders[bi]
        bond_sum += o
        if o >= 2:
            multiples.append((w, bi))
    if bond_sum + atom.hydrogens > elem.outer_electrons - atom.charge:
        return _NONE
    if len(multiples) > 1:
        return _NONE
    nlp = max(elem.outer_electrons - dv - atom.charge, 0)
    nelec = (dv - degree) + nlp
    if nelec > 1 and bond_sum - heavy > 1:
        nelec = 1
    exo = [(w, bi) for w, bi in multiples if not bond_in_ring[bi]]
    if nelec < 0:
        return _NONE
    if nelec == 0:
        if exo:
            return _VACANT
        if multiples:
            return _ONE
        return _NONE
    if nelec == 1:
        if exo:
            partner = mol.atoms[exo[0][0]].number
            if elements.is_more_electronegative(partner, elem.number):
                return _VACANT
            return _ONE
        if multiples:
            return _ONE
        if atom.charge == 1:
            return _VACANT
        return _NONE
    return _ONE if multiples else _TWO


def _huckel(n_electrons: int) -> bool:
    return n_electrons == 2 or (n_electrons >= 6 and n_electrons % 4 == 2)


def perceive(mol: "MolGraph") -> tuple[list[bool], list[bool]]:
    """Aromatic flags for atoms and bonds of a Kekule-form graph."""
    orders = mol.kekule_orders()
    info = mol.ring_info()
    donors = [_donor(mol, i, orders, info.bond_in_ring) if info.atom_in_ring[i] else None
              for i in range(mol.num_atoms)]
    cand = [r for r in info.rings if all(donors[a] is not None for a in r.atoms)]
    atom_arom = [False] * mol.num_atoms
    bond_arom = [False] * len(mol.bonds)
    if not cand:
        return atom_arom, bond_arom

    # group candidate rings into fused systems (rings sharing a bond)
    groups: list[list[int]] = []
    seen = [False] * len(cand)
    for s in range(len(cand)):
        if seen[s]:
            continue
        seen[s] = True
        stack, members = [s], []
        while stack:
            r = stack.pop()
            members.append(r)
            for t in range(len(cand)):
                if not seen[t] and cand[r].bonds & cand[t].bonds:
                    seen[t] = True
                    stack.append(t)
        groups.append(sorted(members))

    for members in groups:
        for size in range(1, min(len(members), _MAX_COMBO) + 1):
            for combo in combinations(members, size):
                rings = [cand[r] for r in combo]
                if size > 1 and not _connected(rings):
                    continue
                counts: dict[int, int] = {}
                for r in rings:
                    for bi in r.bonds:
                        counts[bi] = counts.get(bi, 0) + 1
                # only the perimeter counts: an atom whose ring bonds are all
                # shared inside the combination is not on the cycle
                edge = [bi for bi, c in counts.items() if c == 1]
                perimeter: set[int] = set()
                for bi in edge:
                    perimeter.add(mol.bonds[bi].begin)
                    perimeter.add(mol.bonds[bi].end)
                if not _huckel(sum(donors[a] for a in perimeter)):
                    continue
                for a in perimeter:
                    atom_arom[a] = True
                for bi in edge:
                    bond_arom[bi] = True
    return atom_arom, bond_arom


def _connected(rings) -> bool:
    reached = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in range(len(rings)):
            if j not in reached and rings[i].bonds & rings[j].bonds:
                reached.add(j)
                frontier.append(j)
    return len(reached) == len(rings)

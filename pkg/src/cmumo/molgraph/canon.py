"""Canonical atom ranking and SMILES writing.

Atoms are partitioned by iterative neighbourhood refinement. Ties left after
refinement are broken one atom at a time. When a tie touches a stereo
element, every choice is explored (up to a fixed leaf budget) and the
lexicographically smallest string wins, so stereo-dependent ties cannot make
the output depend on input atom order.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import elements
from .graph import H_TOKEN, BondOrder, MolGraph, permutation_parity, flip_chirality
from .smiles import default_hydrogens, parse_smiles

_LEAF_BUDGET = 64
_AROMATIC_ORGANIC = {"B", "C", "N", "O", "P", "S"}


def _dense_rank(keys: list) -> list[int]:
    order = sorted(set(keys))
    pos = {k: i for i, k in enumerate(order)}
    return [pos[k] for k in keys]


def _initial(mol: MolGraph) -> list[int]:
    info = mol.ring_info()
    keys = [
        (mol.degree(i), a.number, a.isotope or 0, a.charge, a.hydrogens, a.aromatic,
         info.atom_in_ring[i])
        for i, a in enumerate(mol.atoms)
    ]
    return _dense_rank(keys)


def _refine(mol: MolGraph, classes: list[int]) -> list[int]:
    count = len(set(classes))
    codes = [int(b.order) for b in mol.bonds]
    while True:
        keys = [
            (classes[i], tuple(sorted((codes[bi], classes[w]) for w, bi in mol.neighbors(i))))
            for i in range(len(classes))
        ]
        new = _dense_rank(keys)
        new_count = len(set(new))
        if new_count == count:
            return new
        classes, count = new, new_count


def refine_classes(mol: MolGraph) -> list[int]:
    """Symmetry classes from constitution only (stereo ignored)."""
    if not mol.atoms:
        return []
    return _refine(mol, _initial(mol))


def _stereo_keys(mol: MolGraph, classes: list[int]) -> list[int]:
    keys = [0] * mol.num_atoms
    for i, a in enumerate(mol.atoms):
        if not a.chirality:
            continue
        ref = mol.reference_neighbors(i)
        cls = [-1 if x == H_TOKEN else classes[x] for x in ref]
        if len(set(cls)) != len(cls):
            continue
        by_class = [x for _, x in sorted(zip(cls, ref))]
        tag = a.chirality
        if permutation_parity(ref, by_class):
            tag = flip_chirality(tag)
        keys[i] = 1 if tag == "@" else 2
    for b in mol.bonds:
        if b.stereo is None:
            continue
        ra, rb, rel = b.stereo
        flip = False
        picked = []
        for end, other, ref in ((b.begin, b.end, ra), (b.end, b.begin, rb)):
            subs = [w for w, _ in mol.neighbors(end) if w != other]
            if len(subs) == 2 and classes[subs[0]] == classes[subs[1]]:
                picked = None
                break
            best = max(subs, key=lambda w: classes[w])
            if best != ref:
                flip = not flip
            picked.append(best)
        if picked is None:
            continue
        cis = (rel == "cis") != flip
        val = 3 if cis else 4
        for end in (b.begin, b.end):
            keys[end] = keys[end] * 8 + val
    return keys


def _full_refine(mol: MolGraph, classes: list[int], stereo: bool) -> list[int]:
    while True:
        classes = _refine(mol, classes)
        if not stereo:
            return classes
        sk = _stereo_keys(mol, classes)
        new = _dense_rank([(c, k) for c, k in zip(classes, sk)])
        if len(set(new)) == len(set(classes)):
            return classes
        classes = new


def stereo_refine_classes(mol: MolGraph) -> list[int]:
    """Symmetry classes that also separate atoms by their stereo configuration."""
    if not mol.atoms:
        return []
    return _full_refine(mol, _initial(mol), _has_stereo(mol))


def _individualize(classes: list[int], v: int) -> list[int]:
    return _dense_rank([(c, 0 if i == v else 1) for i, c in enumerate(classes)])


def _stereo_related(mol: MolGraph) -> set[int]:
    out: set[int] = set()
    for i, a in enumerate(mol.atoms):
        if a.chirality:
            out.add(i)
            out.update(w for w, _ in mol.neighbors(i))
    for b in mol.bonds:
        if b.stereo:
            for end in (b.begin, b.end):
                out.add(end)
                out.update(w for w, _ in mol.neighbors(end))
    return out


def _has_stereo(mol: MolGraph) -> bool:
    return any(a.chirality for a in mol.atoms) or any(b.stereo for b in mol.bonds)


def canonical_ranks(mol: MolGraph) -> list[int]:
    """Distinct canonical ranks, ties broken at the lowest atom index."""
    if not mol.atoms:
        return []
    stereo = _has_stereo(mol)
    classes = _full_refine(mol, _initial(mol), stereo)
    n = mol.num_atoms
    while len(set(classes)) < n:
        v = _first_tied(classes)[0]
        classes = _full_refine(mol, _individualize(classes, v), stereo)
    return classes


def _first_tied(classes: list[int]) -> list[int]:
    counts: dict[int, int] = {}
    for c in classes:
        counts[c] = counts.get(c, 0) + 1
    target = min(c for c, k in counts.items() if k > 1)
    return [i for i, c in enumerate(classes) if c == target]


def _leaf_rankings(mol: MolGraph) -> list[list[int]]:
    related = _stereo_related(mol)
    leaves: list[list[int]] = []
    n = mol.num_atoms
    stack = [_full_refine(mol, _initial(mol), True)]
    while stack:
        classes = stack.pop()
        if len(set(classes)) == n:
            leaves.append(classes)
            if len(leaves) >= _LEAF_BUDGET:
                break
            continue
        tied = _first_tied(classes)
        if related.intersection(tied):
            for v in reversed(tied):
                stack.append(_full_refine(mol, _individualize(classes, v), True))
        else:
            stack.append(_full_refine(mol, _individualize(classes, tied[0]), True))
    return leaves


# ---------------------------------------------------------------------------
# writer


def _atom_token(mol: MolGraph, i: int, bond_sum: int, tag: str | None) -> str:
    a = mol.atoms[i]
    sym = a.element.lower() if a.aromatic else a.element
    plain = (
        a.element in elements.ORGANIC_SUBSET
        and (not a.aromatic or a.element in _AROMATIC_ORGANIC)
        and a.charge == 0
        and a.isotope is None
        and tag is None
        and default_hydrogens(a.element, a.aromatic, bond_sum) == a.hydrogens
    )
    if plain:
        return sym
    out = ["["]
    if a.isotope is not None:
        out.append(str(a.isotope))
    out.append(sym)
    if tag:
        out.append(tag)
    if a.hydrogens:
        out.append("H" if a.hydrogens == 1 else f"H{a.hydrogens}")
    if a.charge:
        sign = "+" if a.charge > 0 else "-"
        out.append(sign if abs(a.charge) == 1 else f"{sign}{abs(a.charge)}")
    out.append("]")
    return "".join(out)


def _direction_marks(mol: MolGraph, bond_rank, first_atom) -> dict[int, bool]:
    """Value ``up(end relative to begin)`` for single bonds next to stereo double bonds.

    Each connected system is oriented so that its earliest written mark is '/'.
    """
    # constraints: (bond x, bond y, equal?) on the variables
    edges: dict[int, list[tuple[int, bool]]] = {}
    dbs = [b for b in mol.bonds if b.stereo is not None]
    if not dbs:
        return {}

    def var(centre: int, nbr: int) -> tuple[int, bool]:
        # returns (bond index, negate) so that up(nbr rel centre) = X[bi] ^ negate
        bi = mol.bond_index(centre, nbr)
        b = mol.bonds[bi]
        return bi, b.begin != centre

    def link(p, q, equal: bool) -> None:
        (x, nx), (y, ny) = p, q
        eq = equal != (nx != ny)
        edges.setdefault(x, []).append((y, eq))
        edges.setdefault(y, []).append((x, eq))

    for b in dbs:
        ra, rb, rel = b.stereo
        sides = []
        for end, other in ((b.begin, b.end), (b.end, b.begin)):
            subs = [w for w, bi in mol.neighbors(end)
                    if w != other and mol.bonds[bi].order in (BondOrder.SINGLE, BondOrder.AROMATIC)]
            sides.append(subs)
            for w in subs:
                edges.setdefault(var(end, w)[0], [])
            if len(subs) == 2:
                link(var(end, subs[0]), var(end, subs[1]), False)
        if ra in sides[0] and rb in sides[1]:
            link(var(b.begin, ra), var(b.end, rb), rel == "cis")
    values: dict[int, bool] = {}
    for seed in sorted(edges, key=bond_rank):
        if seed in values:
            continue
        values[seed] = first_atom[seed] == mol.bonds[seed].begin
        queue = [seed]
        while queue:
            x = queue.pop()
            for y, eq in edges[x]:
                want = values[x] if eq else not values[x]
                if y not in values:
                    values[y] = want
                    queue.append(y)
    return values


def write_smiles(mol: MolGraph, ranks) -> str:
    """Write ``mol`` as SMILES, walking atoms in the order given by ``ranks``."""
    n = mol.num_atoms
    if n == 0:
        return ""
    key = lambda i: ranks[i]  # noqa: E731
    visited = [False] * n
    parent_bond = [-1] * n
    children: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    ring_open: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    ring_close: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    dfs_pos = [0] * n
    roots: list[int] = []
    handled: set[int] = set()
    counter = 0
    sorted_nbrs = [sorted(mol.neighbors(i), key=lambda t: ranks[t[0]]) for i in range(n)]
    for start in sorted(range(n), key=key):
        if visited[start]:
            continue
        roots.append(start)
        visited[start] = True
        dfs_pos[start] = counter
        counter += 1
        stack = [(start, iter(sorted_nbrs[start]))]
        while stack:
            v, it = stack[-1]
            for w, bi in it:
                if bi == parent_bond[v] or bi in handled:
                    continue
                handled.add(bi)
                if not visited[w]:
                    visited[w] = True
                    dfs_pos[w] = counter
                    counter += 1
                    parent_bond[w] = bi
                    children[v].append((w, bi))
                    stack.append((w, iter(sorted_nbrs[w])))
                    break
                ring_close[v].append((w, bi))
                ring_open[w].append((v, bi))
            else:
                stack.pop()

    # textual first atom of every bond
    first_atom: dict[int, int] = {}
    for v in range(n):
        for w, bi in children[v]:
            first_atom[bi] = v
        for w, bi in ring_open[v]:
            first_atom[bi] = v

    def bond_rank(bi: int):
        b = mol.bonds[bi]
        return (min(dfs_pos[b.begin], dfs_pos[b.end]), max(dfs_pos[b.begin], dfs_pos[b.end]))

    marks = _direction_marks(mol, bond_rank, first_atom)

    def bond_text(bi: int) -> str:
        b = mol.bonds[bi]
        if bi in marks:
            up_end = marks[bi]  # up(end rel begin)
            if first_atom[bi] == b.begin:
                return "/" if up_end else "\\"
            # up(begin rel end) is the negation
            return "/" if not up_end else "\\"
        if b.order is BondOrder.SINGLE:
            if mol.atoms[b.begin].aromatic and mol.atoms[b.end].aromatic:
                return "-"
            return ""
        if b.order is BondOrder.DOUBLE:
            return "="
        if b.order is BondOrder.TRIPLE:
            return "#"
        return ""

    bond_sum = [0] * n
    for b in mol.bonds:
        bond_sum[b.begin] += b.order.valence
        bond_sum[b.end] += b.order.valence

    in_use: set[int] = set()
    digit_of: dict[int, int] = {}
    out: list[str] = []

    def digit_text(d: int) -> str:
        return str(d) if d < 10 else f"%{d}"

    # iterative writer: frames hold (atom, parent) and a phase marker
    def emit(v: int, parent: int | None) -> None:
        work = [("atom", v, parent)]
        while work:
            kind, a, p = work.pop()
            if kind == "text":
                out.append(a)
                continue
            written: list[int] = []
            if p is not None:
                written.append(p)
            atom = mol.atoms[a]
            ref = mol.reference_neighbors(a)
            if atom.hydrogens or H_TOKEN in ref:
                written.append(H_TOKEN)
            ring_parts: list[str] = []
            freed: list[int] = []
            for w, bi in sorted(ring_close[a], key=lambda t: dfs_pos[t[0]]):
                d = digit_of.pop(bi)
                freed.append(d)
                ring_parts.append(digit_text(d))
                written.append(w)
            for w, bi in sorted(ring_open[a], key=lambda t: ranks[t[0]]):
                d = 1
                while d in in_use:
                    d += 1
                in_use.add(d)
                digit_of[bi] = d
                ring_parts.append(bond_text(bi) + digit_text(d))
                written.append(w)
            for d in freed:
                in_use.discard(d)
            kids = children[a]
            written.extend(w for w, _ in kids)
            tag = None
            if atom.chirality and len(written) == 4:
                tag = atom.chirality
                if H_TOKEN in written and H_TOKEN not in ref:
                    tag = None
                elif permutation_parity(ref, written):
                    tag = flip_chirality(tag)
            out.append(_atom_token(mol, a, bond_sum[a], tag))
            out.extend(ring_parts)
            # push children in reverse so they pop in order
            for k in range(len(kids) - 1, -1, -1):
                w, bi = kids[k]
                if k < len(kids) - 1:
                    work.append(("text", ")", None))
                    work.append(("atom", w, a))
                    work.append(("text", "(" + bond_text(bi), None))
                else:
                    work.append(("atom", w, a))
                    work.append(("text", bond_text(bi), None))

    for k, r in enumerate(roots):
        if k:
            out.append(".")
        emit(r, None)
    return "".join(out)


def canonical_smiles(mol: MolGraph) -> str:
    """Canonical SMILES of a parsed graph."""
    if not mol.atoms:
        return ""
    if not _has_stereo(mol):
        return write_smiles(mol, canonical_ranks(mol))
    return min(write_smiles(mol, r) for r in _leaf_rankings(mol))


def random_smiles(mol: MolGraph, rng: random.Random) -> str:
    """A valid, non-canonical SMILES for ``mol`` (random traversal order)."""
    ranks = list(range(mol.num_atoms))
    rng.shuffle(ranks)
    return write_smiles(mol, ranks)


@dataclass(frozen=True)
class CanonicalSmiles:
    """A SMILES string known to be in canonical form."""

    text: str

    def __str__(self) -> str:
        return self.text

    @classmethod
    def from_smiles(cls, smiles: str) -> "CanonicalSmiles":
        return cls(canonical_smiles(parse_smiles(smiles)))


def canonicalize(mol: "MolGraph | str") -> CanonicalSmiles:
    """Canonical form of a graph, or of a SMILES string (parsed first).

    Raises ``MolGraphError`` when a string does not parse.
    """
    if isinstance(mol, str):
        mol = parse_smiles(mol)
    return CanonicalSmiles(canonical_smiles(mol))


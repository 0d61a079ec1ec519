"""SMILES reader.

Supports the organic subset, bracket atoms (isotope, chirality, hydrogen
count, charge, atom class), explicit bonds including ``/`` and ``\\``
directional marks, branches, ring closures (``%nn`` included) and
dot-disconnected components. Aromatic input is kekulized and aromaticity is
re-perceived, so two spellings of the same structure give the same graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import elements
from .aromaticity import kekulize, perceive
from .graph import (
    H_TOKEN,
    AtomRecord,
    BondOrder,
    BondRecord,
    KekulizeError,
    MolGraph,
    SmilesSyntaxError,
    flip_chirality,
    permutation_parity,
)

_BOND_CHARS = {"-": BondOrder.SINGLE, "=": BondOrder.DOUBLE, "#": BondOrder.TRIPLE,
               "$": BondOrder.TRIPLE, ":": BondOrder.AROMATIC, "/": BondOrder.SINGLE,
               "\\": BondOrder.SINGLE}


def default_hydrogens(element: str, aromatic: bool, bond_sum: int) -> int:
    """Implicit hydrogen count of an organic-subset atom.

    ``bond_sum`` counts aromatic bonds as 1. An aromatic atom with spare
    valence reserves one unit for its ring double bond.
    """
    allowed = elements.allowed_valences(element, 0)
    if allowed is None:
        return 0
    for v in allowed:
        if v >= bond_sum:
            rem = v - bond_sum
            if aromatic and rem >= 1:
                return rem - 1
            return rem
    return 0


@dataclass
class _Atom:
    element: str
    aromatic: bool
    bracket: bool
    isotope: int | None = None
    charge: int = 0
    hydrogens: int = 0
    chirality: str | None = None
    has_prev: bool = False
    order: list = field(default_factory=list)  # written neighbour order


@dataclass
class _Bond:
    a: int
    b: int
    char: str | None
    first: int  # atom written before the bond symbol


class _Parser:
    def __init__(self, text: str) -> None:
        self.s = text
        self.pos = 0
        self.atoms: list[_Atom] = []
        self.bonds: list[_Bond] = []
        self.rings: dict[int, tuple[int, str | None, int]] = {}

    def error(self, msg: str) -> SmilesSyntaxError:
        return SmilesSyntaxError(f"{msg} at position {self.pos} in {self.s!r}")

    def parse(self) -> None:
        s = self.s
        if not s:
            raise self.error("empty SMILES")
        prev: int | None = None
        stack: list[int | None] = []
        pending: str | None = None
        opened = False  # just after '(' with no atom yet
        while self.pos < len(s):
            ch = s[self.pos]
            if ch == "(":
                if prev is None or pending is not None or opened:
                    raise self.error("branch without a preceding atom")
                stack.append(prev)
                opened = True
                self.pos += 1
            elif ch == ")":
                if not stack or pending is not None:
                    raise self.error("unbalanced ')'")
                if opened:
                    raise self.error("empty branch")
                prev = stack.pop()
                self.pos += 1
            elif ch == ".":
                if pending is not None:
                    raise self.error("bond before '.'")
                prev = None
                self.pos += 1
            elif ch in _BOND_CHARS:
                if pending is not None or prev is None:
                    raise self.error("misplaced bond symbol")
                pending = ch
                self.pos += 1
            elif ch.isdigit() or ch == "%":
                if prev is None or opened:
                    raise self.error("ring closure without an atom")
                self._ring(prev, self._ring_number(), pending)
                pending = None
            else:
                idx = self._atom()
                if prev is not None:
                    self.bonds.append(_Bond(prev, idx, pending, prev))
                    self.atoms[idx].has_prev = True
                    self.atoms[idx].order.insert(0, prev)
                    self.atoms[prev].order.append(idx)
                elif pending is not None:
                    raise self.error("bond without a preceding atom")
                pending = None
                opened = False
                prev = idx
        if stack:
            raise self.error("unclosed branch")
        if pending is not None:
            raise self.error("dangling bond")
        if self.rings:
            raise self.error(f"unclosed ring {sorted(self.rings)}")

    def _ring_number(self) -> int:
        s = self.s
        if s[self.pos] == "%":
            if s[self.pos + 1:self.pos + 2] == "(":
                end = s.find(")", self.pos)
                if end < 0:
                    raise self.error("bad ring number")
                num = s[self.pos + 2:end]
                self.pos = end + 1
            else:
                num = s[self.pos + 1:self.pos + 3]
                self.pos += 3
            if not num.isdigit():
                raise self.error("bad ring number")
            return int(num)
        self.pos += 1
        return int(s[self.pos - 1])

    def _ring(self, atom: int, num: int, char: str | None) -> None:
        if num in self.rings:
            other, other_char, slot = self.rings.pop(num)
            if other == atom:
                raise self.error("ring closure to itself")
            if char and other_char and char != other_char and not (
                char in "/\\" and other_char in "/\\"
            ):
                raise self.error("conflicting ring-closure bond symbols")
            if char:
                bond = _Bond(other, atom, char, atom)
            else:
                bond = _Bond(other, atom, other_char, other)
            self.bonds.append(bond)
            self.atoms[other].order[slot] = atom
            self.atoms[atom].order.append(other)
        else:
            self.atoms[atom].order.append(("ring", num))
            self.rings[num] = (atom, char, len(self.atoms[atom].order) - 1)

    def _atom(self) -> int:
        s = self.s
        ch = s[self.pos]
        if ch == "[":
            end = s.find("]", self.pos)
            if end < 0:
                raise self.error("unclosed bracket atom")
            atom = self._bracket(s[self.pos + 1:end])
            self.pos = end + 1
        else:
            two = s[self.pos:self.pos + 2]
            if two in ("Cl", "Br"):
                atom = _Atom(two, False, False)
                self.pos += 2
            elif ch in elements.ORGANIC_SUBSET:
                atom = _Atom(ch, False, False)
                self.pos += 1
            elif ch in "bcnops":
                atom = _Atom(ch.upper(), True, False)
                self.pos += 1
            else:
                raise self.error(f"unexpected character {ch!r}")
        self.atoms.append(atom)
        return len(self.atoms) - 1

    def _bracket(self, body: str) -> _Atom:
        i = 0
        while i < len(body) and body[i].isdigit():
            i += 1
        isotope = int(body[:i]) if i else None
        rest = body[i:]
        symbol = None
        aromatic = False
        length = 0
        for size in (2, 1):
            cand = rest[:size]
            if len(cand) != size:
                continue
            if cand in elements.AROMATIC_SYMBOLS:
                symbol, aromatic, length = elements.AROMATIC_SYMBOLS[cand], True, size
                break
            if cand in elements.ELEMENTS and (size == 1 or cand[1].islower()):
                symbol, length = cand, size
                break
        if symbol is None:
            raise self.error(f"unknown element in [{body}]")
        rest = rest[length:]
        chirality = None
        if rest.startswith("@"):
            if rest.startswith("@@"):
                chirality, rest = "@@", rest[2:]
            elif rest.startswith("@TH1"):
                chirality, rest = "@", rest[4:]
            elif rest.startswith("@TH2"):
                chirality, rest = "@@", rest[4:]
            elif rest[1:3] in ("SP", "TB", "OH", "AL"):
                # other chirality classes are accepted and ignored
                k = 3
                while k < len(rest) and rest[k].isdigit():
                    k += 1
                rest = rest[k:]
            else:
                chirality, rest = "@", rest[1:]
        hydrogens = 0
        if rest.startswith("H"):
            rest = rest[1:]
            k = 0
            while k < len(rest) and rest[k].isdigit():
                k += 1
            hydrogens = int(rest[:k]) if k else 1
            rest = rest[k:]
        charge = 0
        if rest[:1] in ("+", "-"):
            sign = 1 if rest[0] == "+" else -1
            k = 1
            while k < len(rest) and rest[k] == rest[0]:
                k += 1
            if k > 1:
                charge = sign * k
                rest = rest[k:]
            else:
                m = 1
                while m < len(rest) and rest[m].isdigit():
                    m += 1
                charge = sign * (int(rest[1:m]) if m > 1 else 1)
                rest = rest[m:]
        if rest.startswith(":"):
            if not rest[1:].isdigit():
                raise self.error(f"bad atom class in [{body}]")
            rest = ""
        if rest:
            raise self.error(f"unparsed text {rest!r} in [{body}]")
        atom = _Atom(symbol, aromatic, True, isotope, charge, hydrogens, chirality)
        if hydrogens:
            atom.order.append(H_TOKEN)
        return atom


def _bridge_set(n: int, pairs: list[tuple[int, int]]) -> set[int]:
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for bi, (a, b) in enumerate(pairs):
        adj[a].append((b, bi))
        adj[b].append((a, bi))
    disc = [-1] * n
    low = [0] * n
    out: set[int] = set()
    t = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = t
        t += 1
        stack = [(root, -1, iter(adj[root]))]
        while stack:
            v, pb, it = stack[-1]
            for w, bi in it:
                if bi == pb:
                    continue
                if disc[w] == -1:
                    disc[w] = low[w] = t
                    t += 1
                    stack.append((w, bi, iter(adj[w])))
                    break
                low[v] = min(low[v], disc[w])
            else:
                stack.pop()
                if stack:
                    u = stack[-1][0]
                    low[u] = min(low[u], low[v])
                    if low[v] > disc[u]:
                        out.add(pb)
    return out


def parse_smiles(text: str) -> MolGraph:
    """Parse a SMILES string into a :class:`MolGraph`.

    Raises
    ------
    SmilesSyntaxError
        Malformed text.
    ValenceError
        A hypervalent atom, including aromatic systems that cannot be
        kekulized (``KekulizeError``).
    """
    if not isinstance(text, str):
        raise TypeError("SMILES must be a string")
    p = _Parser(text.strip())
    p.parse()
    return _build(p)


def _build(p: _Parser) -> MolGraph:
    raw_atoms = p.atoms
    raw_bonds = p.bonds

    # fold plain [H] atoms into their heavy neighbour
    deg = [0] * len(raw_atoms)
    for b in raw_bonds:
        deg[b.a] += 1
        deg[b.b] += 1
    merged: dict[int, int] = {}
    for b in raw_bonds:
        for h, other in ((b.a, b.b), (b.b, b.a)):
            ah = raw_atoms[h]
            if (ah.element == "H" and ah.bracket and ah.isotope is None and ah.charge == 0
                    and ah.hydrogens == 0 and deg[h] == 1 and raw_atoms[other].element != "H"
                    and b.char in (None, "-")):
                merged[h] = other
    index: dict[int, int] = {}
    for i in range(len(raw_atoms)):
        if i not in merged:
            index[i] = len(index)
    for h, heavy in merged.items():
        raw_atoms[heavy].hydrogens += 1
        raw_atoms[heavy].order = [H_TOKEN if x == h else x for x in raw_atoms[heavy].order]
    bonds_kept = [b for b in raw_bonds if b.a not in merged and b.b not in merged]

    n = len(index)
    pairs = [(index[b.a], index[b.b]) for b in bonds_kept]
    seen_pairs: set[tuple[int, int]] = set()
    for a, b in pairs:
        key = (min(a, b), max(a, b))
        if key in seen_pairs:
            raise SmilesSyntaxError(f"duplicate bond between atoms {a} and {b}")
        seen_pairs.add(key)
    bridges = _bridge_set(n, pairs)

    atoms_by_new = [raw_atoms[old] for old in index]
    orders: list[BondOrder] = []
    for bi, b in enumerate(bonds_kept):
        aa, ab = raw_atoms[b.a], raw_atoms[b.b]
        if b.char is None:
            order = BondOrder.AROMATIC if aa.aromatic and ab.aromatic else BondOrder.SINGLE
        else:
            order = _BOND_CHARS[b.char]
        if order is BondOrder.AROMATIC and bi in bridges:
            # a bond outside any ring cannot be aromatic
            order = BondOrder.SINGLE
        if order is BondOrder.AROMATIC and not (aa.aromatic and ab.aromatic):
            raise SmilesSyntaxError("aromatic bond between non-aromatic atoms")
        orders.append(order)

    # hydrogens of organic-subset atoms
    bond_sum = [0] * n
    for (a, b), order in zip(pairs, orders):
        bond_sum[a] += order.valence
        bond_sum[b] += order.valence
    hcount = []
    for i, at in enumerate(atoms_by_new):
        if at.bracket:
            hcount.append(at.hydrogens)
        else:
            hcount.append(at.hydrogens + default_hydrogens(at.element, at.aromatic, bond_sum[i]))

    records = [AtomRecord(at.element, at.charge, hcount[i], at.aromatic, at.isotope, None)
               for i, at in enumerate(atoms_by_new)]
    brecs = [BondRecord(a, b, o) for (a, b), o in zip(pairs, orders)]
    raw = MolGraph(records, brecs, validate=False)
    kek = list(kekulize(raw))
    records, kek = _cleanup_nitro(raw, records, kek)

    # aromaticity from the Kekule form
    plain = MolGraph([replace(r, aromatic=False) for r in records],
                     [BondRecord(b.begin, b.end, BondOrder(kek[bi])) for bi, b in enumerate(brecs)],
                     kekule=kek, validate=False)
    atom_arom, bond_arom = perceive(plain)
    final_bonds = []
    loose_doubles = []
    for bi, b in enumerate(brecs):
        if bond_arom[bi]:
            order = BondOrder.AROMATIC
        else:
            order = BondOrder(kek[bi])
            if order is BondOrder.DOUBLE and atom_arom[b.begin] and atom_arom[b.end]:
                loose_doubles.append(bi)
        final_bonds.append(BondRecord(b.begin, b.end, order))
    final_atoms = [replace(r, aromatic=atom_arom[i]) for i, r in enumerate(records)]
    final_kek = None
    if loose_doubles:
        # prefer a Kekule form that keeps non-aromatic fusion bonds single
        trial = list(final_bonds)
        for bi in loose_doubles:
            trial[bi] = replace(trial[bi], order=BondOrder.SINGLE)
        try:
            final_kek = kekulize(MolGraph(final_atoms, trial, validate=False))
            final_bonds = trial
        except KekulizeError:
            final_kek = None
    if final_kek is None:
        final_kek = tuple(
            kek[bi] if final_bonds[bi].order is BondOrder.AROMATIC else final_bonds[bi].order.valence
            for bi in range(len(final_bonds))
        )

    # stereo: tetrahedral tags relative to the reference neighbour order
    final_atoms = _assign_chirality(atoms_by_new, index, final_atoms, final_bonds, final_kek)
    final_bonds = _assign_double_bond_stereo(p, bonds_kept, index, final_bonds, final_kek)
    mol = MolGraph(final_atoms, final_bonds, kekule=final_kek)
    from .stereo import clean_stereo

    return clean_stereo(mol)


def _cleanup_nitro(raw: MolGraph, records, kek):
    """Rewrite pentavalent N(=O)=O style groups in charge-separated form."""
    records = list(records)
    for i, at in enumerate(records):
        if at.element != "N" or at.charge != 0 or at.aromatic:
            continue
        val = sum(kek[bi] for _, bi in raw.neighbors(i)) + at.hydrogens
        if val != 5:
            continue
        for w, bi in raw.neighbors(i):
            if kek[bi] == 2 and records[w].element == "O" and records[w].charge == 0 and raw.degree(w) == 1:
                kek[bi] = 1
                records[i] = replace(at, charge=1)
                records[w] = replace(records[w], charge=-1)
                break
    return records, kek


def _assign_chirality(parsed, index, atoms, bonds, kek):
    out = list(atoms)
    probe = MolGraph(atoms, bonds, kekule=kek, validate=False)
    for new, at in enumerate(parsed):
        if at.chirality is None:
            continue
        written = []
        for x in at.order:
            if x == H_TOKEN:
                written.append(H_TOKEN)
            elif isinstance(x, tuple):
                written = None
                break
            elif x in index:
                written.append(index[x])
        if written is None:
            continue
        if len(written) == 3 and H_TOKEN not in written:
            written.insert(1 if at.has_prev else 0, H_TOKEN)
        if len(written) != 4 or written.count(H_TOKEN) > 1:
            continue
        ref = probe.reference_neighbors(new)
        if sorted(ref, key=str) != sorted(written, key=str):
            continue
        tag = at.chirality
        if permutation_parity(written, ref):
            tag = flip_chirality(tag)
        out[new] = replace(out[new], chirality=tag)
    return out


def _assign_double_bond_stereo(p: _Parser, bonds_kept, index, bonds, kek):
    # direction of each marked single bond, seen from each of its ends
    marks: dict[tuple[int, int], bool] = {}
    for b in bonds_kept:
        if b.char not in ("/", "\\"):
            continue
        a, c = index[b.a], index[b.b]
        first = index[b.first]
        for centre, nbr in ((a, c), (c, a)):
            # "up" of nbr relative to centre
            if first == centre:
                up = b.char == "/"
            else:
                up = b.char == "\\"
            marks[(centre, nbr)] = up
    if not marks:
        return bonds
    out = list(bonds)
    nbrs: dict[int, list[int]] = {}
    for b in bonds:
        nbrs.setdefault(b.begin, []).append(b.end)
        nbrs.setdefault(b.end, []).append(b.begin)
    for bi, b in enumerate(bonds):
        if kek[bi] != 2 or b.order is BondOrder.AROMATIC:
            continue
        sides = []
        for centre, other in ((b.begin, b.end), (b.end, b.begin)):
            found = None
            for w in sorted(nbrs[centre]):
                if w != other and (centre, w) in marks:
                    found = (w, marks[(centre, w)])
                    break
            sides.append(found)
        if sides[0] is None or sides[1] is None:
            continue
        (na, ua), (nb, ub) = sides
        out[bi] = replace(b, stereo=(na, nb, "cis" if ua == ub else "trans"))
    return out


def try_parse(text: str) -> MolGraph | None:
    try:
        return parse_smiles(text)
    except (ValueError, KekulizeError):
        return None

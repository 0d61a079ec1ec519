"""Ring perception.

Ring membership comes from bridge detection. The ring set is a symmetrized
smallest set of smallest rings: a minimum cycle basis plus every other
relevant cycle (one that is not a GF(2) sum of strictly shorter cycles) no
longer than the largest basis ring. For ordinary organic molecules this is
the familiar SSSR with symmetric alternatives (e.g. all six cubane faces).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .graph import MolGraph

_MAX_PATHS = 64


@dataclass(frozen=True)
class Ring:
    atoms: tuple[int, ...]  # cyclic order
    bonds: frozenset[int]

    def __len__(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True)
class RingInfo:
    atom_in_ring: tuple[bool, ...]
    bond_in_ring: tuple[bool, ...]
    rings: tuple[Ring, ...]
    basis_size: int

    @classmethod
    def from_graph(cls, mol: "MolGraph") -> "RingInfo":
        # Depends only on topology; graphs rebuilt with new orders or flags share it.
        return _ring_info(mol.num_atoms, tuple((b.begin, b.end) for b in mol.bonds))

    @classmethod
    def _compute(cls, mol: "MolGraph") -> "RingInfo":
        n = mol.num_atoms
        bridges = _bridges(mol)
        bond_in_ring = tuple(bi not in bridges for bi in range(len(mol.bonds)))
        atom_in_ring = [False] * n
        for bi, b in enumerate(mol.bonds):
            if bond_in_ring[bi]:
                atom_in_ring[b.begin] = atom_in_ring[b.end] = True
        rings, basis = _symmetrized_sssr(mol, bond_in_ring)
        return cls(tuple(atom_in_ring), bond_in_ring, tuple(rings), basis)

    def atom_ring_count(self, idx: int) -> int:
        return sum(1 for r in self.rings if idx in r.atoms)

    def rings_with_atom(self, idx: int) -> list[Ring]:
        return [r for r in self.rings if idx in r.atoms]

    def bond_ring_sizes(self, bi: int) -> list[int]:
        return [len(r) for r in self.rings if bi in r.bonds]


@lru_cache(maxsize=4096)
def _ring_info(n: int, edges: tuple[tuple[int, int], ...]) -> RingInfo:
    from .graph import AtomRecord, BondOrder, BondRecord, MolGraph

    skeleton = MolGraph([AtomRecord("C")] * n, [BondRecord(a, b, BondOrder.SINGLE) for a, b in edges], validate=False)
    return RingInfo._compute(skeleton)


def _bridges(mol: "MolGraph") -> set[int]:
    n = mol.num_atoms
    disc = [-1] * n
    low = [0] * n
    bridges: set[int] = set()
    t = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = t
        t += 1
        stack = [(root, -1, iter(mol.neighbors(root)))]
        while stack:
            v, parent_bond, it = stack[-1]
            advanced = False
            for w, bi in it:
                if bi == parent_bond:
                    continue
                if disc[w] == -1:
                    disc[w] = low[w] = t
                    t += 1
                    stack.append((w, bi, iter(mol.neighbors(w))))
                    advanced = True
                    break
                low[v] = min(low[v], disc[w])
            if advanced:
                continue
            stack.pop()
            if stack:
                u = stack[-1][0]
                low[u] = min(low[u], low[v])
                if low[v] > disc[u]:
                    bridges.add(parent_bond)
    return bridges


def _bfs_paths(adj, src: int, dst: int, banned_bond: int | None = None) -> list[list[int]]:
    """All shortest src->dst paths as bond-index lists (capped)."""
    dist = {src: 0}
    preds: dict[int, list[tuple[int, int]]] = {src: []}
    q = deque([src])
    while q:
        v = q.popleft()
        if v == dst:
            break
        for w, bi in adj[v]:
            if bi == banned_bond:
                continue
            if w not in dist:
                dist[w] = dist[v] + 1
                preds[w] = [(v, bi)]
                q.append(w)
            elif dist[w] == dist[v] + 1:
                preds[w].append((v, bi))
    if dst not in dist:
        return []
    out: list[list[int]] = []

    def walk(node: int, acc: list[int]) -> None:
        if len(out) >= _MAX_PATHS:
            return
        if node == src:
            out.append(acc[::-1])
            return
        for p, bi in preds[node]:
            acc.append(bi)
            walk(p, acc)
            acc.pop()

    walk(dst, [])
    return out


def _shortest_tree(adj, root: int):
    dist = {root: 0}
    parent: dict[int, tuple[int, int]] = {}
    q = deque([root])
    while q:
        v = q.popleft()
        for w, bi in adj[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                parent[w] = (v, bi)
                q.append(w)
    return dist, parent


def _path_to_root(parent, v: int) -> list[int]:
    bonds = []
    while v in parent:
        p, bi = parent[v]
        bonds.append(bi)
        v = p
    return bonds


def _reduce(vec: int, basis: dict[int, int]) -> int:
    while vec:
        top = vec.bit_length() - 1
        row = basis.get(top)
        if row is None:
            return vec
        vec ^= row
    return 0


def _symmetrized_sssr(mol: "MolGraph", bond_in_ring: tuple[bool, ...]):
    n = mol.num_atoms
    adj = [[(w, bi) for w, bi in mol.neighbors(v) if bond_in_ring[bi]] for v in range(n)]
    ring_atoms = [v for v in range(n) if adj[v]]
    if not ring_atoms:
        return [], 0
    ring_bonds = [bi for bi, r in enumerate(bond_in_ring) if r]

    # components of the ring subgraph, for the cyclomatic number
    comp = {}
    for v in ring_atoms:
        if v in comp:
            continue
        comp[v] = v
        stack = [v]
        while stack:
            u = stack.pop()
            for w, _ in adj[u]:
                if w not in comp:
                    comp[w] = v
                    stack.append(w)
    n_comp = len(set(comp.values()))
    target = len(ring_bonds) - len(ring_atoms) + n_comp

    candidates: set[int] = set()
    # shortest cycles through each ring bond
    for bi in ring_bonds:
        b = mol.bonds[bi]
        for path in _bfs_paths(adj, b.begin, b.end, banned_bond=bi):
            vec = 1 << bi
            for pb in path:
                vec |= 1 << pb
            candidates.add(vec)
    # Horton candidates: root + shortest paths to both ends of an edge
    for r in ring_atoms:
        dist, parent = _shortest_tree(adj, r)
        for bi in ring_bonds:
            b = mol.bonds[bi]
            x, y = b.begin, b.end
            if x not in dist or y not in dist:
                continue
            px = _path_to_root(parent, x)
            py = _path_to_root(parent, y)
            if bi in px or bi in py:
                continue
            if set(px) & set(py):
                continue
            vec = 1 << bi
            for pb in px + py:
                vec |= 1 << pb
            candidates.add(vec)

    cand = sorted(candidates, key=lambda v: (bin(v).count("1"), v))
    # minimum cycle basis by greedy GF(2) elimination
    basis: dict[int, int] = {}
    chosen: list[int] = []
    for vec in cand:
        red = _reduce(vec, basis)
        if red:
            basis[red.bit_length() - 1] = red
            chosen.append(vec)
            if len(chosen) == target:
                break
    max_len = max(bin(v).count("1") for v in chosen)

    # relevant cycles: independent of all strictly shorter candidates
    rings: list[int] = []
    shorter: dict[int, int] = {}
    by_len: dict[int, list[int]] = {}
    for vec in cand:
        by_len.setdefault(bin(vec).count("1"), []).append(vec)
    for length in sorted(by_len):
        if length > max_len:
            break
        group = by_len[length]
        for vec in group:
            if _reduce(vec, shorter):
                rings.append(vec)
        for vec in group:
            red = _reduce(vec, shorter)
            if red:
                shorter[red.bit_length() - 1] = red

    out = []
    for vec in rings:
        bonds = frozenset(bi for bi in ring_bonds if vec >> bi & 1)
        out.append(Ring(_cycle_order(mol, bonds), bonds))
    out.sort(key=lambda r: (len(r.atoms), sorted(r.atoms)))
    return out, target


def _cycle_order(mol: "MolGraph", bonds: frozenset[int]) -> tuple[int, ...]:
    nbrs: dict[int, list[int]] = {}
    for bi in bonds:
        b = mol.bonds[bi]
        nbrs.setdefault(b.begin, []).append(b.end)
        nbrs.setdefault(b.end, []).append(b.begin)
    start = min(nbrs)
    order = [start]
    prev, cur = None, start
    while True:
        nxt = [w for w in nbrs[cur] if w != prev]
        if not nxt:
            break
        nxt_atom = min(nxt) if prev is None else nxt[0]
        if nxt_atom == start:
            break
        order.append(nxt_atom)
        prev, cur = cur, nxt_atom
        if len(order) > len(bonds):
            break
    return tuple(order)

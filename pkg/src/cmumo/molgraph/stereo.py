"""Removal of stereo marks that do not describe a stereogenic element."""

from __future__ import annotations

from dataclasses import replace

from .graph import H_TOKEN, MolGraph

_LONE_PAIR_CENTRES = {"P", "S", "Se"}
_TETRAHEDRAL_ELEMENTS = {"B", "C", "N", "Si", "P", "S", "Se", "Ge"}


def _tetrahedral_candidate(mol: MolGraph, i: int) -> bool:
    atom = mol.atoms[i]
    heavy = mol.degree(i)
    if atom.hydrogens > 1 or atom.element not in _TETRAHEDRAL_ELEMENTS:
        return False
    total = heavy + atom.hydrogens
    if total == 4:
        return True
    if total == 3:
        if atom.element in _LONE_PAIR_CENTRES:
            return atom.hydrogens == 0
        if atom.element == "N":
            return any(len(r) == 3 for r in mol.ring_info().rings_with_atom(i))
    return False


def _distinct_neighbours(mol: MolGraph, i: int, classes) -> bool:
    keys = [-1 if x == H_TOKEN else classes[x] for x in mol.reference_neighbors(i)]
    return len(set(keys)) == len(keys)


def clean_stereo(mol: MolGraph) -> MolGraph:
    """Drop chirality and double-bond marks on non-stereogenic elements.

    A tetrahedral centre survives when its neighbours are pairwise
    inequivalent, or when its only tie is between ring neighbours and another
    marked centre sits in one of its rings (relative ring configuration, as in
    1,4-disubstituted cyclohexanes). Double-bond marks survive when neither
    end carries two equivalent substituents and the bond is not in a ring of
    fewer than eight atoms.
    """
    while True:
        cleaned = _clean_once(mol)
        if cleaned is mol:
            return mol
        mol = cleaned


def _clean_once(mol: MolGraph) -> MolGraph:
    has_tet = any(a.chirality for a in mol.atoms)
    has_db = any(b.stereo for b in mol.bonds)
    if not (has_tet or has_db):
        return mol
    classes = mol.stereo_classes()
    info = mol.ring_info()
    atoms = list(mol.atoms)
    bonds = list(mol.bonds)
    changed = False

    if has_tet:
        candidates = {i for i, a in enumerate(atoms) if a.chirality and _tetrahedral_candidate(mol, i)}
        keep = set()
        for i in candidates:
            if _distinct_neighbours(mol, i, classes):
                keep.add(i)
                continue
            if not info.atom_in_ring[i]:
                continue
            for ring in info.rings_with_atom(i):
                if any(j != i and j in candidates for j in ring.atoms):
                    keep.add(i)
                    break
        for i, a in enumerate(atoms):
            if a.chirality and i not in keep:
                atoms[i] = replace(a, chirality=None)
                changed = True

    if has_db:
        for bi, b in enumerate(bonds):
            if b.stereo is None:
                continue
            ok = True
            sizes = info.bond_ring_sizes(bi)
            if sizes and min(sizes) < 8:
                ok = False
            for end, other in ((b.begin, b.end), (b.end, b.begin)):
                subs = [w for w, _ in mol.neighbors(end) if w != other]
                h = mol.atoms[end].hydrogens
                if not subs or len(subs) + h > 2:
                    ok = False
                elif len(subs) == 2 and classes[subs[0]] == classes[subs[1]]:
                    ok = False
            if not ok:
                bonds[bi] = replace(b, stereo=None)
                changed = True

    if not changed:
        return mol
    return MolGraph(atoms, bonds, kekule=mol.kekule_orders(), validate=False)

"""Simple molecular descriptors and the rule-of-five filter."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from . import elements

if TYPE_CHECKING:
    from .graph import MolGraph


@dataclass(frozen=True)
class Descriptors:
    molecular_weight: float
    hbd: int
    hba: int
    ring_count: int
    heavy_atom_count: int


def descriptors(mol: "MolGraph") -> Descriptors:
    """Average molecular weight (Da, hydrogens included), N/O donor and
    acceptor counts, ring count (smallest set) and heavy-atom count."""
    weight = 0.0
    hbd = hba = heavy = 0
    for a in mol.atoms:
        weight += elements.ELEMENTS[a.element].weight if a.isotope is None else float(a.isotope)
        weight += a.hydrogens * elements.HYDROGEN_WEIGHT
        if a.element != "H":
            heavy += 1
        if a.element in ("N", "O"):
            hba += 1
            if a.hydrogens:
                hbd += 1
    return Descriptors(
        molecular_weight=weight,
        hbd=hbd,
        hba=hba,
        ring_count=mol.ring_info().basis_size,
        heavy_atom_count=heavy,
    )


def lipinski_pass(mol: "MolGraph", logp: float) -> bool:
    """Rule of five with every bound inclusive. ``logp`` comes from ingested data."""
    d = descriptors(mol)
    return d.molecular_weight <= 500 and logp <= 5 and d.hbd <= 5 and d.hba <= 10


def rule_of_five(molecular_weight: float, logp: float, hbd: int, hba: int) -> bool:
    return molecular_weight <= 500 and logp <= 5 and hbd <= 5 and hba <= 10

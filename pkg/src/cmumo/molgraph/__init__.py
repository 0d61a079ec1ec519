"""Molecular graph kernel: SMILES I/O, canonical form, fingerprints, descriptors."""

from .graph import (
    AtomRecord,
    BondOrder,
    BondRecord,
    KekulizeError,
    MolGraph,
    MolGraphError,
    SmilesSyntaxError,
    ValenceError,
)
from .smiles import parse_smiles, try_parse
from .canon import CanonicalSmiles, canonical_smiles, canonicalize, random_smiles
from .fingerprint import Fingerprint, LengthMismatch, morgan_counts, morgan_fingerprint, tanimoto
from .descriptors import Descriptors, descriptors, lipinski_pass
from .sascore import FragmentScoreTable, FragmentTableError, sa_score

__all__ = [
    "AtomRecord", "BondOrder", "BondRecord", "CanonicalSmiles", "KekulizeError",
    "MolGraph", "MolGraphError", "SmilesSyntaxError", "ValenceError",
    "canonical_smiles", "canonicalize", "parse_smiles", "random_smiles", "try_parse",
    "Fingerprint", "LengthMismatch", "morgan_counts", "morgan_fingerprint", "tanimoto",
    "Descriptors", "descriptors", "lipinski_pass",
    "FragmentScoreTable", "FragmentTableError", "sa_score",
]

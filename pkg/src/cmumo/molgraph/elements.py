"""Element table used by the SMILES kernel.

Weights are conventional standard atomic weights. ``valences`` lists the
allowed total valences for a neutral atom; ``None`` means the element is not
valence-checked (metals) and never receives implicit hydrogens.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Element:
    symbol: str
    number: int
    weight: float
    valences: tuple[int, ...] | None
    outer_electrons: int

    @property
    def default_valence(self) -> int:
        return self.valences[0] if self.valences else -1


_TABLE = [
    ("H", 1, 1.008, (1,), 1),
    ("He", 2, 4.003, (0,), 2),
    ("Li", 3, 6.941, (1,), 1),
    ("Be", 4, 9.012, (2,), 2),
    ("B", 5, 10.812, (3,), 3),
    ("C", 6, 12.011, (4,), 4),
    ("N", 7, 14.007, (3,), 5),
    ("O", 8, 15.999, (2,), 6),
    ("F", 9, 18.998, (1,), 7),
    ("Ne", 10, 20.18, (0,), 8),
    ("Na", 11, 22.99, (1,), 1),
    ("Mg", 12, 24.305, (2,), 2),
    ("Al", 13, 26.982, (3,), 3),
    ("Si", 14, 28.086, (4,), 4),
    ("P", 15, 30.974, (3, 5), 5),
    ("S", 16, 32.067, (2, 4, 6), 6),
    ("Cl", 17, 35.453, (1,), 7),
    ("Ar", 18, 39.948, (0,), 8),
    ("K", 19, 39.098, (1,), 1),
    ("Ca", 20, 40.078, (2,), 2),
    ("Sc", 21, 44.956, None, 3),
    ("Ti", 22, 47.867, None, 4),
    ("V", 23, 50.944, None, 5),
    ("Cr", 24, 51.996, None, 6),
    ("Mn", 25, 54.938, None, 7),
    ("Fe", 26, 55.845, None, 8),
    ("Co", 27, 58.933, None, 9),
    ("Ni", 28, 58.693, None, 10),
    ("Cu", 29, 63.546, None, 11),
    ("Zn", 30, 65.39, None, 2),
    ("Ga", 31, 69.723, (3,), 3),
    ("Ge", 32, 72.61, (4,), 4),
    ("As", 33, 74.922, (3, 5), 5),
    ("Se", 34, 78.96, (2, 4, 6), 6),
    ("Br", 35, 79.904, (1,), 7),
    ("Kr", 36, 83.8, (0,), 8),
    ("Rb", 37, 85.468, (1,), 1),
    ("Sr", 38, 87.62, (2,), 2),
    ("Y", 39, 88.906, None, 3),
    ("Zr", 40, 91.224, None, 4),
    ("Nb", 41, 92.906, None, 5),
    ("Mo", 42, 95.94, None, 6),
    ("Tc", 43, 98.0, None, 7),
    ("Ru", 44, 101.07, None, 8),
    ("Rh", 45, 102.906, None, 9),
    ("Pd", 46, 106.42, None, 10),
    ("Ag", 47, 107.868, None, 11),
    ("Cd", 48, 112.412, None, 2),
    ("In", 49, 114.818, (3,), 3),
    ("Sn", 50, 118.711, (2, 4), 4),
    ("Sb", 51, 121.76, (3, 5), 5),
    ("Te", 52, 127.6, (2, 4, 6), 6),
    ("I", 53, 126.904, (1, 3, 5), 7),
    ("Xe", 54, 131.29, (0, 2, 4, 6), 8),
    ("Cs", 55, 132.905, (1,), 1),
    ("Ba", 56, 137.328, (2,), 2),
    ("La", 57, 138.906, None, 3),
    ("Ce", 58, 140.116, None, 4),
    ("Gd", 64, 157.25, None, 8),
    ("Hf", 72, 178.49, None, 4),
    ("Ta", 73, 180.948, None, 5),
    ("W", 74, 183.84, None, 6),
    ("Re", 75, 186.207, None, 7),
    ("Os", 76, 190.23, None, 8),
    ("Ir", 77, 192.217, None, 9),
    ("Pt", 78, 195.078, None, 10),
    ("Au", 79, 196.967, None, 11),
    ("Hg", 80, 200.59, None, 2),
    ("Tl", 81, 204.383, None, 3),
    ("Pb", 82, 207.2, (2, 4), 4),
    ("Bi", 83, 208.98, (3, 5), 5),
    ("Po", 84, 209.0, (2, 4, 6), 6),
    ("At", 85, 210.0, (1, 3, 5), 7),
    ("Rn", 86, 222.0, (0,), 8),
]

ELEMENTS: dict[str, Element] = {row[0]: Element(*row) for row in _TABLE}
BY_NUMBER: dict[int, Element] = {e.number: e for e in ELEMENTS.values()}

ORGANIC_SUBSET = frozenset({"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"})
AROMATIC_SYMBOLS = {
    "b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S",
    "se": "Se", "as": "As", "te": "Te", "si": "Si",
}
HYDROGEN_WEIGHT = ELEMENTS["H"].weight


def get(symbol: str) -> Element:
    return ELEMENTS[symbol]


def allowed_valences(symbol: str, charge: int) -> tuple[int, ...] | None:
    """Allowed total valences for ``symbol`` carrying ``charge``.

    Charged main-group atoms take the valences of their isoelectronic
    neighbour (N+ behaves like C, O- like F); charged carbon is trivalent.
    """
    elem = ELEMENTS[symbol]
    if elem.valences is None:
        return None
    if charge == 0:
        return elem.valences
    if symbol == "C":
        return (3,) if abs(charge) == 1 else None
    iso = BY_NUMBER.get(elem.number - charge)
    if iso is None or iso.valences is None:
        return None
    vals = tuple(v for v in iso.valences if v > 0)
    if not vals:
        # e.g. F+ or O-- land on a noble gas: nothing sensible to check
        return None
    return vals


def is_more_electronegative(a: int, b: int) -> bool:
    """Crude ordering by valence-shell electrons, then by period."""
    na = BY_NUMBER[a].outer_electrons
    nb = BY_NUMBER[b].outer_electrons
    if na != nb:
        return na > nb
    return a < b

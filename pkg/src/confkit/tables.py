"""Element data and the bundled radius / bond-length tables.

The radius tables live in ``confkit/data`` as whitespace-separated text files
(``symbol value`` per line, ``#`` starts a comment). The bond-length table has
four columns: two element symbols, a bond order (1, 2, 3 or 4 for aromatic)
and a length in angstrom.
"""

from __future__ import annotations

import functools
from importlib import resources

import numpy as np

AROMATIC = 4

# fmt: off
SYMBOLS = (
    "H", "He",
    "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar",
    "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I", "Xe",
)
# fmt: on
ATOMIC_NUMBERS = {symbol: z for z, symbol in enumerate(SYMBOLS, start=1)}
# deuterium / tritium labels occasionally appear in SDF atom blocks
ATOMIC_NUMBERS.update({"D": 1, "T": 1})

# multiple-bond shortening applied when a pair/order is not tabulated
_ORDER_SCALE = {1: 1.0, 2: 0.87, 3: 0.78, AROMATIC: 0.91}

TETRAHEDRAL = float(np.degrees(np.arccos(-1.0 / 3.0)))


class UnknownElementError(KeyError):
    """Raised when an element has no entry in a bundled table."""

    def __str__(self) -> str:
        return f"no tabulated data for element {self.args[0]!r}"


def atomic_number(symbol: str) -> int:
    try:
        return ATOMIC_NUMBERS[symbol]
    except KeyError:
        raise UnknownElementError(symbol) from None


def _read_table(name: str) -> list[list[str]]:
    text = resources.files("confkit").joinpath("data", name).read_text()
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    return rows


@functools.lru_cache(maxsize=None)
def covalent_radii() -> dict[str, float]:
    return {sym: float(val) for sym, val in _read_table("covalent_radii.txt")}


@functools.lru_cache(maxsize=None)
def vdw_radii() -> dict[str, float]:
    return {sym: float(val) for sym, val in _read_table("vdw_radii.txt")}


@functools.lru_cache(maxsize=None)
def _bond_table() -> dict[tuple[str, str, int], float]:
    table = {}
    for a, b, order, length in _read_table("bond_lengths.txt"):
        key = tuple(sorted((a, b)))
        table[(key[0], key[1], int(order))] = float(length)
    return table


def covalent_radius(symbol: str) -> float:
    try:
        return covalent_radii()[symbol]
    except KeyError:
        raise UnknownElementError(symbol) from None


def vdw_radius(symbol: str) -> float:
    try:
        return vdw_radii()[symbol]
    except KeyError:
        raise UnknownElementError(symbol) from None


def bond_length(a: str, b: str, order: int = 1) -> float:
    """Return the reference length (angstrom) of an ``a``-``b`` bond of ``order``."""
    x, y = sorted((a, b))
    table = _bond_table()
    if (x, y, order) in table:
        return table[(x, y, order)]
    scale = _ORDER_SCALE.get(order, 1.0)
    if (x, y, 1) in table:
        return table[(x, y, 1)] * scale
    return (covalent_radius(a) + covalent_radius(b)) * scale


def ideal_angle(bond_orders: list[int]) -> float:
    """Ideal bond angle (degrees) at an atom given the orders of its bonds.

    A valence-aware hybridization proxy: a triple bond or two cumulated double
    bonds give a linear centre, any double or aromatic bond gives a trigonal
    centre, and all-single centres are tetrahedral. For neutral carbon this is
    the same as the degree rule (4 -> sp3, 3 -> sp2, 2 -> sp); for O and N with
    lone pairs it stays tetrahedral, which the degree rule gets wrong.
    """
    n_double = sum(1 for o in bond_orders if o == 2)
    if any(o == 3 for o in bond_orders) or n_double >= 2:
        return 180.0
    if n_double or any(o == AROMATIC for o in bond_orders):
        return 120.0
    return TETRAHEDRAL

from __future__ import annotations

import pytest

from confkit.tables import (
    AROMATIC,
    TETRAHEDRAL,
    UnknownElementError,
    atomic_number,
    bond_length,
    covalent_radius,
    ideal_angle,
    vdw_radius,
)

ELEMENTS = ("H", "C", "N", "O", "F", "P", "S", "Cl", "Br")


@pytest.mark.parametrize("symbol", ELEMENTS)
def test_all_tabulated_elements_have_radii(symbol):
    assert 0.2 < covalent_radius(symbol) < 1.5
    assert 1.0 < vdw_radius(symbol) < 2.2


def test_reference_values():
    assert covalent_radius("C") == 0.76 and vdw_radius("C") == 1.70 and vdw_radius("H") == 1.20
    assert bond_length("C", "C") == 1.53 and bond_length("H", "C") == bond_length("C", "H")
    assert bond_length("O", "H") == 0.96


def test_bond_length_fallbacks():
    assert bond_length("Br", "P") == pytest.approx(covalent_radius("Br") + covalent_radius("P"))
    assert bond_length("C", "C", 2) < bond_length("C", "C", 1)
    assert bond_length("C", "C", AROMATIC) < bond_length("C", "C", 1)


def test_unknown_element():
    with pytest.raises(UnknownElementError):
        vdw_radius("Xe")
    with pytest.raises(UnknownElementError):
        atomic_number("Zz")
    assert atomic_number("D") == 1


def test_ideal_angles():
    assert ideal_angle([1, 1, 1, 1]) == TETRAHEDRAL
    assert ideal_angle([1, 1]) == TETRAHEDRAL
    assert ideal_angle([2, 1, 1]) == 120.0
    assert ideal_angle([AROMATIC, AROMATIC, 1]) == 120.0
    assert ideal_angle([3, 1]) == 180.0
    assert ideal_angle([2, 2]) == 180.0

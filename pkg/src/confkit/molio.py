"""Molecule / conformer data model and SDF (V2000) and XYZ input/output."""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
import functools
import math
from os import PathLike
from pathlib import Path

import numpy as np

from confkit.tables import AROMATIC, atomic_number

__all__ = [
    "AROMATIC",
    "Atom",
    "Bond",
    "Conformer",
    "Ensemble",
    "Molecule",
    "MolIOError",
    "Provenance",
    "SDFError",
    "XYZError",
    "parse_sdf",
    "parse_xyz",
    "perceive_rings",
    "read_sdf",
    "read_xyz",
    "write_sdf",
    "write_xyz",
]


class MolIOError(ValueError):
    """Base class for parse / serialization errors."""


class SDFError(MolIOError):
    """Malformed or unsupported SDF input, or unserializable SDF output."""


class XYZError(MolIOError):
    """Malformed XYZ input."""


class Provenance(str, Enum):
    UNIFORM = "uniform"
    GEOMETRIC = "geometric"
    ENERGY = "energy"
    EXTERNAL = "external"
    REFERENCE = "reference"


@dataclass(frozen=True)
class Atom:
    symbol: str
    atomic_number: int

    @property
    def is_heavy(self) -> bool:
        return self.atomic_number > 1


@dataclass(frozen=True)
class Bond:
    i: int
    j: int
    order: int = 1

    @property
    def key(self) -> tuple[int, int]:
        return (min(self.i, self.j), max(self.i, self.j))


@dataclass(frozen=True)
class Molecule:
    """Element-labelled molecular graph.

    Bonds are stored with ``i < j``. ``ring_membership`` has one flag per bond
    and is filled by :func:`perceive_rings` (the constructors in this module
    always call it).
    """

    id: str
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    ring_membership: tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.atoms)
        seen = set()
        canonical = []
        for bond in self.bonds:
            if not (0 <= bond.i < n and 0 <= bond.j < n):
                raise MolIOError(
                    f"bond ({bond.i}, {bond.j}) references an atom out of range 0..{n - 1}"
                )
            if bond.i == bond.j:
                raise MolIOError(f"bond joins atom {bond.i} to itself")
            if bond.order not in (1, 2, 3, AROMATIC):
                raise MolIOError(f"unsupported bond order {bond.order}")
            if bond.key in seen:
                raise MolIOError(f"duplicate bond {bond.key}")
            seen.add(bond.key)
            canonical.append(Bond(*bond.key, bond.order))
        object.__setattr__(self, "bonds", tuple(canonical))
        if self.ring_membership and len(self.ring_membership) != len(self.bonds):
            raise MolIOError("ring_membership must have one flag per bond")

    @classmethod
    def from_graph(
        cls,
        id: str,
        symbols: Sequence[str],
        bonds: Iterable[tuple[int, int] | tuple[int, int, int]],
    ) -> Molecule:
        """Build a molecule from element symbols and ``(i, j[, order])`` tuples."""
        atoms = tuple(Atom(s, atomic_number(s)) for s in symbols)
        bond_objs = tuple(Bond(*b) for b in bonds)
        return perceive_rings(cls(id, atoms, bond_objs))

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(a.symbol for a in self.atoms)

    @property
    def heavy_atom_count(self) -> int:
        return sum(a.is_heavy for a in self.atoms)

    @functools.cached_property
    def heavy_mask(self) -> np.ndarray:
        mask = np.array([a.is_heavy for a in self.atoms], dtype=bool)
        mask.flags.writeable = False
        return mask

    @functools.cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in self.atoms]
        for b in self.bonds:
            adj[b.i].append(b.j)
            adj[b.j].append(b.i)
        return tuple(tuple(sorted(a)) for a in adj)

    @functools.cached_property
    def bond_index(self) -> dict[tuple[int, int], int]:
        return {b.key: k for k, b in enumerate(self.bonds)}

    def bond_between(self, i: int, j: int) -> Bond | None:
        k = self.bond_index.get((min(i, j), max(i, j)))
        return None if k is None else self.bonds[k]

    def bond_orders_at(self, i: int) -> list[int]:
        return [self.bond_between(i, j).order for j in self.neighbors[i]]

    @functools.cached_property
    def topological_distances(self) -> np.ndarray:
        """All-pairs shortest path lengths in bonds (-1 for disconnected pairs)."""
        n = self.n_atoms
        dist = np.full((n, n), -1, dtype=int)
        for start in range(n):
            dist[start, start] = 0
            queue = deque([start])
            while queue:
                u = queue.popleft()
                for v in self.neighbors[u]:
                    if dist[start, v] < 0:
                        dist[start, v] = dist[start, u] + 1
                        queue.append(v)
        dist.flags.writeable = False
        return dist

    @property
    def is_connected(self) -> bool:
        return self.n_atoms > 0 and bool((self.topological_distances[0] >= 0).all())

    def is_ring_bond(self, i: int, j: int) -> bool:
        if not self.ring_membership:
            raise MolIOError("rings not perceived; call perceive_rings first")
        return self.ring_membership[self.bond_index[(min(i, j), max(i, j))]]


@dataclass(frozen=True, eq=False)
class Conformer:
    """One set of 3D coordinates (angstrom) for a molecule.

    ``flags`` carries sampler annotations such as ``"clash"`` or
    ``"not_converged"``; they never affect geometry.
    """

    molecule_id: str
    coords: np.ndarray
    energy: float | None = None
    provenance: Provenance = Provenance.EXTERNAL
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        coords = np.array(self.coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ValueError(f"coords must have shape (n, 3), got {coords.shape}")
        if not np.isfinite(coords).all():
            raise ValueError("coordinates must be finite")
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def n_atoms(self) -> int:
        return len(self.coords)

    def with_coords(self, coords: np.ndarray, **changes) -> Conformer:
        return replace(self, coords=coords, **changes)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Ordered conformers of one molecule, sharing an element sequence."""

    molecule_id: str
    symbols: tuple[str, ...]
    conformers: tuple[Conformer, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "symbols", tuple(self.symbols))
        object.__setattr__(self, "conformers", tuple(self.conformers))
        n = len(self.symbols)
        for conf in self.conformers:
            if conf.molecule_id != self.molecule_id:
                raise ValueError(
                    f"conformer of {conf.molecule_id!r} in ensemble of {self.molecule_id!r}"
                )
            if conf.n_atoms != n:
                raise ValueError(f"conformer has {conf.n_atoms} atoms, expected {n}")

    @classmethod
    def of(cls, molecule: Molecule, conformers: Iterable[Conformer] = ()) -> Ensemble:
        return cls(molecule.id, molecule.symbols, tuple(conformers))

    def __len__(self) -> int:
        return len(self.conformers)

    def __iter__(self) -> Iterator[Conformer]:
        return iter(self.conformers)

    def __getitem__(self, index: int) -> Conformer:
        return self.conformers[index]

    @property
    def n_atoms(self) -> int:
        return len(self.symbols)

    @property
    def heavy_mask(self) -> np.ndarray:
        return np.array([atomic_number(s) > 1 for s in self.symbols], dtype=bool)

    def coordinates(self) -> np.ndarray:
        """Stacked coordinates, shape ``(n_conformers, n_atoms, 3)``."""
        if not self.conformers:
            return np.zeros((0, self.n_atoms, 3))
        return np.stack([c.coords for c in self.conformers])

    def extend(self, conformers: Iterable[Conformer]) -> Ensemble:
        return replace(self, conformers=self.conformers + tuple(conformers))


def perceive_rings(molecule: Molecule) -> Molecule:
    """Flag every bond that lies on a cycle.

    A bond is a ring bond iff it is not a bridge of the bond graph. Bridges
    come from an iterative Tarjan low-link search.
    """
    n = molecule.n_atoms
    adj = molecule.neighbors
    order = [-1] * n
    low = [0] * n
    bridges = set()
    counter = 0
    for root in range(n):
        if order[root] >= 0:
            continue
        order[root] = low[root] = counter
        counter += 1
        # (vertex, parent, iterator over neighbours)
        stack = [(root, -1, iter(adj[root]))]
        while stack:
            u, parent, it = stack[-1]
            advanced = False
            for v in it:
                if v == parent:
                    continue
                if order[v] < 0:
                    order[v] = low[v] = counter
                    counter += 1
                    stack.append((v, u, iter(adj[v])))
                    advanced = True
                    break
                low[u] = min(low[u], order[v])
            if advanced:
                continue
            stack.pop()
            if parent >= 0:
                low[parent] = min(low[parent], low[u])
                if low[u] > order[parent]:
                    bridges.add((min(u, parent), max(u, parent)))
    flags = tuple(b.key not in bridges for b in molecule.bonds)
    return replace(molecule, ring_membership=flags)


# ---------------------------------------------------------------------------
# SDF V2000

_V2000_COORD_MAX = 99999.9999
_V2000_COORD_MIN = -9999.9999

ENERGY_TAG = "confkit.energy"
PROVENANCE_TAG = "confkit.provenance"
FLAGS_TAG = "confkit.flags"


def _as_text(data: bytes | str) -> str:
    if isinstance(data, bytes):
        return data.decode("utf-8", errors="replace")
    return data


def _split_records(text: str) -> list[list[str]]:
    records = []
    current: list[str] = []
    for line in text.splitlines():
        if line.startswith("$$$$"):
            records.append(current)
            current = []
        else:
            current.append(line.rstrip("\r"))
    if any(line.strip() for line in current):
        records.append(current)
    return records


def _parse_record(lines: list[str], index: int):
    where = f"record {index + 1}"
    if len(lines) < 4:
        raise SDFError(f"{where}: truncated header block")
    counts = lines[3]
    if "V3000" in counts:
        raise SDFError(f"{where}: unsupported V3000 marker")
    try:
        n_atoms = int(counts[0:3])
        n_bonds = int(counts[3:6])
    except ValueError:
        raise SDFError(f"{where}: malformed counts line {counts!r}") from None
    if n_atoms < 0 or n_bonds < 0:
        raise SDFError(f"{where}: malformed counts line {counts!r}")

    atom_lines = lines[4 : 4 + n_atoms]
    symbols = []
    coords = []
    for k, line in enumerate(atom_lines):
        try:
            xyz = [float(line[0:10]), float(line[10:20]), float(line[20:30])]
            symbol = line[31:34].strip()
            if not symbol or not symbol.isalpha():
                raise ValueError
        except ValueError:
            fields = line.split()
            if line.startswith("M  ") or (fields and all(f.lstrip("-").isdigit() for f in fields)):
                # block ended early: the counts line overstates the atoms
                raise SDFError(
                    f"{where}: malformed counts line: expected {n_atoms} atoms, "
                    f"atom line {k + 1} is {line!r}"
                ) from None
            raise SDFError(f"{where}: malformed atom line {k + 1}: {line!r}") from None
        symbols.append(symbol)
        coords.append(xyz)
    if len(atom_lines) < n_atoms:
        raise SDFError(f"{where}: malformed counts line: atom block truncated")

    bond_lines = lines[4 + n_atoms : 4 + n_atoms + n_bonds]
    bonds = []
    for k, line in enumerate(bond_lines):
        try:
            i, j, order = int(line[0:3]), int(line[3:6]), int(line[6:9])
        except ValueError:
            raise SDFError(
                f"{where}: malformed counts line: expected {n_bonds} bonds, "
                f"bond line {k + 1} is {line!r}"
            ) from None
        if not (1 <= i <= n_atoms and 1 <= j <= n_atoms):
            raise SDFError(f"{where}: bond atom index out of range in {line!r}")
        if order not in (1, 2, 3, AROMATIC):
            raise SDFError(f"{where}: unsupported bond order {order}")
        bonds.append((i - 1, j - 1, order))
    if len(bond_lines) < n_bonds:
        raise SDFError(f"{where}: malformed counts line: bond block truncated")

    data = {}
    rest = lines[4 + n_atoms + n_bonds :]
    for k, line in enumerate(rest):
        if line.startswith(">") and "<" in line and ">" in line[1:]:
            tag = line[line.index("<") + 1 : line.rindex(">")]
            value = rest[k + 1].strip() if k + 1 < len(rest) else ""
            data[tag] = value
    return lines[0].strip(), symbols, np.array(coords, dtype=float), bonds, data


def parse_sdf(data: bytes | str) -> tuple[Molecule, Ensemble]:
    """Parse a V2000 SD file holding conformers of one molecule.

    Every record must share the first record's elements and bond block. The
    molecule id is the first record's title line.

    Raises:
        SDFError: on malformed or inconsistent input.
    """
    records = _split_records(_as_text(data))
    if not records:
        raise SDFError("no records found")
    molecule = None
    first_graph = None
    conformers = []
    for index, lines in enumerate(records):
        title, symbols, coords, bonds, tags = _parse_record(lines, index)
        graph = (tuple(symbols), tuple(sorted((min(i, j), max(i, j), o) for i, j, o in bonds)))
        if molecule is None:
            try:
                molecule = Molecule.from_graph(title or "mol", symbols, bonds)
            except (MolIOError, KeyError) as exc:
                raise SDFError(f"record 1: {exc}") from None
            first_graph = graph
        elif graph != first_graph:
            raise SDFError(f"record {index + 1}: inconsistent connectivity across records")
        energy = None
        if ENERGY_TAG in tags:
            try:
                energy = float(tags[ENERGY_TAG])
            except ValueError:
                raise SDFError(f"record {index + 1}: bad energy field") from None
        flags = tuple(f for f in tags.get(FLAGS_TAG, "").split(",") if f)
        try:
            conformers.append(
                Conformer(molecule.id, coords, energy, Provenance.EXTERNAL, flags)
            )
        except ValueError as exc:
            raise SDFError(f"record {index + 1}: {exc}") from None
    return molecule, Ensemble.of(molecule, conformers)


def _fmt_coord(value: float) -> str:
    text = f"{value:10.4f}"
    if len(text) > 10 or not (_V2000_COORD_MIN <= round(value, 4) <= _V2000_COORD_MAX):
        raise SDFError(f"field overflow: coordinate {value} does not fit V2000 10.4 format")
    return text


def write_sdf(molecule: Molecule, ensemble: Ensemble) -> bytes:
    """Serialize ``ensemble`` as a multi-record V2000 SD file.

    Energies, provenance and flags are written as SD data items.
    """
    if len(ensemble) == 0:
        raise SDFError("cannot write an empty ensemble")
    if ensemble.symbols != molecule.symbols or ensemble.molecule_id != molecule.id:
        raise SDFError("ensemble/molecule mismatch")
    if molecule.n_atoms > 999 or len(molecule.bonds) > 999:
        raise SDFError("field overflow: V2000 counts line holds at most 999 atoms/bonds")
    out = []
    for conf in ensemble:
        out.append(molecule.id)
        out.append("  confkit          3D")
        out.append("")
        out.append(f"{molecule.n_atoms:3d}{len(molecule.bonds):3d}  0  0  0  0  0  0  0  0999 V2000")
        for atom, (x, y, z) in zip(molecule.atoms, conf.coords):
            out.append(
                f"{_fmt_coord(x)}{_fmt_coord(y)}{_fmt_coord(z)} {atom.symbol:<3}"
                " 0  0  0  0  0  0  0  0  0  0  0  0"
            )
        for bond in molecule.bonds:
            out.append(f"{bond.i + 1:3d}{bond.j + 1:3d}{bond.order:3d}  0")
        out.append("M  END")
        if conf.energy is not None:
            out += [f">  <{ENERGY_TAG}>", repr(float(conf.energy)), ""]
        out += [f">  <{PROVENANCE_TAG}>", conf.provenance.value, ""]
        if conf.flags:
            out += [f">  <{FLAGS_TAG}>", ",".join(conf.flags), ""]
        out.append("$$$$")
    return ("\n".join(out) + "\n").encode()


def read_sdf(path: str | PathLike) -> tuple[Molecule, Ensemble]:
    return parse_sdf(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# XYZ


def parse_xyz(data: bytes | str, molecule_id: str = "mol") -> Ensemble:
    """Parse a multi-frame XYZ file. No bonds are inferred.

    Raises:
        XYZError: on count mismatches or non-numeric fields.
    """
    lines = _as_text(data).splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    symbols = None
    conformers = []
    pos = 0
    while pos < len(lines):
        if not lines[pos].strip():
            pos += 1
            continue
        frame = len(conformers) + 1
        try:
            n = int(lines[pos].split()[0])
        except (ValueError, IndexError):
            raise XYZError(f"frame {frame}: bad atom-count line {lines[pos]!r}") from None
        rows = lines[pos + 2 : pos + 2 + n]
        if len(rows) < n:
            raise XYZError(f"frame {frame}: expected {n} atoms, file ends early")
        frame_symbols = []
        coords = []
        for row in rows:
            parts = row.split()
            if len(parts) < 4:
                raise XYZError(f"frame {frame}: bad atom line {row!r}")
            try:
                xyz = [float(v) for v in parts[1:4]]
            except ValueError:
                raise XYZError(f"frame {frame}: non-numeric coordinate in {row!r}") from None
            if not all(math.isfinite(v) for v in xyz):
                raise XYZError(f"frame {frame}: non-finite coordinate in {row!r}")
            frame_symbols.append(parts[0].capitalize())
            coords.append(xyz)
        if symbols is None:
            symbols = tuple(frame_symbols)
            for s in symbols:
                try:
                    atomic_number(s)
                except KeyError:
                    raise XYZError(f"frame {frame}: unknown element {s!r}") from None
        elif len(frame_symbols) != len(symbols):
            raise XYZError(
                f"frame {frame}: atom-count mismatch ({len(frame_symbols)} vs {len(symbols)})"
            )
        elif tuple(frame_symbols) != symbols:
            raise XYZError(f"frame {frame}: element sequence differs from frame 1")
        conformers.append(Conformer(molecule_id, np.array(coords), provenance=Provenance.EXTERNAL))
        pos += 2 + n
    if symbols is None:
        raise XYZError("no frames found")
    return Ensemble(molecule_id, symbols, tuple(conformers))


def write_xyz(ensemble: Ensemble) -> bytes:
    out = []
    for conf in ensemble:
        out.append(str(ensemble.n_atoms))
        out.append(ensemble.molecule_id if conf.energy is None else f"{ensemble.molecule_id} energy={conf.energy!r}")
        for s, (x, y, z) in zip(ensemble.symbols, conf.coords):
            out.append(f"{s:<2} {x:15.8f} {y:15.8f} {z:15.8f}")
    return ("\n".join(out) + "\n").encode()


def read_xyz(path: str | PathLike) -> Ensemble:
    path = Path(path)
    return parse_xyz(path.read_bytes(), molecule_id=path.stem)

"""Weighted Pauli strings and the spin-chain Hamiltonians built from them.

Sites are 0-based in the public API. Every builder returns an immutable,
deduplicated :class:`Hamiltonian`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import InvalidModelError

LETTERS = ("I", "X", "Y", "Z")

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# merged coefficients below this magnitude are dropped
MERGE_TOL = 1e-15


def _canonical_letters(letters: Mapping[int, str] | Iterable[tuple[int, str]], n: int):
    items = letters.items() if isinstance(letters, Mapping) else letters
    out = {}
    for site, letter in items:
        site = int(site)
        letter = str(letter).upper()
        if letter not in LETTERS:
            raise InvalidModelError(f"unknown Pauli letter {letter!r}")
        if not 0 <= site < n:
            raise InvalidModelError(f"site {site} outside 0..{n - 1}")
        if site in out:
            raise InvalidModelError(f"site {site} appears twice in one term")
        if letter != "I":
            out[site] = letter
    return tuple(sorted(out.items()))


@dataclass(frozen=True)
class PauliTerm:
    coefficient: float
    letters: tuple[tuple[int, str], ...]
    n: int

    @classmethod
    def make(cls, coefficient: float, letters, n: int) -> "PauliTerm":
        coefficient = float(coefficient)
        if not math.isfinite(coefficient):
            raise InvalidModelError("term coefficient must be finite")
        return cls(coefficient, _canonical_letters(letters, n), int(n))

    @property
    def label(self) -> str:
        return " ".join(f"{p}{s}" for s, p in self.letters)

    def masks(self) -> tuple[int, int, int]:
        """Return (x_mask, z_mask, y_count); site 0 is the most significant bit."""
        xm = zm = ny = 0
        for site, letter in self.letters:
            bit = 1 << (self.n - 1 - site)
            if letter in "XY":
                xm |= bit
            if letter in "ZY":
                zm |= bit
            if letter == "Y":
                ny += 1
        return xm, zm, ny

    def to_dense(self) -> np.ndarray:
        ops = dict(self.letters)
        mat = np.ones((1, 1), dtype=complex)
        for site in range(self.n):
            mat = np.kron(mat, PAULI_MATRICES[ops.get(site, "I")])
        return self.coefficient * mat


@dataclass(frozen=True)
class Hamiltonian:
    n: int
    terms: tuple[PauliTerm, ...]

    @classmethod
    def from_terms(cls, n: int, terms: Iterable) -> "Hamiltonian":
        """Build from ``(coefficient, letters)`` pairs or PauliTerms, merging duplicates."""
        if n < 1:
            raise InvalidModelError("need at least one site")
        merged: dict[tuple, float] = {}
        for item in terms:
            if isinstance(item, PauliTerm):
                if item.n != n:
                    raise InvalidModelError("term site count differs from Hamiltonian")
                coef, key = item.coefficient, item.letters
            else:
                coef, letters = item
                coef = float(coef)
                if not math.isfinite(coef):
                    raise InvalidModelError("term coefficient must be finite")
                key = _canonical_letters(letters, n)
            merged[key] = merged.get(key, 0.0) + coef
        out = tuple(
            PauliTerm(c, key, n) for key, c in merged.items() if abs(c) >= MERGE_TOL
        )
        return cls(n, out)

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: "Hamiltonian") -> "Hamiltonian":
        if other.n != self.n:
            raise InvalidModelError("cannot add Hamiltonians on different site counts")
        return Hamiltonian.from_terms(self.n, self.terms + other.terms)

    def scaled(self, factor: float) -> "Hamiltonian":
        return Hamiltonian.from_terms(
            self.n, ((t.coefficient * factor, t.letters) for t in self.terms)
        )

    def term_dict(self) -> dict:
        return {t.letters: t.coefficient for t in self.terms}

    def to_dense(self) -> np.ndarray:
        if self.n > 12:
            raise InvalidModelError("dense materialization is limited to n <= 12")
        dim = 2**self.n
        mat = np.zeros((dim, dim), dtype=complex)
        for t in self.terms:
            mat += t.to_dense()
        return mat

    def to_text(self) -> str:
        lines = [f"n={self.n}"]
        for t in self.terms:
            coef = format(t.coefficient, ".17g")
            lines.append(f"{coef} {t.label}".rstrip())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Hamiltonian":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("n="):
            raise InvalidModelError("missing 'n=<int>' header")
        n = int(lines[0][2:])
        terms = []
        for ln in lines[1:]:
            coef, *ops = ln.split()
            terms.append((float(coef), [(int(op[1:]), op[0]) for op in ops]))
        return cls.from_terms(n, terms)


def pauli_string(n: int, letters, coefficient: float = 1.0) -> Hamiltonian:
    """Single-term operator, handy for observables like string order."""
    return Hamiltonian.from_terms(n, [(coefficient, letters)])


def _bond_terms(i, j, cx, cy, cz):
    out = []
    for letter, c in (("X", cx), ("Y", cy), ("Z", cz)):
        out.append((c, {i: letter, j: letter}))
    return out


def build_xxz_chain(n: int, J1: float, J2: float, g: float, periodic: bool = True) -> Hamiltonian:
    """Spin-1/2 XXZ chain with a transverse field, S = sigma/2."""
    if n < 2:
        raise InvalidModelError("XXZ chain needs n >= 2")
    terms = []
    nbonds = n if periodic else n - 1
    for i in range(nbonds):
        terms += _bond_terms(i, (i + 1) % n, J1 / 4, J1 / 4, J2 / 4)
    terms += [(-g / 2, {i: "X"}) for i in range(n)]
    return Hamiltonian.from_terms(n, terms)


def build_cluster_chain(n: int, J: float, h1: float, h2: float) -> Hamiltonian:
    """Open cluster-Ising chain: -J ZXZ - h1 X - h2 XX."""
    if n < 3:
        raise InvalidModelError("cluster chain needs n >= 3")
    terms = [(-J, {i: "Z", i + 1: "X", i + 2: "Z"}) for i in range(n - 2)]
    terms += [(-h1, {i: "X"}) for i in range(n)]
    terms += [(-h2, {i: "X", i + 1: "X"}) for i in range(n - 1)]
    return Hamiltonian.from_terms(n, terms)


def build_bond_alternating_xxz(
    n: int, J1: float, J2: float, delta: float, j1_on_odd_bonds: bool = True
) -> Hamiltonian:
    """Open bond-alternating XXZ chain.

    Bonds are numbered b = 1..n-1 (bond b joins sites b and b+1 in 1-based
    labels). With ``j1_on_odd_bonds`` odd b carries J1 and even b carries J2;
    flipping the flag swaps the parity convention.
    """
    if n < 2 or n % 2:
        raise InvalidModelError("bond-alternating chain needs an even n >= 2")
    terms = []
    for k in range(n - 1):
        odd_bond = (k + 1) % 2 == 1
        J = J1 if odd_bond == j1_on_odd_bonds else J2
        terms += _bond_terms(k, k + 1, J, J, J * delta)
    return Hamiltonian.from_terms(n, terms)


def lattice_edges(na: int, nb: int, periodic: bool = False) -> list[tuple[int, int]]:
    """Nearest-neighbour pairs on an na x nb grid, row-major site labels."""
    edges = set()
    for r in range(na):
        for c in range(nb):
            s = r * nb + c
            if c + 1 < nb:
                edges.add((s, s + 1))
            elif periodic and nb > 2:
                edges.add((r * nb, s))
            if r + 1 < na:
                edges.add((s, s + nb))
            elif periodic and na > 2:
                edges.add((c, s))
    return sorted(edges)


def build_tfim_lattice(
    na: int, nb: int, W: float, J: float, F: float, periodic: bool = False
) -> Hamiltonian:
    """W sum Z + J sum_<ij> ZZ - (F/2) sum X on an na x nb grid."""
    n = na * nb
    if na < 1 or nb < 1:
        raise InvalidModelError("grid dimensions must be positive")
    terms = [(W, {i: "Z"}) for i in range(n)]
    terms += [(J, {i: "Z", j: "Z"}) for i, j in lattice_edges(na, nb, periodic)]
    terms += [(-F / 2, {i: "X"}) for i in range(n)]
    return Hamiltonian.from_terms(n, terms)

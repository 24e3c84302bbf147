"""Order-parameter observables used to label ground states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalConsistencyError
from .pauli import Hamiltonian
from .statevec import MAX_RDM_SITES, _n_from_dim, as_array, expectation, reduced_density_matrix


def magnetization_x(psi) -> float:
    """Per-site average of <X_i>."""
    vec = as_array(psi)
    n = _n_from_dim(vec.size)
    op = Hamiltonian.from_terms(n, [(1.0 / n, {i: "X"}) for i in range(n)])
    return expectation(vec, op)


def string_operator(n: int, i: int, j: int) -> Hamiltonian:
    """Z_i X_{i+1} X_{i+3} ... X_{j-1} Z_j (0-based sites).

    This is the product of cluster stabilizers Z X Z centred on i+1, i+3, ...,
    j-1, so j - i must be even and at least 2.
    """
    if not 0 <= i < j < n:
        raise ValueError(f"string endpoints ({i}, {j}) outside 0..{n - 1}")
    if (j - i) % 2 or j - i < 2:
        raise ValueError("string order needs j - i even and >= 2")
    letters = {i: "Z", j: "Z"}
    letters.update({k: "X" for k in range(i + 1, j, 2)})
    return Hamiltonian.from_terms(n, [(1.0, letters)])


def default_string_endpoints(n: int) -> tuple[int, int]:
    """Longest admissible string starting at site 0."""
    j = n - 1 if (n - 1) % 2 == 0 else n - 2
    return 0, j


def string_order(psi, i: int | None = None, j: int | None = None) -> float:
    vec = as_array(psi)
    n = _n_from_dim(vec.size)
    if i is None or j is None:
        i, j = default_string_endpoints(n)
    return expectation(vec, string_operator(n, i, j))


@dataclass(frozen=True)
class IntervalSpec:
    """Sites start..end inclusive; the first half is start..split-1."""

    start: int
    end: int
    split: int

    def __post_init__(self):
        length = self.end - self.start + 1
        if not self.start < self.split <= self.end:
            raise ValueError("need start < split <= end")
        if length % 2:
            raise ValueError("reflection interval must have even length")
        if length > MAX_RDM_SITES:
            raise ValueError(f"interval longer than {MAX_RDM_SITES} sites")

    @classmethod
    def centered(cls, n: int, length: int = 4) -> "IntervalSpec":
        start = (n - length) // 2
        return cls(start, start + length - 1, start + length // 2)

    @property
    def sites(self) -> list[int]:
        return list(range(self.start, self.end + 1))

    def reflected(self) -> "IntervalSpec":
        """Same interval with the two halves swapped (the mirror image)."""
        return IntervalSpec(self.start, self.end, self.start + self.end + 1 - self.split)


def _purity(rho: np.ndarray) -> float:
    return float(np.real(np.vdot(rho, rho)))


def partial_reflection_invariant(psi, interval: IntervalSpec) -> float:
    """Tr(rho_I R_I) / sqrt((Tr rho_I1^2 + Tr rho_I2^2) / 2)."""
    vec = as_array(psi)
    n = _n_from_dim(vec.size)
    if interval.end >= n:
        raise ValueError(f"interval {interval} does not fit in {n} sites")
    sites = interval.sites
    rho = reduced_density_matrix(vec, sites)
    k = len(sites)
    idx = np.arange(2**k)
    # reversing the site order reverses the bit order of the local index
    rev = np.zeros_like(idx)
    for b in range(k):
        rev |= ((idx >> b) & 1) << (k - 1 - b)
    overlap = complex(np.sum(rho[idx, rev]))
    if abs(overlap.imag) > 1e-8:
        raise NumericalConsistencyError(f"partial reflection has imaginary part {overlap.imag:.3e}")
    p1 = _purity(reduced_density_matrix(vec, sites[: interval.split - interval.start]))
    p2 = _purity(reduced_density_matrix(vec, sites[interval.split - interval.start :]))
    return overlap.real / np.sqrt((p1 + p2) / 2)


def label_encode(o: float, lo: float, hi: float) -> float:
    if lo >= hi:
        raise ValueError("label range needs lo < hi")
    return float(np.clip((o - lo) / (hi - lo), 0.0, 1.0))


def label_decode(b: float, lo: float, hi: float) -> float:
    if lo >= hi:
        raise ValueError("label range needs lo < hi")
    return lo + b * (hi - lo)

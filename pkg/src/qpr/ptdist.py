"""Distance between a state's output-probability spectrum and Porter-Thomas.

Probabilities are rescaled to u = 2^n p, under which the Porter-Thomas law is
the unit exponential. The distance is total variation between the binned
empirical distribution of u and the exponential's bin masses. Bins are uniform
on [0, u_max] with a fixed u_max (default 10), and everything above u_max
falls in one overflow bin compared against the exponential tail e^{-u_max}.
A fixed range keeps peaked spectra from collapsing into a single wide bin.
Passing ``u_max=None`` instead stretches the bins to max(10, max u), in which
case the overflow bin is always empty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .statevec import _n_from_dim, as_array

DEFAULT_BINS = 50
U_MAX = 10.0


@dataclass(frozen=True)
class SpectrumHistogram:
    """Masses of the regular bins plus ``overflow``, the mass above the last edge."""

    edges: np.ndarray
    masses: np.ndarray
    overflow: float
    n: int

    @property
    def bins(self) -> int:
        return self.masses.size

    def pt_masses(self) -> np.ndarray:
        return pt_bin_masses(self.edges)


def probability_spectrum(psi) -> np.ndarray:
    return np.abs(as_array(psi)) ** 2


def pt_density(u):
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("Porter-Thomas density is defined for u >= 0")
    out = np.exp(-u)
    return float(out) if out.ndim == 0 else out


def pt_bin_masses(edges) -> np.ndarray:
    """Integral of exp(-u) over each bin."""
    e = np.exp(-np.asarray(edges, dtype=float))
    return e[:-1] - e[1:]


def spectrum_histogram(psi, bins: int = DEFAULT_BINS, u_max: float | None = U_MAX) -> SpectrumHistogram:
    if bins < 10:
        raise ValueError("need at least 10 bins")
    p = probability_spectrum(psi)
    n = _n_from_dim(p.size)
    u = p * 2**n
    if u_max is None:
        u_max = max(U_MAX, float(u.max()))
    if u_max <= 0:
        raise ValueError("u_max must be positive")
    edges = np.linspace(0.0, u_max, bins + 1)
    inside = u <= u_max
    counts, _ = np.histogram(u[inside], bins=edges)
    # each basis state carries weight 2^-n in the distribution of u
    return SpectrumHistogram(edges, counts / p.size, float(np.count_nonzero(~inside)) / p.size, n)


def histogram_distance(masses, edges, overflow: float = 0.0) -> float:
    """(1/2) sum_b |m_b - PT_b| + (1/2) |overflow - PT tail|."""
    pt = pt_bin_masses(edges)
    tail = float(np.exp(-edges[-1]))
    return float(0.5 * np.abs(np.asarray(masses) - pt).sum() + 0.5 * abs(overflow - tail))


def pt_trace_distance(psi, bins: int = DEFAULT_BINS, u_max: float | None = U_MAX) -> float:
    h = spectrum_histogram(psi, bins, u_max)
    return histogram_distance(h.masses, h.edges, h.overflow)


def hardness_window_check(epsilon: float, n: int) -> bool:
    """True when epsilon <= 1/n (boundary included)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return bool(epsilon <= 1.0 / n)

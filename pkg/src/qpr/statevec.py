"""Matrix-free state-vector arithmetic and a Lanczos ground-state solver.

Basis ordering: index j has site 0 as its most significant bit, so the
bitstring ``format(j, f"0{n}b")`` reads site 0 first.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import (
    ConvergenceError,
    NumericalConsistencyError,
    ResourceError,
    SizeMismatchError,
)
from .pauli import Hamiltonian

MAX_SITES = 24
MAX_RDM_SITES = 12
NORM_TOL = 1e-10


def _n_from_dim(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 2 or 2**n != dim:
        raise SizeMismatchError(f"vector length {dim} is not a power of two >= 2")
    return n


class StateVector:
    """Normalized amplitude vector of an n-site register (read-only)."""

    __slots__ = ("_amps", "n")

    def __init__(self, amplitudes, normalize: bool = False):
        amps = np.array(amplitudes, dtype=complex).ravel()
        n = _n_from_dim(amps.size)
        norm = np.linalg.norm(amps)
        if normalize:
            if norm == 0:
                raise NumericalConsistencyError("cannot normalize the zero vector")
            amps = amps / norm
        elif abs(norm - 1.0) > NORM_TOL:
            raise NumericalConsistencyError(f"state norm {norm!r} differs from 1")
        amps.setflags(write=False)
        self._amps = amps
        self.n = n

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amps

    def __array__(self, dtype=None, copy=None):
        return self._amps if dtype is None else self._amps.astype(dtype)

    def __len__(self):
        return self._amps.size

    def __repr__(self):
        return f"StateVector(n={self.n})"

    def with_phase(self, phi: float) -> "StateVector":
        return StateVector(self._amps * np.exp(1j * phi))

    @classmethod
    def basis(cls, n: int, index: int) -> "StateVector":
        amps = np.zeros(2**n, dtype=complex)
        amps[index] = 1.0
        return cls(amps)

    @classmethod
    def zeros(cls, n: int) -> "StateVector":
        return cls.basis(n, 0)

    @classmethod
    def product(cls, single_site_states) -> "StateVector":
        amps = np.ones(1, dtype=complex)
        for s in single_site_states:
            amps = np.kron(amps, np.asarray(s, dtype=complex))
        return cls(amps, normalize=True)

    @classmethod
    def plus(cls, n: int) -> "StateVector":
        return cls(np.full(2**n, 2 ** (-n / 2), dtype=complex))

    @classmethod
    def random(cls, n: int, seed: int) -> "StateVector":
        rng = np.random.default_rng(seed)
        return cls(rng.normal(size=2**n) + 1j * rng.normal(size=2**n), normalize=True)


def as_array(v) -> np.ndarray:
    if isinstance(v, StateVector):
        return v.amplitudes
    return np.asarray(v, dtype=complex).ravel()


def _check_n(n: int, vec: np.ndarray):
    if vec.size != 2**n:
        raise SizeMismatchError(f"operator acts on {n} sites but vector has length {vec.size}")


@lru_cache(maxsize=16)
def compile_hamiltonian(H: Hamiltonian):
    """Group terms by bit-flip mask: H v = sum_x d_x * v[j ^ x]."""
    if H.n > MAX_SITES:
        raise ResourceError(f"n={H.n} exceeds the {MAX_SITES}-site ceiling")
    dim = 2**H.n
    j = np.arange(dim, dtype=np.int64)
    groups: dict[int, np.ndarray] = {}
    for term in H.terms:
        xm, zm, ny = term.masks()
        # (P v)[j] = i^ny (-1)^popcount((j^x) & z) v[j^x]
        sign = 1 - 2 * (np.bitwise_count((j ^ xm) & zm) & 1).astype(np.int8)
        diag = (term.coefficient * (1j**ny)) * sign
        if xm in groups:
            groups[xm] = groups[xm] + diag
        else:
            groups[xm] = diag.astype(complex)
    return tuple((xm, (j ^ xm) if xm else None, d) for xm, d in groups.items())


def apply_hamiltonian(H: Hamiltonian, v) -> np.ndarray:
    """Return H v without building a 2^n x 2^n matrix."""
    vec = as_array(v)
    _check_n(H.n, vec)
    out = np.zeros_like(vec)
    for _, idx, diag in compile_hamiltonian(H):
        out += diag * (vec if idx is None else vec[idx])
    return out


def expectation(psi, O: Hamiltonian) -> float:
    vec = as_array(psi)
    _check_n(O.n, vec)
    val = np.vdot(vec, apply_hamiltonian(O, vec))
    if abs(val.imag) > 1e-9:
        raise NumericalConsistencyError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def inner_product(a, b) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    va, vb = as_array(a), as_array(b)
    if va.size != vb.size:
        raise SizeMismatchError("states live on different site counts")
    return complex(np.vdot(va, vb))


@dataclass(frozen=True)
class GroundStateResult:
    energy: float
    state: StateVector
    iterations: int
    residual: float


def lanczos_ground_state(
    H: Hamiltonian,
    tol: float = 1e-10,
    max_iter: int = 500,
    seed: int = 0,
    krylov_dim: int | None = None,
    pin: float = 0.0,
) -> GroundStateResult:
    """Lowest eigenpair by Lanczos with full reorthogonalization.

    Convergence is declared when ``||H psi - E psi|| <= tol``; the energy is
    then accurate to roughly ``tol**2 / gap``. ``pin`` adds ``-pin * Z_0`` to
    select one member of a degenerate ground space. When the Krylov basis
    reaches ``krylov_dim`` the iteration restarts from the current Ritz vector.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = H.n
    if n > MAX_SITES:
        raise ResourceError(f"n={n} exceeds the {MAX_SITES}-site ceiling")
    if pin:
        H = H + Hamiltonian.from_terms(n, [(-pin, {0: "Z"})])
    dim = 2**n
    kmax = min(dim, krylov_dim or max_iter)

    rng = np.random.default_rng(seed)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    v /= np.linalg.norm(v)

    scale = max(sum(abs(t.coefficient) for t in H.terms), 1e-300)
    total = 0
    best = None
    while total < max_iter:
        V = np.empty((kmax, dim), dtype=complex)
        V[0] = v
        alphas, betas = [], []
        w = apply_hamiltonian(H, v)
        total += 1
        y = np.ones(1)
        for k in range(kmax):
            a = np.vdot(V[k], w).real
            alphas.append(a)
            w = w - a * V[k]
            if k:
                w = w - betas[-1] * V[k - 1]
            for _ in range(2):
                w = w - V[: k + 1].T @ (V[: k + 1].conj() @ w)
            b = np.linalg.norm(w)
            if k:
                evals, evecs = eigh_tridiagonal(
                    np.array(alphas), np.array(betas), select="i", select_range=(0, 0)
                )
                y = evecs[:, 0]
            else:
                y = np.ones(1)
            breakdown = b < 1e-13 * scale
            if breakdown or b * abs(y[-1]) <= 0.5 * tol or total >= max_iter or k == kmax - 1:
                break
            betas.append(b)
            V[k + 1] = w / b
            w = apply_hamiltonian(H, V[k + 1])
            total += 1
        psi = V[: len(y)].T @ y
        psi /= np.linalg.norm(psi)
        hpsi = apply_hamiltonian(H, psi)
        energy = float(np.vdot(psi, hpsi).real)
        residual = float(np.linalg.norm(hpsi - energy * psi))
        best = GroundStateResult(energy, StateVector(psi, normalize=True), total, residual)
        if residual <= tol:
            return best
        v = psi
    raise ConvergenceError(
        f"Lanczos did not reach residual {tol:g} in {max_iter} iterations "
        f"(best residual {best.residual:.3e})",
        best=best,
    )


def reduced_density_matrix(psi, sites) -> np.ndarray:
    """Partial trace onto ``sites``; the first listed site is the most significant bit."""
    vec = as_array(psi)
    n = _n_from_dim(vec.size)
    sites = [int(s) for s in sites]
    if len(sites) > MAX_RDM_SITES:
        raise ResourceError(f"RDM on {len(sites)} sites exceeds the {MAX_RDM_SITES}-site ceiling")
    if len(set(sites)) != len(sites) or any(not 0 <= s < n for s in sites):
        raise ValueError(f"invalid site list {sites} for n={n}")
    rest = [s for s in range(n) if s not in sites]
    m = vec.reshape((2,) * n).transpose(sites + rest).reshape(2 ** len(sites), -1)
    return m @ m.conj().T


def sample_computational_basis(psi, shots: int, seed: int) -> list[str]:
    if shots < 1:
        raise ValueError("shots must be >= 1")
    vec = as_array(psi)
    n = _n_from_dim(vec.size)
    probs = np.abs(vec) ** 2
    probs /= probs.sum()
    rng = np.random.default_rng(seed)
    draws = rng.choice(vec.size, size=shots, p=probs)
    return [format(int(j), f"0{n}b") for j in draws]


_MAGIC = b"QPRS"
_VERSION = 1
_HEADER = struct.Struct("<4sHH")


def save_state(psi, path) -> None:
    """Write header (magic, version, n) then little-endian complex128 amplitudes."""
    vec = as_array(psi)
    n = _n_from_dim(vec.size)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, n))
        fh.write(vec.astype("<c16").tobytes())
    tmp.replace(path)


def load_state(path) -> StateVector:
    data = Path(path).read_bytes()
    magic, version, n = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path}: not a qpr state file")
    amps = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    if amps.size != 2**n:
        raise ValueError(f"{path}: truncated state file")
    return StateVector(amps.astype(complex))

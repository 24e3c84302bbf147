"""Classical shadows from random single-qubit Pauli measurements, the shadow
and direct kernels, and kernel PCA with a nearest-centroid read-out."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SizeMismatchError
from .statevec import _n_from_dim, as_array

log = logging.getLogger(__name__)

LABELS = ("0", "1", "+", "-", "i+", "i-")
_S = 1 / np.sqrt(2)
# stabilizer states in label order; basis b (Z, X, Y) owns labels 2b and 2b+1
STABILIZER_STATES = np.array(
    [[1, 0], [0, 1], [_S, _S], [_S, -_S], [_S, 1j * _S], [_S, -1j * _S]], dtype=complex
)
BASIS_NAMES = ("Z", "X", "Y")
SHADOW_OPERATORS = np.array(
    [3 * np.outer(s, s.conj()) - np.eye(2) for s in STABILIZER_STATES]
)
# Tr(sigma_a sigma_b) = 9 |<a|b>|^2 - 4, which only takes the values 5, -4 and 1/2;
# snapping to those keeps every trace sum exact in floating point
TRACE_TABLE = np.round(2 * np.real(np.einsum("aij,bji->ab", SHADOW_OPERATORS, SHADOW_OPERATORS))) / 2


@dataclass(frozen=True)
class ShadowRecord:
    """``outcomes[t, i]`` is the label index (into LABELS) of qubit i in snapshot t."""

    n: int
    outcomes: np.ndarray
    seed: int = 0

    def __post_init__(self):
        out = np.asarray(self.outcomes, dtype=np.int8)
        if out.ndim != 2 or out.shape[1] != self.n:
            raise SizeMismatchError(f"outcomes must have shape (T, {self.n})")
        if out.size and (out.min() < 0 or out.max() > 5):
            raise ValueError("outcome labels must index the six stabilizer states")
        out.setflags(write=False)
        object.__setattr__(self, "outcomes", out)

    @property
    def T(self) -> int:
        return self.outcomes.shape[0]

    def to_text(self) -> str:
        lines = [f"n={self.n} T={self.T} seed={self.seed}"]
        lines += [" ".join(LABELS[k] for k in row) for row in self.outcomes]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ShadowRecord":
        lines = text.strip().splitlines()
        meta = dict(kv.split("=") for kv in lines[0].split())
        n = int(meta["n"])
        lookup = {lab: k for k, lab in enumerate(LABELS)}
        rows = [[lookup[x] for x in ln.split()] for ln in lines[1:]]
        return cls(n, np.array(rows, dtype=np.int8).reshape(-1, n), int(meta["seed"]))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "ShadowRecord":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class ShadowKernelParams:
    tau: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.tau <= 0 or self.gamma <= 0:
            raise ValueError("tau and gamma must be positive")


def _snapshot(vec: np.ndarray, n: int, bases: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Measure qubits 0..n-1 in turn, collapsing the state after each outcome."""
    labels = np.empty(n, dtype=np.int8)
    rest = vec
    for i in range(n):
        block = rest.reshape(2, -1)
        s0 = STABILIZER_STATES[2 * bases[i]]
        a0 = s0.conj() @ block
        p0 = float(np.real(np.vdot(a0, a0)))
        total = float(np.real(np.vdot(block, block)))
        if u[i] * total < p0:
            labels[i], rest = 2 * bases[i], a0
        else:
            labels[i] = 2 * bases[i] + 1
            rest = STABILIZER_STATES[2 * bases[i] + 1].conj() @ block
    return labels


def sample_shadows(psi, T: int, seed: int, bases=None) -> ShadowRecord:
    """T snapshots; snapshot t draws from its own stream seeded by (seed, t).

    ``bases`` optionally fixes the measurement bases (0=Z, 1=X, 2=Y), either
    one per qubit or a (T, n) array.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    vec = as_array(psi)
    n = _n_from_dim(vec.size)
    fixed = None if bases is None else np.broadcast_to(np.asarray(bases, dtype=int), (T, n))
    out = np.empty((T, n), dtype=np.int8)
    for t in range(T):
        rng = np.random.default_rng([int(seed), t])
        b = rng.integers(0, 3, size=n)
        u = rng.random(n)
        if fixed is not None:
            b = fixed[t]
        out[t] = _snapshot(vec, n, b, u)
    return ShadowRecord(n, out, int(seed))


def reconstruct_single_qubit(record: ShadowRecord, qubit: int) -> np.ndarray:
    """Average of 3|s><s| - I over snapshots for one qubit."""
    return SHADOW_OPERATORS[record.outcomes[:, qubit]].mean(axis=0)


def _one_hot(record: ShadowRecord) -> np.ndarray:
    T, n = record.outcomes.shape
    M = np.zeros((T, n * 6))
    M[np.repeat(np.arange(T), n), (np.arange(n) * 6 + record.outcomes).ravel()] = 1.0
    return M


def snapshot_trace_sums(s1: ShadowRecord, s2: ShadowRecord) -> np.ndarray:
    """Matrix over snapshot pairs of sum_i Tr(sigma_i^{t1} sigma_i^{t2})."""
    if s1.n != s2.n:
        raise SizeMismatchError("shadow records cover different qubit counts")
    block = np.kron(np.eye(s1.n), TRACE_TABLE)
    return _one_hot(s1) @ block @ _one_hot(s2).T


def shadow_kernel(s1: ShadowRecord, s2: ShadowRecord, p: ShadowKernelParams = ShadowKernelParams()) -> float:
    S = snapshot_trace_sums(s1, s2)
    # fsum is correctly rounded, so k(s1, s2) == k(s2, s1) bit for bit
    inner = math.fsum(np.exp((p.gamma / s1.n) * S).ravel())
    return float(np.exp(p.tau * inner / (s1.T * s2.T)))


def shadow_kernel_matrix(records, p: ShadowKernelParams = ShadowKernelParams()) -> np.ndarray:
    N = len(records)
    K = np.empty((N, N))
    for i in range(N):
        for j in range(i, N):
            K[i, j] = K[j, i] = shadow_kernel(records[i], records[j], p)
    return K


def direct_kernel(psi1, psi2, tau: float = 1.0) -> float:
    a, b = as_array(psi1), as_array(psi2)
    if a.size != b.size:
        raise SizeMismatchError("states live on different site counts")
    return float(np.exp(tau * abs(np.vdot(a, b)) ** 2))


@dataclass(frozen=True)
class PCAResult:
    coordinates: np.ndarray
    eigenvalues: np.ndarray
    complete: bool


def kernel_pca(K, components: int) -> PCAResult:
    """Project the double-centred kernel onto its leading eigenvectors.

    Coordinates are the centred kernel rows projected on v_k / sqrt(lambda_k),
    i.e. sqrt(lambda_k) v_k. Components whose eigenvalue is below 1e-10 are
    dropped and the result is flagged incomplete.
    """
    K = np.asarray(K, dtype=float)
    N = K.shape[0]
    if K.shape != (N, N):
        raise SizeMismatchError("kernel matrix must be square")
    if not np.allclose(K, K.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(K).max())):
        raise ValueError("kernel matrix must be symmetric")
    if not 1 <= components <= N:
        raise ValueError(f"components must lie in 1..{N}")
    J = np.eye(N) - 1.0 / N
    Kc = J @ ((K + K.T) / 2) @ J
    w, V = np.linalg.eigh(Kc)
    order = np.argsort(w)[::-1][:components]
    w, V = w[order], V[:, order]
    keep = w > 1e-10
    if not keep.all():
        log.warning("kernel PCA: only %d of %d components above 1e-10", keep.sum(), components)
    coords = Kc @ V[:, keep] / np.sqrt(w[keep])
    return PCAResult(coords, w[keep], bool(keep.all()))


def nearest_centroid_predict(train_x, train_y, test_x) -> np.ndarray:
    train_x, test_x = np.atleast_2d(train_x), np.atleast_2d(test_x)
    train_y = np.asarray(train_y)
    classes = np.unique(train_y)
    cents = np.array([train_x[train_y == c].mean(axis=0) for c in classes])
    d = ((test_x[:, None, :] - cents[None]) ** 2).sum(-1)
    return classes[np.argmin(d, axis=1)]


def leave_one_out_accuracy(x, y) -> float:
    """Nearest-centroid accuracy with each point held out of its own centroid."""
    x, y = np.atleast_2d(x), np.asarray(y)
    hits = 0
    for k in range(len(y)):
        mask = np.arange(len(y)) != k
        hits += nearest_centroid_predict(x[mask], y[mask], x[k : k + 1])[0] == y[k]
    return hits / len(y)

"""Fidelity quantum kernel, exact and shot-noise estimated.

The destructive SWAP test is simulated as its outcome distribution: each shot
is +1 with probability (1 + Q) / 2, so the shot mean is an unbiased estimate
of Q. Estimates are clamped to [0, 1]; diagonal entries are 1 by identity and
never measured.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SizeMismatchError
from .statevec import as_array

EXACT = "exact"
ESTIMATED = "estimated"


@dataclass(frozen=True)
class ShotPlan:
    total_budget: int
    per_entry: int
    delta: float

    @classmethod
    def exact(cls) -> "ShotPlan":
        return cls(0, 0, 0.0)


def shots_for(N: int, delta: float = 0.1, multiplier: float = 1.0) -> ShotPlan:
    """Spend ceil(multiplier * N^(5/2)) shots uniformly over the off-diagonal pairs."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if multiplier <= 0:
        raise ValueError("multiplier must be positive")
    # round before ceil so 10**2.5-style float noise does not add a shot
    total = math.ceil(round(multiplier * N**2.5, 9))
    pairs = max(1, N * (N - 1) // 2)
    return ShotPlan(total, max(1, total // pairs), delta)


def exact_kernel(psi1, psi2) -> float:
    a, b = as_array(psi1), as_array(psi2)
    if a.size != b.size:
        raise SizeMismatchError("states live on different site counts")
    return float(np.clip(abs(np.vdot(a, b)) ** 2, 0.0, 1.0))


def _estimate(q: float, shots: int, rng: np.random.Generator) -> float:
    plus = rng.binomial(shots, (1.0 + q) / 2.0)
    return float(np.clip((2 * plus - shots) / shots, 0.0, 1.0))


def swap_test_estimate(psi1, psi2, shots: int, seed: int) -> float:
    if shots < 1:
        raise ValueError("shots must be >= 1")
    return _estimate(exact_kernel(psi1, psi2), shots, np.random.default_rng(seed))


TRAIN_STREAM, TEST_STREAM = 0, 1


def entry_rng(*key: int) -> np.random.Generator:
    """Independent stream per kernel entry, seeded by an integer tuple.

    Training matrices use (seed, 0, i, j) and test rows (seed, 1, k, i), so
    no two entries of one run ever share a stream.
    """
    return np.random.default_rng([int(k) for k in key])


def _stack(states) -> np.ndarray:
    arrs = [as_array(s) for s in states]
    if not arrs:
        raise ValueError("need at least one state")
    if len({a.size for a in arrs}) != 1:
        raise SizeMismatchError("states live on different site counts")
    return np.vstack(arrs)


def fidelity_matrix(rows, cols) -> np.ndarray:
    """Exact |<r_i|c_j>|^2 for all pairs."""
    R, C = _stack(rows), _stack(cols)
    if R.shape[1] != C.shape[1]:
        raise SizeMismatchError("states live on different site counts")
    return np.clip(np.abs(R.conj() @ C.T) ** 2, 0.0, 1.0)


@dataclass(frozen=True)
class KernelMatrix:
    entries: np.ndarray
    mode: str
    shots_per_entry: int = 0
    n: int = 0
    seed: int = 0

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def to_csv(self, path) -> None:
        header = (
            f"# n={self.n} N={self.size} mode={self.mode} "
            f"shots={self.shots_per_entry} seed={self.seed}"
        )
        lines = [header] + [",".join(repr(float(x)) for x in row) for row in self.entries]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "KernelMatrix":
        text = Path(path).read_text().splitlines()
        meta = dict(kv.split("=") for kv in text[0].lstrip("# ").split())
        entries = np.array([[float(x) for x in ln.split(",")] for ln in text[1:] if ln])
        return cls(entries, meta["mode"], int(meta["shots"]), int(meta["n"]), int(meta["seed"]))


def build_kernel_matrix(states, mode: str = EXACT, plan: ShotPlan | None = None, seed: int = 0) -> KernelMatrix:
    S = _stack(states)
    n = int(S.shape[1]).bit_length() - 1
    Q = fidelity_matrix(S, S)
    N = Q.shape[0]
    if mode == EXACT:
        Q = (Q + Q.T) / 2
        np.fill_diagonal(Q, 1.0)
        return KernelMatrix(Q, EXACT, 0, n, seed)
    if mode != ESTIMATED:
        raise ValueError(f"unknown kernel mode {mode!r}")
    if plan is None:
        plan = shots_for(N)
    K = np.eye(N)
    for i in range(N):
        for j in range(i + 1, N):
            K[i, j] = K[j, i] = _estimate(Q[i, j], plan.per_entry, entry_rng(seed, TRAIN_STREAM, i, j))
    return KernelMatrix(K, ESTIMATED, plan.per_entry, n, seed)


def kernel_vector(train_states, test_state, mode: str = EXACT, plan: ShotPlan | None = None,
                  seed: int = 0, index: int = 0) -> np.ndarray:
    """Kernel values between one test state and every training state.

    ``index`` is the test point's position in its batch; it selects the same
    random streams ``kernel_rows`` would use for that row.
    """
    return kernel_rows(train_states, [test_state], mode, plan, seed, offset=index)[0]


def kernel_rows(train_states, test_states, mode: str = EXACT, plan: ShotPlan | None = None,
                seed: int = 0, offset: int = 0) -> np.ndarray:
    """Kernel rows (one per test state) against the training states."""
    Q = fidelity_matrix(test_states, train_states)
    if mode == EXACT:
        return Q
    if mode != ESTIMATED:
        raise ValueError(f"unknown kernel mode {mode!r}")
    if plan is None:
        plan = shots_for(Q.shape[1])
    out = np.empty_like(Q)
    for k in range(Q.shape[0]):
        for i in range(Q.shape[1]):
            rng = entry_rng(seed, TEST_STREAM, offset + k, i)
            out[k, i] = _estimate(Q[k, i], plan.per_entry, rng)
    return out

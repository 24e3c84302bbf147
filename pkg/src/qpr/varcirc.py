"""Brickwork circuits, Haar sampling, variational imaginary-time evolution and
ground-state tracking along a parameter path.

Each two-qubit gate is exp(-i sum_k theta_k P_k) over the 15 non-identity
Pauli pairs P_k = P_a (x) P_b, ordered lexicographically in (I, X, Y, Z).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import ResourceError, SizeMismatchError, StepFailure, TrackingDivergenceError
from .pauli import LETTERS, PAULI_MATRICES, Hamiltonian
from .statevec import StateVector, apply_hamiltonian, as_array

PAIR_LABELS = tuple(
    LETTERS[a] + LETTERS[b] for a in range(4) for b in range(4) if (a, b) != (0, 0)
)
GENERATORS = np.array(
    [np.kron(PAULI_MATRICES[p[0]], PAULI_MATRICES[p[1]]) for p in PAIR_LABELS]
)
PARAMS_PER_GATE = 15
MAX_VARIATIONAL_SITES = 10
MAX_DERIVATIVE_PARAMS = 200
FD_STEP = 1e-5


@dataclass(frozen=True)
class BrickworkArchitecture:
    n: int
    depth: int

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ValueError("brickwork needs an even number of sites >= 2")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")

    @property
    def placements(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per layer, the (s, s+1) pairs; layers alternate even and odd offsets."""
        layers = []
        for d in range(self.depth):
            start = d % 2
            layers.append(tuple((s, s + 1) for s in range(start, self.n - 1, 2)))
        return tuple(layers)

    @property
    def gate_sites(self) -> list[int]:
        """Left site of each gate in layer-major order."""
        return [s for layer in self.placements for s, _ in layer]

    @property
    def n_gates(self) -> int:
        return len(self.gate_sites)


def gate_unitary(theta) -> np.ndarray:
    """exp(-i sum_k theta_k P_k) via the eigendecomposition of the generator."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (PARAMS_PER_GATE,):
        raise ValueError(f"a gate takes exactly {PARAMS_PER_GATE} parameters")
    G = np.tensordot(theta, GENERATORS, axes=1)
    w, V = np.linalg.eigh(G)
    return (V * np.exp(-1j * w)) @ V.conj().T


def apply_two_site(vec: np.ndarray, U: np.ndarray, site: int, n: int) -> np.ndarray:
    psi = vec.reshape(2**site, 4, 2 ** (n - site - 2))
    return np.einsum("ab,ibj->iaj", U, psi).reshape(-1)


@dataclass(frozen=True)
class VariationalCircuit:
    arch: BrickworkArchitecture
    params: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.params, dtype=float).reshape(-1)
        if p.size != self.arch.n_gates * PARAMS_PER_GATE:
            raise ValueError(
                f"expected {self.arch.n_gates * PARAMS_PER_GATE} parameters, got {p.size}"
            )
        if self.arch.n > MAX_VARIATIONAL_SITES or self.arch.depth > 2 * self.arch.n:
            raise ResourceError("variational circuits are capped at n <= 10, depth <= 2n")
        p = p.reshape(self.arch.n_gates, PARAMS_PER_GATE)
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    @classmethod
    def zeros(cls, arch: BrickworkArchitecture) -> "VariationalCircuit":
        return cls(arch, np.zeros(arch.n_gates * PARAMS_PER_GATE))

    @classmethod
    def random(cls, arch: BrickworkArchitecture, seed: int, scale: float = 2 * np.pi) -> "VariationalCircuit":
        rng = np.random.default_rng(seed)
        return cls(arch, rng.uniform(0, scale, arch.n_gates * PARAMS_PER_GATE))

    @property
    def flat(self) -> np.ndarray:
        return self.params.reshape(-1).copy()

    @property
    def n_params(self) -> int:
        return self.params.size

    def with_flat(self, flat) -> "VariationalCircuit":
        return VariationalCircuit(self.arch, flat)

    def unitaries(self) -> list[np.ndarray]:
        return [gate_unitary(t) for t in self.params]

    def to_text(self) -> str:
        lines = [f"{self.arch.n},{self.arch.depth}"]
        lines += [" ".join(format(x, ".17g") for x in row) for row in self.params]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "VariationalCircuit":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        n, depth = (int(x) for x in lines[0].split(","))
        vals = [float(x) for ln in lines[1:] for x in ln.split()]
        return cls(BrickworkArchitecture(n, depth), vals)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


@dataclass(frozen=True)
class GateCircuit:
    """Brickwork circuit given directly by its 4x4 gates (e.g. Haar samples)."""

    arch: BrickworkArchitecture
    gates: tuple

    def unitaries(self) -> list[np.ndarray]:
        return list(self.gates)


def _initial(n: int, input_state) -> np.ndarray:
    if input_state is None:
        vec = np.zeros(2**n, dtype=complex)
        vec[0] = 1.0
        return vec
    vec = as_array(input_state).copy()
    if vec.size != 2**n:
        raise SizeMismatchError(f"circuit acts on {n} sites but input has length {vec.size}")
    return vec


def apply_circuit(c, input_state=None) -> StateVector:
    """U(theta) applied to ``input_state`` (default |0...0>)."""
    n = c.arch.n
    vec = _initial(n, input_state)
    for site, U in zip(c.arch.gate_sites, c.unitaries()):
        vec = apply_two_site(vec, U, site, n)
    return StateVector(vec, normalize=True)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary: QR of a complex Ginibre matrix with R's phases removed."""
    Z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))


def haar_random_circuit(arch: BrickworkArchitecture, seed: int) -> GateCircuit:
    rng = np.random.default_rng(seed)
    return GateCircuit(arch, tuple(haar_unitary(4, rng) for _ in range(arch.n_gates)))


def state_derivatives(c: VariationalCircuit, input_state=None, h: float = FD_STEP) -> np.ndarray:
    """Central finite-difference derivatives d|Psi>/d theta_k, one row per parameter."""
    if c.n_params > MAX_DERIVATIVE_PARAMS:
        raise ResourceError(f"{c.n_params} parameters exceed the {MAX_DERIVATIVE_PARAMS} ceiling")
    n = c.arch.n
    sites = c.arch.gate_sites
    gates = c.unitaries()
    prefix = [_initial(n, input_state)]
    for site, U in zip(sites, gates):
        prefix.append(apply_two_site(prefix[-1], U, site, n))

    out = np.empty((c.n_params, 2**n), dtype=complex)
    row = 0
    for g, site in enumerate(sites):
        theta = c.params[g]
        for k in range(PARAMS_PER_GATE):
            step = np.zeros(PARAMS_PER_GATE)
            step[k] = h
            # the circuit is linear in each gate, so differencing the gate suffices
            dU = (gate_unitary(theta + step) - gate_unitary(theta - step)) / (2 * h)
            vec = apply_two_site(prefix[g], dU, site, n)
            for s2, U2 in zip(sites[g + 1 :], gates[g + 1 :]):
                vec = apply_two_site(vec, U2, s2, n)
            out[row] = vec
            row += 1
    return out


def gram_matrix(D: np.ndarray) -> np.ndarray:
    """Re(<d_i Psi | d_j Psi>), symmetrized."""
    A = np.real(D.conj() @ D.T)
    return (A + A.T) / 2


def _check_psd(A: np.ndarray, name: str):
    lo = np.linalg.eigvalsh(A)[0] if A.size else 0.0
    if lo < -1e-9:
        raise StepFailure(f"{name} is not positive semidefinite (min eigenvalue {lo:.3e})",
                          {"min_eigenvalue": lo})


def _solve(A: np.ndarray, rhs: np.ndarray, ridge: float, name: str) -> np.ndarray:
    try:
        x = linalg.solve(A + ridge * np.eye(A.shape[0]), rhs, assume_a="sym")
    except linalg.LinAlgError as exc:
        raise StepFailure(f"{name} system is singular", {"ridge": ridge}) from exc
    if not np.all(np.isfinite(x)):
        raise StepFailure(f"{name} system produced non-finite values", {"ridge": ridge})
    return x


@dataclass(frozen=True)
class IteStep:
    circuit: VariationalCircuit
    energy: float
    d_beta: float
    accepted: bool


def _energy(c, H, input_state=None) -> float:
    v = apply_circuit(c, input_state).amplitudes
    return float(np.vdot(v, apply_hamiltonian(H, v)).real)


def ite_step(c: VariationalCircuit, H: Hamiltonian, d_beta: float, ridge: float = 1e-8,
             max_halvings: int = 5, input_state=None) -> IteStep:
    """One McLachlan step: solve (A + ridge I) theta_dot = -C and move by d_beta.

    If the energy rises by more than 1e-8 the step length is halved, up to
    ``max_halvings`` times; after that the step is returned unaccepted with the
    original parameters.
    """
    if d_beta <= 0:
        raise ValueError("d_beta must be positive")
    if H.n != c.arch.n:
        raise SizeMismatchError("Hamiltonian and circuit act on different site counts")
    psi = apply_circuit(c, input_state).amplitudes
    hpsi = apply_hamiltonian(H, psi)
    e0 = float(np.vdot(psi, hpsi).real)
    D = state_derivatives(c, input_state)
    A = gram_matrix(D)
    _check_psd(A, "A")
    C = np.real(D.conj() @ hpsi)
    theta_dot = _solve(A, -C, ridge, "A")
    theta = c.flat
    step = d_beta
    for _ in range(max_halvings + 1):
        trial = c.with_flat(theta + theta_dot * step)
        e1 = _energy(trial, H, input_state)
        if e1 <= e0 + 1e-8:
            return IteStep(trial, e1, step, True)
        step /= 2
    return IteStep(c, e0, step, False)


@dataclass(frozen=True)
class ItePath:
    beta_step: float
    steps: int
    energy_trace: tuple[float, ...]
    final: VariationalCircuit
    stalled: bool = False

    @property
    def final_params(self) -> np.ndarray:
        return self.final.flat


def run_ite(c: VariationalCircuit, H: Hamiltonian, beta: float, d_beta: float,
            ridge: float = 1e-8, input_state=None) -> ItePath:
    """Iterate ``ite_step`` for round(beta / d_beta) accepted steps."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    n_steps = int(round(beta / d_beta)) if beta > 0 else 0
    trace = []
    stalled = False
    for _ in range(n_steps):
        res = ite_step(c, H, d_beta, ridge, input_state=input_state)
        if not res.accepted:
            stalled = True
            break
        c = res.circuit
        trace.append(res.energy)
    return ItePath(d_beta, len(trace), tuple(trace), c, stalled)


def align_phase(target, reference) -> np.ndarray:
    """Multiply ``target`` by the phase that makes <reference|target> real and positive."""
    t = as_array(target)
    ov = np.vdot(as_array(reference), t)
    return t * (np.conj(ov) / abs(ov)) if abs(ov) > 0 else t.copy()


def track_ground_state(c: VariationalCircuit, psi_next, psi_curr, ridge: float = 1e-8,
                       min_fidelity: float = 0.99) -> np.ndarray:
    """Parameter shift delta from B delta = E with E_m = Re<d_m Psi | psi_next - psi_curr>."""
    psi = apply_circuit(c).amplitudes
    curr, nxt = as_array(psi_curr), as_array(psi_next)
    if curr.size != psi.size or nxt.size != psi.size:
        raise SizeMismatchError("tracking states and circuit act on different site counts")
    fid = abs(np.vdot(psi, curr)) ** 2
    if fid < min_fidelity:
        raise TrackingDivergenceError(f"circuit state fidelity {fid:.4f} < {min_fidelity}")
    D = state_derivatives(c)
    B = gram_matrix(D)
    _check_psd(B, "B")
    E = np.real(D.conj() @ (nxt - curr))
    return _solve(B, E, ridge, "B")


@dataclass(frozen=True)
class TrackRecord:
    circuits: tuple
    fidelities: tuple[float, ...]


def track_path(c: VariationalCircuit, targets, ridge: float = 1e-8, sweeps: int = 2,
               min_fidelity: float = 0.99) -> TrackRecord:
    """Follow a sequence of exact states by repeated linearised updates.

    The correction at each point is taken relative to the current circuit
    state (phase-aligned target minus circuit state), so errors do not
    accumulate along the path.
    """
    circuits, fids = [], []
    for target in targets:
        for _ in range(sweeps):
            cur = apply_circuit(c).amplitudes
            tgt = align_phase(target, cur)
            delta = track_ground_state(c, tgt, cur, ridge, min_fidelity)
            c = c.with_flat(c.flat + delta)
        fid = abs(np.vdot(as_array(target), apply_circuit(c).amplitudes)) ** 2
        circuits.append(c)
        fids.append(float(fid))
    return TrackRecord(tuple(circuits), tuple(fids))

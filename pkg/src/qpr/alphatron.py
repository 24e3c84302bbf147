"""Kernel Alphatron training, prediction and scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg, ndimage

from .errors import InvalidThresholdError, SizeMismatchError, TrainingDivergenceError

C1, C2, REJECT = "c1", "c2", "reject"


def default_iterations(N: int, delta: float = 0.1) -> int:
    """T = ceil(sqrt(N / log(1/delta)))."""
    return max(1, math.ceil(math.sqrt(N / math.log(1.0 / delta))))


@dataclass(frozen=True)
class QKAModel:
    alpha: np.ndarray
    selected_iteration: int
    lam: float
    T: int
    training_params: np.ndarray
    per_iteration_risk: np.ndarray = field(repr=False)
    training_risk: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.alpha.size

    def to_text(self) -> str:
        params = np.atleast_2d(self.training_params)
        d = params.shape[1] if params.size else 0
        lines = [f"N={self.N} lambda={self.lam!r} T={self.T} r={self.selected_iteration} d={d}"]
        lines.append(" ".join(repr(float(a)) for a in self.alpha))
        lines += [" ".join(repr(float(x)) for x in row) for row in params]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "QKAModel":
        lines = text.strip().splitlines()
        meta = dict(kv.split("=") for kv in lines[0].split())
        alpha = np.array([float(x) for x in lines[1].split()])
        params = np.array([[float(x) for x in ln.split()] for ln in lines[2:]])
        return cls(
            alpha,
            int(meta["r"]),
            float(meta["lambda"]),
            int(meta["T"]),
            params.reshape(int(meta["N"]), int(meta["d"])),
            np.array([]),
            np.array([]),
        )

    @classmethod
    def load(cls, path) -> "QKAModel":
        return cls.from_text(Path(path).read_text())


def _entries(K) -> np.ndarray:
    return np.asarray(getattr(K, "entries", K), dtype=float)


def train_qka(K_train, b, lam: float = 1.0, T: int | None = None, K_val=None, y_val=None,
              training_params=None, delta: float = 0.1) -> QKAModel:
    """Run T synchronous Alphatron updates, then keep the iterate with least validation error.

    ``K_val`` holds one row per validation point (kernel against the training
    set). Without a validation set the selection uses the training set itself.
    """
    K = _entries(K_train)
    b = np.asarray(b, dtype=float)
    N = b.size
    if K.shape != (N, N):
        raise SizeMismatchError(f"kernel shape {K.shape} does not match {N} labels")
    if T is None:
        T = default_iterations(N, delta)
    if T < 1:
        raise ValueError("T must be >= 1")
    if K_val is None:
        K_val, y_val = K, b
    K_val = np.atleast_2d(_entries(K_val))
    y_val = np.asarray(y_val, dtype=float)
    if K_val.shape != (y_val.size, N) or y_val.size == 0:
        raise SizeMismatchError("validation kernel rows must be (M, N) with M labels, M >= 1")

    alpha = np.zeros(N)
    alphas = np.empty((T, N))
    val_risk = np.empty(T)
    train_risk = np.empty(T)
    for t in range(T):
        alphas[t] = alpha
        # K[j][i] summed over j: predictions on the training points
        h_train = K.T @ alpha
        val_risk[t] = np.sum((K_val @ alpha - y_val) ** 2)
        train_risk[t] = np.mean((h_train - b) ** 2)
        alpha = alpha + (lam / N) * (b - h_train)
        if not np.all(np.isfinite(alpha)):
            raise TrainingDivergenceError(f"non-finite coefficients at iteration {t + 1}")
    r = int(np.argmin(val_risk))  # first minimum wins ties
    params = np.zeros((N, 0)) if training_params is None else np.asarray(training_params, float).reshape(N, -1)
    return QKAModel(alphas[r].copy(), r + 1, float(lam), int(T), params, val_risk, train_risk)


def predict(model: QKAModel, k) -> float | np.ndarray:
    """alpha . k for one kernel vector, or row-wise for a matrix of them."""
    k = _entries(k)
    if k.shape[-1] != model.N:
        raise SizeMismatchError(f"kernel vector length {k.shape[-1]} != N={model.N}")
    out = k @ model.alpha
    return float(out) if np.ndim(out) == 0 else out


def empirical_risk(preds, labels) -> float:
    p, y = np.asarray(preds, float), np.asarray(labels, float)
    if p.shape != y.shape:
        raise SizeMismatchError("predictions and labels differ in length")
    return float(np.mean((p - y) ** 2))


def classify(value: float, t1: float = 0.5, t2: float = 0.5) -> str:
    if t2 > t1:
        raise InvalidThresholdError(f"t2={t2} exceeds t1={t1}")
    if value > t1:
        return C1
    if value < t2:
        return C2
    return REJECT


def classify_three(value: float, t_hi: float = 2 / 3, t_lo: float = 1 / 3) -> str:
    """Three-phase rule on one regressor: above t_hi, below t_lo, or the band between."""
    return classify(value, t_hi, t_lo)


def success_rate(pred_labels, true_labels) -> float:
    pred, true = list(pred_labels), list(true_labels)
    if len(pred) != len(true):
        raise SizeMismatchError("label sequences differ in length")
    if not pred:
        raise ValueError("success rate of an empty set is undefined")
    return sum(p == t for p, t in zip(pred, true)) / len(pred)


def kernel_ridge_solve(K, b, ridge: float = 0.0) -> np.ndarray:
    K = _entries(K)
    b = np.asarray(b, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] != b.size:
        raise SizeMismatchError("kernel must be square and match the labels")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    A = K + ridge * np.eye(b.size)
    try:
        return linalg.solve(A, b, assume_a="sym")
    except (linalg.LinAlgError, ValueError) as exc:
        raise linalg.LinAlgError(f"kernel system is singular: {exc}") from exc


def smooth_grid(values: np.ndarray) -> np.ndarray:
    """3x3 median filter over a 2-D grid of predictions (edges replicate)."""
    return ndimage.median_filter(np.asarray(values, float), size=3, mode="nearest")

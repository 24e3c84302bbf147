"""Experiment configuration, ground-state caching and the phase-recognition
pipeline (ground states, labels, kernels, training, prediction, scoring).

A run lives in one output directory. Every command reads what earlier
commands wrote there, emits CSV files and merges its timings, file list and
summary metrics into ``manifest.json``.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import alphatron, kernel, observables, ptdist, shadows
from .errors import ConfigError, ConvergenceError, QPRError
from .pauli import (
    build_bond_alternating_xxz,
    build_cluster_chain,
    build_tfim_lattice,
    build_xxz_chain,
)
from .statevec import StateVector, lanczos_ground_state, load_state, save_state
from .varcirc import BrickworkArchitecture, apply_circuit, haar_random_circuit

log = logging.getLogger(__name__)

MODELS = ("xxz", "cluster", "bond_xxz", "tfim")
OBSERVABLES = ("magnetization_x", "string_order", "reflection")
SELECTIONS = ("train", "validation", "test")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INCOMPLETE = 0, 2, 3, 4


class IncompleteGridError(QPRError):
    """Some grid points have no cached ground state (or failed to solve)."""


# --------------------------------------------------------------------------- config


@dataclass(frozen=True)
class GridAxis:
    name: str
    min: float
    max: float
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError(f"grid axis {self.name!r} needs count >= 1")

    def values(self) -> np.ndarray:
        if self.count == 1:
            return np.array([float(self.min)])
        return np.linspace(self.min, self.max, self.count)


@dataclass(frozen=True)
class LineSpec:
    """Training points along ``axis`` with the other parameters held at ``fixed``."""

    axis: GridAxis
    fixed: dict = field(default_factory=dict)
    sampling: str = "uniform"

    def __post_init__(self):
        if self.sampling not in ("uniform", "random"):
            raise ConfigError(f"line sampling must be uniform or random, not {self.sampling!r}")


@dataclass(frozen=True)
class ObservableSpec:
    kind: str = "magnetization_x"
    lo: float = 0.0
    hi: float = 1.0
    thresholds: tuple = (0.5, 0.5)
    endpoints: tuple | None = None
    interval_length: int = 4

    def __post_init__(self):
        if self.kind not in OBSERVABLES:
            raise ConfigError(f"observable must be one of {OBSERVABLES}")
        if self.lo >= self.hi:
            raise ConfigError("observable label range needs lo < hi")
        if len(self.thresholds) != 2 or self.thresholds[1] > self.thresholds[0]:
            raise ConfigError("thresholds are [t1, t2] with t2 <= t1")


@dataclass(frozen=True)
class ShadowSpec:
    axis: GridAxis
    fixed: dict = field(default_factory=dict)
    n: int | None = None
    T: int = 500
    tau: float = 1.0
    gamma: float = 1.0
    components: int = 2


@dataclass(frozen=True)
class PtSpec:
    J: tuple = (0.0, 1.0)
    F: tuple = (0.5, 1.0, 1.5)
    W: float = 1.0
    bins: int = 50
    haar_seeds: int = 5
    haar_depth: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model: str
    n: int
    couplings: dict = field(default_factory=dict)
    train_lines: tuple = ()
    test_axes: tuple = ()
    observable: ObservableSpec = ObservableSpec()
    kernel_mode: str = kernel.EXACT
    shot_multiplier: float = 1.0
    lam: float = 1.0
    T: int | None = None
    delta: float = 0.1
    validation_fraction: float = 0.25
    selection: str = "validation"
    trials: int = 1
    seed: int = 0
    solver_tol: float = 1e-10
    out: str = "runs/default"
    shadow: ShadowSpec | None = None
    ptdist: PtSpec | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, not {self.model!r}")
        if not 2 <= self.n <= 24:
            raise ConfigError(f"n={self.n} outside 2..24")
        if self.kernel_mode not in (kernel.EXACT, kernel.ESTIMATED):
            raise ConfigError(f"kernel mode must be exact or estimated, not {self.kernel_mode!r}")
        if self.selection not in SELECTIONS:
            raise ConfigError(f"selection must be one of {SELECTIONS}")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in [0, 1)")
        if self.selection == "validation" and self.validation_fraction == 0:
            raise ConfigError("validation selection needs validation_fraction > 0")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.shot_multiplier <= 0 or self.lam <= 0:
            raise ConfigError("shot_multiplier and lam must be positive")
        if self.T is not None and self.T < 1:
            raise ConfigError("T must be >= 1")

    # ---- (de)serialization

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        base = d.pop("preset", None)
        if base is not None:
            merged = preset(base).to_dict()
            merged.update(d)
            d = merged
        try:
            d["train_lines"] = tuple(_line(x) for x in d.get("train_lines", ()))
            d["test_axes"] = tuple(_axis(x) for x in d.get("test_axes", ()))
            if "observable" in d:
                ob = _only(ObservableSpec, d["observable"])
                ob["thresholds"] = tuple(ob.get("thresholds", (0.5, 0.5)))
                if ob.get("endpoints") is not None:
                    ob["endpoints"] = tuple(ob["endpoints"])
                d["observable"] = ObservableSpec(**ob)
            if d.get("shadow") is not None:
                sh = _only(ShadowSpec, d["shadow"])
                sh["axis"] = _axis(sh["axis"])
                d["shadow"] = ShadowSpec(**sh)
            if d.get("ptdist") is not None:
                pt = _only(PtSpec, d["ptdist"])
                for key in ("J", "F"):
                    if key in pt:
                        pt[key] = tuple(pt[key])
                d["ptdist"] = PtSpec(**pt)
            return cls(**_only(cls, d))
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    # ---- points

    def parameter_names(self) -> list[str]:
        names: list[str] = []
        for line in self.train_lines:
            for key in [line.axis.name, *line.fixed]:
                if key not in names:
                    names.append(key)
        for ax in self.test_axes:
            if ax.name not in names:
                names.append(ax.name)
        return names

    def train_points(self, trial: int = 0) -> list[dict]:
        pts = []
        for li, line in enumerate(self.train_lines):
            if line.sampling == "uniform":
                vals = line.axis.values()
            else:
                rng = np.random.default_rng([self.seed, trial, li])
                vals = rng.uniform(line.axis.min, line.axis.max, line.axis.count)
            pts += [{line.axis.name: float(v), **line.fixed} for v in vals]
        return pts

    def test_points(self) -> list[dict]:
        if not self.test_axes:
            return []
        names = [ax.name for ax in self.test_axes]
        return [dict(zip(names, map(float, combo)))
                for combo in itertools.product(*(ax.values() for ax in self.test_axes))]


def _only(cls, d: dict) -> dict:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return dict(d)


def _axis(d) -> GridAxis:
    return d if isinstance(d, GridAxis) else GridAxis(**_only(GridAxis, d))


def _line(d) -> LineSpec:
    if isinstance(d, LineSpec):
        return d
    d = _only(LineSpec, d)
    d["axis"] = _axis(d["axis"])
    return LineSpec(**d)


def preset(name: str) -> ExperimentConfig:
    """Desk-scale versions of the published experiments."""
    if name == "xxz":
        return ExperimentConfig(
            name="xxz", model="xxz", n=12,
            couplings={"J1": 0.2, "J2": 1.0, "periodic": True},
            train_lines=(LineSpec(GridAxis("g", 0.0, 2.0, 15), sampling="random"),),
            test_axes=(GridAxis("g", 0.0, 2.01, 31),),
            observable=ObservableSpec("magnetization_x", 0.0, 1.0, (0.5, 0.5)),
            T=400, trials=10, selection="train", validation_fraction=0.0, out="runs/xxz",
        )
    if name == "spt":
        return ExperimentConfig(
            name="spt", model="cluster", n=12,
            couplings={"J": 1.0},
            train_lines=(LineSpec(GridAxis("h1", -1.5, 1.5, 40), {"h2": 0.0}),),
            test_axes=(GridAxis("h1", -1.5, 1.5, 32), GridAxis("h2", 0.0, 1.6, 32)),
            observable=ObservableSpec("string_order", 0.0, 1.0, (0.5, 0.5)),
            kernel_mode=kernel.ESTIMATED, shot_multiplier=10.0,
            selection="train", validation_fraction=0.0, out="runs/spt",
            shadow=ShadowSpec(GridAxis("h2", 0.0, 1.6, 24), {"h1": 0.4}, n=10),
        )
    if name == "bond-xxz":
        return ExperimentConfig(
            name="bond-xxz", model="bond_xxz", n=12,
            couplings={"J2": 1.0, "j1_on_odd_bonds": True},
            train_lines=(
                LineSpec(GridAxis("ratio", 0.1, 3.0, 30), {"delta": 0.5}),
                LineSpec(GridAxis("ratio", 0.1, 3.0, 30), {"delta": 3.0}),
            ),
            test_axes=(GridAxis("ratio", 0.1, 3.0, 30), GridAxis("delta", 0.0, 3.5, 30)),
            observable=ObservableSpec("reflection", -1.0, 1.0, (2 / 3, 1 / 3)),
            selection="train", validation_fraction=0.0, out="runs/bond-xxz",
        )
    if name == "ptdist":
        return ExperimentConfig(
            name="ptdist", model="tfim", n=10,
            couplings={"na": 2, "nb": 5, "periodic": False},
            ptdist=PtSpec(), out="runs/ptdist",
        )
    raise ConfigError(f"unknown preset {name!r}; choose xxz, spt, bond-xxz or ptdist")


PRESETS = ("xxz", "spt", "bond-xxz", "ptdist")


# --------------------------------------------------------------------------- physics


def hamiltonian_for(model: str, n: int, params: dict):
    """Build the model Hamiltonian; every entry of ``params`` must be consumed."""
    p = dict(params)
    try:
        if model == "xxz":
            H = build_xxz_chain(n, p.pop("J1"), p.pop("J2"), p.pop("g"), bool(p.pop("periodic", True)))
        elif model == "cluster":
            H = build_cluster_chain(n, p.pop("J", 1.0), p.pop("h1"), p.pop("h2"))
        elif model == "bond_xxz":
            J2 = p.pop("J2", 1.0)
            J1 = p.pop("ratio") * J2 if "ratio" in p else p.pop("J1")
            H = build_bond_alternating_xxz(n, J1, J2, p.pop("delta"), bool(p.pop("j1_on_odd_bonds", True)))
        elif model == "tfim":
            na, nb = int(p.pop("na")), int(p.pop("nb"))
            if na * nb != n:
                raise ConfigError(f"lattice {na}x{nb} does not have n={n} sites")
            H = build_tfim_lattice(na, nb, p.pop("W"), p.pop("J"), p.pop("F"), bool(p.pop("periodic", False)))
        else:
            raise ConfigError(f"unknown model {model!r}")
    except KeyError as exc:
        raise ConfigError(f"model {model} is missing parameter {exc}") from exc
    if p:
        raise ConfigError(f"model {model} does not take parameters {sorted(p)}")
    return H


def cache_key(model: str, n: int, params: dict, tol: float) -> str:
    """Hash of every physics-relevant input of a ground-state solve."""
    blob = json.dumps(
        {"model": model, "n": n, "tol": repr(float(tol)),
         "params": {k: repr(v) for k, v in sorted(params.items())}},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


@dataclass(frozen=True)
class SolvedPoint:
    key: str
    state: StateVector
    energy: float
    residual: float
    iterations: int


class GroundStateCache:
    """Directory of ``<key>.qps`` state files with ``<key>.json`` solver metadata."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _paths(self, key):
        return self.root / f"{key}.qps", self.root / f"{key}.json"

    def get(self, key: str) -> SolvedPoint | None:
        state_path, meta_path = self._paths(key)
        if not (state_path.exists() and meta_path.exists()):
            return None
        meta = json.loads(meta_path.read_text())
        return SolvedPoint(key, load_state(state_path), meta["energy"], meta["residual"], meta["iterations"])

    def put(self, point: SolvedPoint) -> None:
        state_path, meta_path = self._paths(point.key)
        save_state(point.state, state_path)
        meta = {"energy": point.energy, "residual": point.residual, "iterations": point.iterations}
        _atomic_write(meta_path, json.dumps(meta))


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


class Workspace:
    """Solves, caches and serves ground states for one configuration."""

    def __init__(self, config: ExperimentConfig, cache_dir=None, threads: int = 1):
        self.config = config
        self.out = Path(config.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cache = GroundStateCache(cache_dir or self.out / "cache")
        self.threads = max(1, int(threads))
        self.new_solves = 0

    def key(self, point: dict, n: int | None = None, model: str | None = None) -> str:
        params = {**self.config.couplings, **point}
        return cache_key(model or self.config.model, n or self.config.n, params, self.config.solver_tol)

    def _solve(self, point: dict, n: int) -> SolvedPoint:
        H = hamiltonian_for(self.config.model, n, {**self.config.couplings, **point})
        res = lanczos_ground_state(H, tol=self.config.solver_tol)
        return SolvedPoint(self.key(point, n), res.state, res.energy, res.residual, res.iterations)

    def solve(self, points: list[dict], n: int | None = None) -> tuple[list[SolvedPoint | None], list[str]]:
        """Solve (or fetch) every point; failures are logged and returned as None."""
        n = n or self.config.n
        results: list[SolvedPoint | None] = [None] * len(points)
        todo = []
        for idx, pt in enumerate(points):
            hit = self.cache.get(self.key(pt, n))
            if hit is not None:
                results[idx] = hit
            else:
                todo.append(idx)
        errors: list[str] = []

        def work(idx):
            try:
                return idx, self._solve(points[idx], n), None
            except ConvergenceError as exc:
                return idx, None, f"point {points[idx]}: {exc}"

        unique: dict[str, int] = {}
        for idx in todo:
            unique.setdefault(self.key(points[idx], n), idx)
        with ThreadPoolExecutor(self.threads) as pool:
            for idx, solved, err in pool.map(work, unique.values()):
                if err:
                    errors.append(err)
                    log.warning(err)
                    continue
                self.cache.put(solved)
                self.new_solves += 1
        for idx in todo:
            results[idx] = self.cache.get(self.key(points[idx], n))
        return results, errors

    def states(self, points: list[dict], n: int | None = None) -> list[StateVector]:
        """Cached states only; a missing point is an error naming the groundstate step."""
        n = n or self.config.n
        out = []
        for pt in points:
            hit = self.cache.get(self.key(pt, n))
            if hit is None:
                raise IncompleteGridError(
                    f"no cached ground state for {pt}; run the 'groundstate' command first"
                )
            out.append(hit.state)
        return out


# --------------------------------------------------------------------------- io helpers


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    _atomic_write(path, buf.getvalue())
    return path


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class Manifest:
    """Provenance record merged by every command of a run."""

    def __init__(self, config: ExperimentConfig):
        self.path = Path(config.out) / "manifest.json"
        if self.path.exists():
            self.data = json.loads(self.path.read_text())
        else:
            self.data = {"commands": {}}
        self.data["config"] = config.to_dict()
        self.data["config_hash"] = config.config_hash()
        self.data["seed"] = config.seed

    def record(self, command: str, seconds: float, files, metrics: dict, complete: bool = True):
        self.data["commands"][command] = {
            "seconds": round(seconds, 3),
            "files": sorted(str(Path(f).name) for f in files),
            "metrics": metrics,
            "complete": complete,
        }
        _atomic_write(self.path, json.dumps(self.data, indent=2, sort_keys=True))

    def metrics(self, command: str) -> dict:
        return self.data["commands"].get(command, {}).get("metrics", {})


@dataclass
class CommandResult:
    exit_code: int
    files: list
    metrics: dict


# --------------------------------------------------------------------------- labels and scoring


def observable_value(spec: ObservableSpec, psi) -> float:
    if spec.kind == "magnetization_x":
        return observables.magnetization_x(psi)
    if spec.kind == "string_order":
        i, j = spec.endpoints if spec.endpoints else (None, None)
        return observables.string_order(psi, i, j)
    n = psi.n if isinstance(psi, StateVector) else int(np.log2(len(psi)))
    return observables.partial_reflection_invariant(psi, observables.IntervalSpec.centered(n, spec.interval_length))


def encode(spec: ObservableSpec, value: float) -> float:
    return observables.label_encode(value, spec.lo, spec.hi)


def to_class(spec: ObservableSpec, value: float) -> str:
    t1, t2 = spec.thresholds
    return alphatron.classify(value, t1, t2)


def derived_seed(*key: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


def _split(config: ExperimentConfig, trial: int, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Training and validation index sets for one trial."""
    m = int(round(config.validation_fraction * N)) if config.selection == "validation" else 0
    if m == 0:
        return np.arange(N), np.arange(0)
    perm = np.random.default_rng([config.seed, trial, 99]).permutation(N)
    return np.sort(perm[m:]), np.sort(perm[:m])


def silhouette(x: np.ndarray, y) -> float:
    """Mean silhouette width of a labelled point cloud (Euclidean)."""
    x, y = np.atleast_2d(x), np.asarray(y)
    if len(np.unique(y)) < 2:
        return 0.0
    D = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
    s = []
    for k in range(len(y)):
        same = (y == y[k]) & (np.arange(len(y)) != k)
        if not same.any():
            s.append(0.0)
            continue
        a = D[k, same].mean()
        b = min(D[k, y == c].mean() for c in np.unique(y) if c != y[k])
        s.append((b - a) / max(a, b) if max(a, b) > 0 else 0.0)
    return float(np.mean(s))


def boundary_error_fraction(true_cls, pred_cls, shape, radius: int = 2) -> float | None:
    """Share of misclassified grid cells lying within ``radius`` cells of a phase boundary.

    A cell is on the boundary when one of its four neighbours has a different
    true class; distance is measured in grid steps along either axis
    (Chebyshev). Returns None when nothing is misclassified.
    """
    truth = np.asarray(true_cls).reshape(shape)
    wrong = (np.asarray(pred_cls) != np.asarray(true_cls)).reshape(shape)
    if not wrong.any():
        return None
    edge = np.zeros(shape, dtype=bool)
    dv = truth[1:] != truth[:-1]
    dh = truth[:, 1:] != truth[:, :-1]
    edge[1:] |= dv
    edge[:-1] |= dv
    edge[:, 1:] |= dh
    edge[:, :-1] |= dh
    near = ndimage.binary_dilation(edge, structure=np.ones((2 * radius + 1,) * 2, dtype=bool))
    return float((wrong & near).sum() / wrong.sum())


# --------------------------------------------------------------------------- commands


def _all_points(config: ExperimentConfig) -> list[tuple[str, int, int, dict]]:
    rows = []
    for trial in range(config.trials):
        rows += [("train", trial, k, p) for k, p in enumerate(config.train_points(trial))]
    rows += [("test", 0, k, p) for k, p in enumerate(config.test_points())]
    return rows


def cmd_groundstate(config: ExperimentConfig, threads: int = 1, cache_dir=None) -> CommandResult:
    t0 = time.perf_counter()
    ws = Workspace(config, cache_dir, threads)
    rows = _all_points(config)
    solved, errors = ws.solve([r[3] for r in rows])
    names = config.parameter_names()
    table = []
    for (split, trial, k, pt), sp in zip(rows, solved):
        vals = [pt.get(nm, "") for nm in names]
        if sp is None:
            table.append([split, trial, k, *vals, "", "", "", ws.key(pt)])
        else:
            table.append([split, trial, k, *vals, sp.energy, sp.residual, sp.iterations, sp.key])
    path = write_csv(ws.out / "energies.csv",
                     ["split", "trial", "index", *names, "energy", "residual", "iterations", "key"], table)
    complete = not errors
    metrics = {"points": len(rows), "failed": len(errors), "new_solves": ws.new_solves}
    Manifest(config).record("groundstate", time.perf_counter() - t0, [path], metrics, complete)
    return CommandResult(EXIT_OK if complete else EXIT_INCOMPLETE, [path], metrics)


def cmd_label(config: ExperimentConfig, cache_dir=None) -> CommandResult:
    t0 = time.perf_counter()
    ws = Workspace(config, cache_dir)
    rows = _all_points(config)
    states = ws.states([r[3] for r in rows])
    names = config.parameter_names()
    table = []
    for (split, trial, k, pt), psi in zip(rows, states):
        o = observable_value(config.observable, psi)
        table.append([split, trial, k, *[pt.get(nm, "") for nm in names], o, encode(config.observable, o)])
    path = write_csv(ws.out / "labels.csv", ["split", "trial", "index", *names, "observable", "label"], table)
    metrics = {"labelled": len(table)}
    Manifest(config).record("label", time.perf_counter() - t0, [path], metrics)
    return CommandResult(EXIT_OK, [path], metrics)


def _labels(config: ExperimentConfig, split: str, trial: int) -> np.ndarray:
    path = Path(config.out) / "labels.csv"
    if not path.exists():
        raise IncompleteGridError("labels.csv missing; run the 'label' command first")
    rows = [r for r in read_csv(path) if r["split"] == split and int(r["trial"]) == trial]
    rows.sort(key=lambda r: int(r["index"]))
    return np.array([float(r["label"]) for r in rows])


def _plan(config: ExperimentConfig, N: int) -> kernel.ShotPlan:
    if config.kernel_mode == kernel.EXACT:
        return kernel.ShotPlan.exact()
    return kernel.shots_for(N, config.delta, config.shot_multiplier)


def cmd_train(config: ExperimentConfig, cache_dir=None) -> CommandResult:
    t0 = time.perf_counter()
    ws = Workspace(config, cache_dir)
    names = config.parameter_names()
    files, risks, selected = [], [], []
    for trial in range(config.trials):
        pts = config.train_points(trial)
        states = ws.states(pts)
        b = _labels(config, "train", trial)
        tr, va = _split(config, trial, len(pts))
        tr_states = [states[i] for i in tr]
        plan = _plan(config, len(tr))
        kseed = derived_seed(config.seed, trial)
        K = kernel.build_kernel_matrix(tr_states, config.kernel_mode, plan, kseed)
        K_val = y_val = None
        if config.selection == "validation":
            K_val = kernel.kernel_rows(tr_states, [states[i] for i in va], config.kernel_mode, plan,
                                       derived_seed(config.seed, trial, 1))
            y_val = b[va]
        elif config.selection == "test":
            # selection on the test grid, as the published algorithm does
            K_val = kernel.kernel_rows(tr_states, ws.states(config.test_points()), config.kernel_mode,
                                       plan, derived_seed(config.seed, trial, 2))
            y_val = _labels(config, "test", 0)
        params = np.array([[pts[i].get(nm, np.nan) for nm in names] for i in tr])
        model = alphatron.train_qka(K, b[tr], config.lam, config.T, K_val, y_val, params, config.delta)
        final = alphatron.empirical_risk(K.entries.T @ model.alpha, b[tr])
        risks.append(final)
        selected.append(model.selected_iteration)
        mpath = ws.out / f"model_t{trial}.txt"
        _atomic_write(mpath, model.to_text())
        kpath = ws.out / f"kernel_t{trial}.csv"
        K.to_csv(kpath)
        rpath = write_csv(ws.out / f"risk_t{trial}.csv", ["iteration", "selection_sse", "training_mse"],
                          [[t + 1, v, r] for t, (v, r) in enumerate(zip(model.per_iteration_risk, model.training_risk))])
        files += [mpath, kpath, rpath]
    metrics = {
        "final_training_risk": risks,
        "mean_final_training_risk": float(np.mean(risks)),
        "selected_iteration": selected,
        "shots_per_entry": _plan(config, len(tr)).per_entry,
    }
    Manifest(config).record("train", time.perf_counter() - t0, files, metrics)
    return CommandResult(EXIT_OK, files, metrics)


def cmd_predict(config: ExperimentConfig, cache_dir=None) -> CommandResult:
    t0 = time.perf_counter()
    ws = Workspace(config, cache_dir)
    names = config.parameter_names()
    test_pts = config.test_points()
    test_states = ws.states(test_pts)
    y = _labels(config, "test", 0)
    true_cls = [to_class(config.observable, v) for v in y]
    files, risks, rates, near = [], [], [], []
    grid_shape = tuple(ax.count for ax in config.test_axes)
    for trial in range(config.trials):
        mpath = ws.out / f"model_t{trial}.txt"
        if not mpath.exists():
            raise IncompleteGridError(f"{mpath.name} missing; run the 'train' command first")
        model = alphatron.QKAModel.load(mpath)
        pts = config.train_points(trial)
        tr, _ = _split(config, trial, len(pts))
        tr_states = [ws.states([pts[i]])[0] for i in tr]
        rows = kernel.kernel_rows(tr_states, test_states, config.kernel_mode, _plan(config, len(tr)),
                                  derived_seed(config.seed, trial, 2))
        pred = alphatron.predict(model, rows)
        pred_cls = [to_class(config.observable, v) for v in pred]
        risks.append(alphatron.empirical_risk(pred, y))
        rates.append(alphatron.success_rate(pred_cls, true_cls))
        if len(grid_shape) == 2:
            near.append(boundary_error_fraction(true_cls, pred_cls, grid_shape))
        table = [[k, *[pt[nm] for nm in names if nm in pt], y[k], pred[k], true_cls[k], pred_cls[k]]
                 for k, pt in enumerate(test_pts)]
        header = ["index", *[nm for nm in names if nm in test_pts[0]], "label", "prediction",
                  "true_class", "predicted_class"]
        files.append(write_csv(ws.out / f"predictions_t{trial}.csv", header, table))
    metrics = {
        "test_risk": risks,
        "mean_test_risk": float(np.mean(risks)),
        "success_rate": rates,
        "mean_success_rate": float(np.mean(rates)),
        "errors": [int(round((1 - r) * len(test_pts))) for r in rates],
    }
    if near:
        metrics["errors_near_boundary"] = near
    Manifest(config).record("predict", time.perf_counter() - t0, files, metrics)
    return CommandResult(EXIT_OK, files, metrics)


def cmd_ptdist(config: ExperimentConfig, threads: int = 1, cache_dir=None) -> CommandResult:
    t0 = time.perf_counter()
    spec = config.ptdist or PtSpec()
    ws = Workspace(config, cache_dir, threads)
    pts = [{"W": spec.W, "J": float(J), "F": float(F)} for J in spec.J for F in spec.F]
    solved, errors = ws.solve(pts)
    rows, by_J = [], {}
    for pt, sp in zip(pts, solved):
        if sp is None:
            continue
        d = ptdist.pt_trace_distance(sp.state, spec.bins)
        rows.append([pt["W"], pt["J"], pt["F"], d, ptdist.hardness_window_check(d, config.n)])
        by_J.setdefault(pt["J"], []).append(d)
    f1 = write_csv(ws.out / "ptdist.csv", ["W", "J", "F", "pt_distance", "hardness_window"], rows)
    depth = spec.haar_depth or 2 * config.n
    arch = BrickworkArchitecture(config.n, depth)
    haar = []
    for s in range(spec.haar_seeds):
        psi = apply_circuit(haar_random_circuit(arch, derived_seed(config.seed, s)))
        d = ptdist.pt_trace_distance(psi, spec.bins)
        haar.append([s, depth, d, ptdist.hardness_window_check(d, config.n)])
    f2 = write_csv(ws.out / "ptdist_haar.csv", ["seed", "depth", "pt_distance", "hardness_window"], haar)
    metrics = {
        "mean_distance_by_J": {repr(J): float(np.mean(v)) for J, v in by_J.items()},
        "haar_max_distance": max((r[2] for r in haar), default=None),
        "failed": len(errors),
    }
    complete = not errors
    Manifest(config).record("ptdist", time.perf_counter() - t0, [f1, f2], metrics, complete)
    return CommandResult(EXIT_OK if complete else EXIT_INCOMPLETE, [f1, f2], metrics)


def cmd_shadow_baseline(config: ExperimentConfig, threads: int = 1, cache_dir=None) -> CommandResult:
    if config.shadow is None:
        raise ConfigError("config has no shadow section")
    t0 = time.perf_counter()
    spec = config.shadow
    n = spec.n or config.n
    ws = Workspace(config, cache_dir, threads)
    pts = [{spec.axis.name: float(v), **spec.fixed} for v in spec.axis.values()]
    solved, errors = ws.solve(pts, n)
    if errors:
        raise IncompleteGridError("; ".join(errors))
    values = [observable_value(config.observable, sp.state) for sp in solved]
    labels = [encode(config.observable, v) for v in values]
    classes = np.array([to_class(config.observable, v) for v in labels])
    records = [shadows.sample_shadows(sp.state, spec.T, derived_seed(config.seed, k, 3))
               for k, sp in enumerate(solved)]
    K = shadows.shadow_kernel_matrix(records, shadows.ShadowKernelParams(spec.tau, spec.gamma))
    pca = shadows.kernel_pca(K, spec.components)
    x = pca.coordinates
    loo = []
    for k in range(len(pts)):
        mask = np.arange(len(pts)) != k
        loo.append(shadows.nearest_centroid_predict(x[mask], classes[mask], x[k:k + 1])[0])
    rate = alphatron.success_rate(loo, classes)
    names = [spec.axis.name, *spec.fixed]
    header = ["index", *names, "observable", "label", "true_class",
              *[f"pc{c + 1}" for c in range(x.shape[1])], "loo_class"]
    table = [[k, *[pt[nm] for nm in names], values[k], labels[k], classes[k], *x[k], loo[k]]
             for k, pt in enumerate(pts)]
    path = write_csv(ws.out / "shadow_pca.csv", header, table)
    metrics = {
        "baseline_success_rate": rate,
        "silhouette": silhouette(x, classes),
        "components": int(x.shape[1]),
        "pca_complete": pca.complete,
    }
    Manifest(config).record("shadow-baseline", time.perf_counter() - t0, [path], metrics)
    return CommandResult(EXIT_OK, [path], metrics)


def cmd_report(config: ExperimentConfig) -> CommandResult:
    path = Path(config.out) / "manifest.json"
    if not path.exists():
        raise IncompleteGridError(f"{path} missing; run a pipeline command first")
    data = json.loads(path.read_text())
    summary = {cmd: rec["metrics"] for cmd, rec in sorted(data["commands"].items())}
    return CommandResult(EXIT_OK, [path], summary)

"""Additive-noise structural causal models over latents Z and a target Y.

Variables are indexed ``0 .. d-1`` for the latents; index ``d`` denotes the
target ``Y``.  Mechanisms are drawn from a small closed language (linear
forms and sums of monomial / tanh terms) so that every model serializes to
JSON and can be re-evaluated exactly.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadParentIndex,
    CyclicGraph,
    DimensionMismatch,
    EnvIndexOutOfRange,
    GridTooLarge,
    ParseError,
    TargetOutOfRange,
)

SCHEMA_VERSION = "1"
NOISE_FAMILIES = ("gaussian", "uniform", "laplace")
DEFAULT_GRID_CAP = 10**6


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean noise parametrized by its variance only."""

    family: str = "gaussian"
    variance: float = 1.0

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        variance = float(self.variance)
        if not math.isfinite(variance) or variance < 0:
            raise ValueError(f"noise variance must be finite and >= 0, got {self.variance}")
        object.__setattr__(self, "variance", variance)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # always consume the stream so that variable i maps to the same draws
        # regardless of which other mechanisms are degenerate
        if self.family == "gaussian":
            e = rng.standard_normal(n) * math.sqrt(self.variance)
        elif self.family == "uniform":
            e = rng.uniform(-1.0, 1.0, n) * math.sqrt(3.0 * self.variance)
        else:
            e = rng.laplace(0.0, 1.0, n) * math.sqrt(self.variance / 2.0)
        if self.variance == 0.0:
            return np.zeros(n)
        return e


@dataclass(frozen=True)
class Term:
    """``coefficient * prod(z_i ** e_i) * prod(tanh(z_j))`` over global indices."""

    coefficient: float
    powers: tuple[tuple[int, int], ...] = ()
    bounded: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "coefficient", float(self.coefficient))
        powers = tuple((int(i), int(e)) for i, e in self.powers)
        if any(e < 0 for _, e in powers):
            raise ValueError("monomial exponents must be non-negative integers")
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "bounded", tuple(int(j) for j in self.bounded))

    @property
    def indices(self) -> set[int]:
        return {i for i, _ in self.powers} | set(self.bounded)

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        out = np.full(z.shape[0], self.coefficient)
        for i, e in self.powers:
            out = out * z[:, i] ** e
        for j in self.bounded:
            out = out * np.tanh(z[:, j])
        return out


@dataclass(frozen=True)
class Mechanism:
    """Deterministic part ``f_i(Z_Pa_i)`` plus an additive noise spec.

    ``form`` is ``"linear"`` (one coefficient per parent) or ``"basis"``
    (a sum of :class:`Term`).  A basis mechanism with a single factor-free
    term and zero noise is a constant, which is how do-interventions are
    represented.
    """

    parents: tuple[int, ...] = ()
    form: str = "linear"
    coefficients: tuple[float, ...] = ()
    terms: tuple[Term, ...] = ()
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        parents = tuple(int(p) for p in self.parents)
        if len(set(parents)) != len(parents):
            raise BadParentIndex(f"duplicate parent indices in {parents}")
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.form == "linear":
            if len(self.coefficients) != len(parents):
                raise ValueError(
                    f"linear mechanism needs {len(parents)} coefficients, got {len(self.coefficients)}"
                )
            if self.terms:
                raise ValueError("linear mechanism takes no basis terms")
        elif self.form == "basis":
            for t in self.terms:
                stray = t.indices - set(parents)
                if stray:
                    raise BadParentIndex(f"basis term uses non-parent indices {sorted(stray)}")
        else:
            raise ValueError(f"unknown mechanism form {self.form!r}")

    @classmethod
    def linear(cls, parents: Sequence[int], coefficients: Sequence[float], noise: NoiseSpec | None = None):
        return cls(tuple(parents), "linear", tuple(coefficients), (), noise or NoiseSpec())

    @classmethod
    def basis(cls, parents: Sequence[int], terms: Sequence[Term], noise: NoiseSpec | None = None):
        return cls(tuple(parents), "basis", (), tuple(terms), noise or NoiseSpec())

    @classmethod
    def constant(cls, value: float):
        return cls((), "basis", (), (Term(value),), NoiseSpec("gaussian", 0.0))

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        """Deterministic part on an ``n x d`` latent matrix (global indexing)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if self.form == "linear":
            if not self.parents:
                return np.zeros(z.shape[0])
            return z[:, list(self.parents)] @ np.asarray(self.coefficients)
        out = np.zeros(z.shape[0])
        for t in self.terms:
            out = out + t.evaluate(z)
        return out


def _topological_order(parent_sets: Sequence[Sequence[int]]) -> list[int]:
    # Kahn's algorithm, smallest ready index first for a deterministic order
    n = len(parent_sets)
    children: list[list[int]] = [[] for _ in range(n)]
    indeg = [0] * n
    for child, parents in enumerate(parent_sets):
        for p in parents:
            children[p].append(child)
            indeg[child] += 1
    ready = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != n:
        stuck = sorted(set(range(n)) - set(order))
        raise CyclicGraph(f"latent graph has a cycle through variables {stuck}")
    return order


@dataclass(frozen=True)
class Scm:
    """Latent mechanisms for ``Z_0 .. Z_{d-1}`` plus the target mechanism for ``Y``."""

    latent: tuple[Mechanism, ...]
    target: Mechanism
    _order: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "latent", tuple(self.latent))
        object.__setattr__(self, "_order", tuple(validate(self)))

    @property
    def d(self) -> int:
        return len(self.latent)

    @property
    def noise_variance(self) -> float:
        """``Var(eps_Y)``; reported, never handed to learners."""
        return self.target.noise.variance

    def f_causal(self, z: np.ndarray) -> np.ndarray:
        return self.target.evaluate(z)


def validate(scm: Scm) -> list[int]:
    """Topological order over ``(Z_0..Z_{d-1}, Y)``; ``Y`` is index ``d`` and comes last."""
    d = len(scm.latent)
    if d < 1:
        raise ValueError("an SCM needs at least one latent variable")
    for i, mech in enumerate(scm.latent):
        for p in mech.parents:
            if not 0 <= p < d:
                raise BadParentIndex(f"Z{i + 1} lists parent index {p}, outside [0, {d})")
            if p == i:
                raise BadParentIndex(f"Z{i + 1} lists itself as a parent")
    for p in scm.target.parents:
        if not 0 <= p < d:
            raise BadParentIndex(f"target lists parent index {p}; Y may only depend on latents")
    return _topological_order([m.parents for m in scm.latent]) + [d]


@dataclass(frozen=True)
class Intervention:
    """Hard intervention ``do(Z_j := a_j for j in targets)``."""

    targets: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        targets = tuple(int(t) for t in self.targets)
        values = tuple(float(v) for v in self.values)
        if len(targets) != len(values):
            raise ValueError(f"{len(targets)} targets but {len(values)} values")
        if len(set(targets)) != len(targets):
            raise ValueError(f"duplicate intervention targets {targets}")
        if any(t < 0 for t in targets):
            raise TargetOutOfRange(f"negative intervention target in {targets}")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "values", values)

    @classmethod
    def full(cls, a: Sequence[float]) -> Intervention:
        return cls(tuple(range(len(a))), tuple(a))

    def is_full(self, d: int) -> bool:
        return set(self.targets) == set(range(d))

    def point(self, d: int) -> np.ndarray:
        """Intervention value as a length-``d`` vector (full interventions only)."""
        if not self.is_full(d):
            raise ValueError("only full do-interventions define a latent point")
        a = np.empty(d)
        a[list(self.targets)] = self.values
        return a


@dataclass(frozen=True)
class EnvironmentSet:
    """Finite, labelled list of interventions on a ``d``-dimensional latent space."""

    d: int
    environments: tuple[Intervention, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        envs = tuple(self.environments)
        if not envs:
            raise ValueError("an environment set must be nonempty")
        labels = tuple(self.labels) or tuple(f"env{i}" for i in range(len(envs)))
        if len(labels) != len(envs):
            raise ValueError("one label per environment required")
        if len(set(labels)) != len(labels):
            raise ValueError("environment labels must be unique")
        for iv in envs:
            bad = [t for t in iv.targets if t >= self.d]
            if bad:
                raise TargetOutOfRange(
                    f"targets {bad} out of range for d={self.d} (index {self.d} is Y, never a target)"
                )
        object.__setattr__(self, "environments", envs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.environments)

    def __getitem__(self, i: int) -> Intervention:
        return self.environments[i]

    @property
    def full_support(self) -> bool:
        return all(iv.is_full(self.d) for iv in self.environments)

    @property
    def a_max(self) -> float:
        return max((abs(v) for iv in self.environments for v in iv.values), default=0.0)

    def points(self) -> np.ndarray:
        return np.array([iv.point(self.d) for iv in self.environments])


@dataclass(frozen=True, eq=False)
class Dataset:
    """Samples of ``(Z, Y)`` from one environment.

    ``noise`` holds the exogenous draws (column ``d`` is ``eps_Y``) so that
    mechanisms can be re-checked against stored draws.
    """

    z: np.ndarray
    y: np.ndarray
    env_index: int = -1
    seed: int = 0
    noise: np.ndarray | None = None

    def __post_init__(self):
        for name in ("z", "y", "noise"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                arr.flags.writeable = False
                object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.y.shape[0]


def substream_seed(seed: int, env_index: int, replicate: int = 0) -> int:
    """64-bit seed of the substream keyed by ``(seed, env_index, replicate)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(env_index), int(replicate)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    # Philox is counter-based: substreams are cheap and independent
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def apply_intervention(scm: Scm, iv: Intervention) -> Scm:
    latent = list(scm.latent)
    for j, a in zip(iv.targets, iv.values):
        if not 0 <= j < scm.d:
            raise TargetOutOfRange(f"intervention target {j} outside [0, {scm.d})")
        latent[j] = Mechanism.constant(a)
    return Scm(tuple(latent), scm.target)


def sample(scm: Scm, n: int, seed: int) -> Dataset:
    """Ancestral sampling of ``n`` i.i.d. rows; deterministic in ``(scm, n, seed)``."""
    if n < 0:
        raise ValueError(f"sample size must be >= 0, got {n}")
    order = validate(scm)
    d = scm.d
    rng = make_rng(seed)
    mechanisms = list(scm.latent) + [scm.target]
    noise = np.empty((n, d + 1))
    for i, mech in enumerate(mechanisms):
        noise[:, i] = mech.noise.draw(rng, n)
    z = np.zeros((n, d))
    for i in order[:-1]:
        z[:, i] = scm.latent[i].evaluate(z) + noise[:, i]
    y = scm.target.evaluate(z) + noise[:, d]
    return Dataset(z, y, -1, int(seed), noise)


def sample_environment(scm: Scm, envs: EnvironmentSet, env_index: int, n: int, seed: int) -> Dataset:
    if not 0 <= env_index < len(envs):
        raise EnvIndexOutOfRange(f"environment index {env_index} not in [0, {len(envs)})")
    if envs.d != scm.d:
        raise DimensionMismatch(f"environments are over d={envs.d}, SCM has d={scm.d}")
    data = sample(apply_intervention(scm, envs[env_index]), n, substream_seed(seed, env_index))
    return replace(data, env_index=env_index)


def make_env_grid(d: int, a_max: float, k: int, max_envs: int = DEFAULT_GRID_CAP) -> EnvironmentSet:
    """Full do-interventions on the ``k``-per-axis uniform grid over ``[-a_max, a_max]^d``.

    ``k == 1`` yields the single centre point.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if a_max <= 0:
        raise ValueError("a_max must be positive")
    if k**d > max_envs:
        raise GridTooLarge(f"{k}^{d} = {k**d} environments exceeds cap {max_envs}")
    axis = np.linspace(-a_max, a_max, k) if k > 1 else np.zeros(1)
    envs = tuple(Intervention.full(a) for a in itertools.product(axis.tolist(), repeat=d))
    labels = tuple(f"grid{i}" for i in range(len(envs)))
    return EnvironmentSet(d, envs, labels)


def make_env_random_box(d: int, a_max: float, count: int, seed: int) -> EnvironmentSet:
    """Full do-interventions with values drawn uniformly from ``[-a_max, a_max]^d``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if a_max <= 0:
        raise ValueError("a_max must be positive")
    pts = make_rng(seed).uniform(-a_max, a_max, size=(count, d))
    envs = tuple(Intervention.full(a) for a in pts.tolist())
    return EnvironmentSet(d, envs, tuple(f"box{i}" for i in range(count)))


# --- serialization -------------------------------------------------------


def mechanism_to_dict(m: Mechanism) -> dict:
    out = {"parents": list(m.parents), "form": m.form}
    if m.form == "linear":
        out["coefficients"] = list(m.coefficients)
    else:
        out["coefficients"] = [t.coefficient for t in m.terms]
        out["terms"] = [
            {"powers": [list(p) for p in t.powers], "bounded": list(t.bounded)} for t in m.terms
        ]
    out["noise"] = {"family": m.noise.family, "variance": m.noise.variance}
    return out


def mechanism_from_dict(obj: dict) -> Mechanism:
    noise = NoiseSpec(**obj.get("noise", {}))
    if obj["form"] == "linear":
        return Mechanism.linear(obj["parents"], obj["coefficients"], noise)
    coefs = obj["coefficients"]
    specs = obj.get("terms", [{} for _ in coefs])
    if len(specs) != len(coefs):
        raise ValueError("basis mechanism needs one coefficient per term")
    terms = [
        Term(c, tuple(tuple(p) for p in s.get("powers", [])), tuple(s.get("bounded", [])))
        for c, s in zip(coefs, specs)
    ]
    return Mechanism.basis(obj["parents"], terms, noise)


def scm_to_dict(scm: Scm) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "d": scm.d,
        "latent": [mechanism_to_dict(m) for m in scm.latent],
        "target": mechanism_to_dict(scm.target),
    }


def scm_from_dict(obj: dict) -> Scm:
    latent = tuple(mechanism_from_dict(m) for m in obj["latent"])
    if "d" in obj and obj["d"] != len(latent):
        raise DimensionMismatch(f"d={obj['d']} but {len(latent)} latent mechanisms given")
    return Scm(latent, mechanism_from_dict(obj["target"]))


def environments_to_dict(envs: EnvironmentSet) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "d": envs.d,
        "environments": [
            {"label": lab, "targets": list(iv.targets), "values": list(iv.values)}
            for lab, iv in zip(envs.labels, envs.environments)
        ],
    }


def environments_from_dict(obj: dict) -> EnvironmentSet:
    items = obj["environments"]
    envs = tuple(Intervention(tuple(e["targets"]), tuple(e["values"])) for e in items)
    labels = tuple(e.get("label", f"env{i}") for i, e in enumerate(items))
    return EnvironmentSet(int(obj["d"]), envs, labels)


def dump_json(obj: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def load_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from e


def _fmt(v: float) -> str:
    return repr(float(v))


def write_dataset_csv(path: str | Path, datasets: Iterable[Dataset]) -> Path:
    """Write ``env,row,z1..zd,y`` rows with shortest round-trip float formatting."""
    datasets = list(datasets)
    d = datasets[0].z.shape[1] if datasets else 0
    lines = [",".join(["env", "row"] + [f"z{i + 1}" for i in range(d)] + ["y"])]
    for ds in datasets:
        for r in range(ds.n):
            cells = [str(ds.env_index), str(r)] + [_fmt(v) for v in ds.z[r]] + [_fmt(ds.y[r])]
            lines.append(",".join(cells))
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_dataset_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`write_dataset_csv`; returns ``(env, z, y)`` arrays."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["env", "row"] or header[-1] != "y":
            raise ParseError(f"{path}: unexpected header {header}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    d = len(header) - 3
    env = np.array([int(r[0]) for r in rows], dtype=int)
    z = np.array([[float(v) for v in r[2 : 2 + d]] for r in rows]).reshape(len(rows), d)
    y = np.array([float(r[-1]) for r in rows])
    return env, z, y

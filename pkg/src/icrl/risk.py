"""Per-environment and worst-case squared-error risk of predictors.

Two evaluation routes are available: Monte-Carlo (sample each environment,
average squared residuals) and exact (closed form for full do-interventions,
where ``Z`` is the constant ``a`` and the risk is
``(f_causal(a) - f(a))**2 + Var(eps_Y)``).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, NotFullSupport
from .mixing import Mixer
from .scm import (
    Dataset,
    EnvironmentSet,
    Intervention,
    Scm,
    Term,
    apply_intervention,
    make_rng,
    sample,
    sample_environment,
)


@dataclass(frozen=True, eq=False)
class Predictor:
    """A function of the latents: linear ``theta . z`` or a sum of basis terms."""

    d: int
    form: str = "linear"
    theta: np.ndarray | None = None
    terms: tuple[Term, ...] = ()

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"predictor needs d >= 1, got {self.d}")
        if self.form == "linear":
            theta = np.array(self.theta, dtype=float)
            if theta.shape != (self.d,):
                raise DimensionMismatch(f"theta must have length d={self.d}, got shape {theta.shape}")
            theta.flags.writeable = False
            object.__setattr__(self, "theta", theta)
        elif self.form == "basis":
            object.__setattr__(self, "terms", tuple(self.terms))
            for t in self.terms:
                if any(not 0 <= i < self.d for i in t.indices):
                    raise DimensionMismatch(f"basis term indices {sorted(t.indices)} outside [0, {self.d})")
        else:
            raise ValueError(f"unknown predictor form {self.form!r}")

    @classmethod
    def linear(cls, theta: Sequence[float]) -> Predictor:
        theta = np.asarray(theta, dtype=float)
        return cls(theta.shape[0], "linear", theta)

    @classmethod
    def basis(cls, d: int, terms: Sequence[Term]) -> Predictor:
        return cls(d, "basis", None, tuple(terms))

    @classmethod
    def from_scm(cls, scm: Scm) -> Predictor:
        """``f_causal``: the deterministic part of the target mechanism."""
        t = scm.target
        if t.form == "linear":
            theta = np.zeros(scm.d)
            theta[list(t.parents)] = t.coefficients
            return cls.linear(theta)
        return cls.basis(scm.d, t.terms)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        z2 = np.atleast_2d(z)
        if z2.shape[1] != self.d:
            raise DimensionMismatch(f"predictor expects {self.d} columns, got {z2.shape[1]}")
        if self.form == "linear":
            out = z2 @ self.theta
        else:
            out = np.zeros(z2.shape[0])
            for t in self.terms:
                out = out + t.evaluate(z2)
        return float(out[0]) if single else out


@dataclass(frozen=True, eq=False)
class PullbackPredictor:
    """``base o psi`` (or ``base o psi^{-1}`` with ``inverse=True``) on latent space."""

    base: Callable
    psi: Mixer
    inverse: bool = False

    @property
    def d(self) -> int:
        return self.psi.d

    def __call__(self, z):
        u = self.psi.unmix(z) if self.inverse else self.psi.mix(z)
        return self.base(u)


@dataclass(frozen=True, eq=False)
class ComposedPredictor:
    """``h(x) = f(g^{-1}(x))`` on observations; raises NotInImage off ``Im(g)``."""

    predictor: Callable
    unmixer: Mixer

    def __call__(self, x):
        return self.predictor(self.unmixer.unmix(x))


AnyPredictor = Union[Predictor, PullbackPredictor, ComposedPredictor]


@dataclass(frozen=True)
class RiskReport:
    per_env_risk: tuple[float, ...]
    worst_case: float
    argmax_env: int
    noise_floor: float
    mode: str
    labels: tuple[str, ...]
    a_max: float
    n: int = 0
    seed: int = 0
    stderr: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n": self.n,
            "seed": self.seed,
            "a_max": self.a_max,
            "noise_floor": self.noise_floor,
            "worst_case": self.worst_case,
            "argmax_env": self.argmax_env,
            "argmax_label": self.labels[self.argmax_env],
            "per_env_risk": dict(zip(self.labels, self.per_env_risk)),
            "stderr": list(self.stderr),
        }

    def csv_lines(self) -> list[str]:
        lines = ["env_label,risk"]
        lines += [f"{lab},{r!r}" for lab, r in zip(self.labels, self.per_env_risk)]
        lines.append(f"worst_case,{self.worst_case!r}")
        return lines


@dataclass(frozen=True)
class DecompositionReport:
    bias_sq: float
    noise: float
    cross: float
    direct_risk: float
    direct_stderr: float
    n: int
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.bias_sq + self.noise + self.cross)

    def to_dict(self) -> dict:
        return {
            "bias_sq": self.bias_sq,
            "noise": self.noise,
            "cross": self.cross,
            "total": self.total,
            "direct_risk": self.direct_risk,
            "direct_stderr": self.direct_stderr,
            "n": self.n,
        }


def max_workers() -> int:
    """Parallelism cap from ``ICRL_THREADS`` (default 1)."""
    raw = os.environ.get("ICRL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(n, 1)


def _residuals(h: AnyPredictor, data: Dataset, x) -> np.ndarray:
    if isinstance(h, ComposedPredictor):
        if x is None:
            raise ValueError("a composed predictor is evaluated on observations; pass x")
        x = np.asarray(x, dtype=float)
        if x.shape[0] != data.n:
            raise DimensionMismatch(f"x has {x.shape[0]} rows, dataset has {data.n}")
        pred = h(x)
    else:
        pred = h(data.z)
    return data.y - pred


def empirical_risk(h: AnyPredictor, data: Dataset, x=None) -> float:
    """Mean squared residual of ``h`` on ``data`` (observations ``x`` for composed predictors)."""
    r = _residuals(h, data, x)
    return float(np.mean(r**2))


def empirical_risk_stderr(h: AnyPredictor, data: Dataset, x=None) -> tuple[float, float]:
    sq = _residuals(h, data, x) ** 2
    return float(np.mean(sq)), float(np.std(sq, ddof=1) / np.sqrt(sq.size)) if sq.size > 1 else 0.0


def _full_point(scm: Scm, a) -> np.ndarray:
    if isinstance(a, Intervention):
        if not a.is_full(scm.d):
            raise NotFullSupport(
                f"closed-form risk needs every latent intervened; targets are {a.targets}"
            )
        return a.point(scm.d)
    a = np.asarray(a, dtype=float)
    if a.shape != (scm.d,):
        raise DimensionMismatch(f"intervention point must have length {scm.d}")
    return a


def exact_do_risk(f: AnyPredictor, scm: Scm, a, g_causal: Mixer | None = None) -> float:
    """``(f_causal(a) - f(a))**2 + Var(eps_Y)`` under the full do-intervention at ``a``.

    For a composed predictor ``h`` the prediction is ``h(g_causal(a))``.
    """
    a = _full_point(scm, a)
    fc = float(scm.f_causal(a[None, :])[0])
    if isinstance(f, ComposedPredictor):
        if g_causal is None:
            raise ValueError("a composed predictor needs the generating mixer g_causal")
        fa = float(np.asarray(f(g_causal.mix(a[None, :])))[0])
    else:
        fa = float(np.asarray(f(a[None, :]))[0])
    return (fc - fa) ** 2 + scm.noise_variance


def worst_case_risk(
    h: AnyPredictor,
    scm: Scm,
    envs: EnvironmentSet,
    n: int = 0,
    seed: int = 0,
    mode: str = "exact",
    g_causal: Mixer | None = None,
) -> RiskReport:
    """Per-environment risks and their maximum (lowest index wins ties).

    The max over a finite environment set only lower-bounds the supremum over
    all interventions; ``a_max`` is reported so callers know the truncation.
    """
    if isinstance(h, ComposedPredictor) and g_causal is None:
        raise ValueError("a composed predictor needs the generating mixer g_causal")
    if mode == "exact":
        if not envs.full_support:
            raise NotFullSupport("exact mode needs a full-support environment set")
        risks = [exact_do_risk(h, scm, iv, g_causal) for iv in envs.environments]
        errs: list[float] = []
    elif mode == "monte_carlo":
        if n < 2:
            raise ValueError("Monte-Carlo mode needs n >= 2 samples per environment")

        def one(i: int) -> tuple[float, float]:
            data = sample_environment(scm, envs, i, n, seed)
            x = g_causal.mix(data.z) if isinstance(h, ComposedPredictor) else None
            return empirical_risk_stderr(h, data, x)

        workers = min(max_workers(), len(envs))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(one, range(len(envs))))
        else:
            results = [one(i) for i in range(len(envs))]
        risks = [r for r, _ in results]
        errs = [e for _, e in results]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    k = int(np.argmax(risks))
    return RiskReport(
        per_env_risk=tuple(float(r) for r in risks),
        worst_case=float(risks[k]),
        argmax_env=k,
        noise_floor=scm.noise_variance,
        mode=mode,
        labels=envs.labels,
        a_max=envs.a_max,
        n=n if mode == "monte_carlo" else 0,
        seed=seed if mode == "monte_carlo" else 0,
        stderr=tuple(errs),
    )


def decomposition_diagnostics(f: AnyPredictor, scm: Scm, env: Intervention, n: int, seed: int) -> DecompositionReport:
    """Split ``E[(Y - f(Z))^2]`` into bias, noise and cross terms under a full do.

    The bias term is exact (``Z`` is constant); noise and cross terms are
    Monte-Carlo averages over the stored ``eps_Y`` draws, and ``direct_risk``
    is estimated separately from the sampled ``y``.
    """
    a = _full_point(scm, env)
    data = sample(apply_intervention(scm, env), n, seed)
    gap = float(scm.f_causal(a[None, :])[0]) - float(np.asarray(f(a[None, :]))[0])
    eps = data.noise[:, scm.d]
    noise = float(np.mean(eps**2)) + 0.0
    cross = 2.0 * gap * float(np.mean(eps)) + 0.0
    direct, direct_err = empirical_risk_stderr(f, data)
    return DecompositionReport(gap**2, noise, cross, direct, direct_err, n)


def _box_points(box, d: int, n_points: int, seed: int, include_corners: bool) -> np.ndarray:
    lo, hi = box
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (d,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (d,))
    pts = make_rng(seed).uniform(lo, hi, size=(n_points, d))
    if include_corners and d <= 16:
        bits = (np.arange(2**d)[:, None] >> np.arange(d)) & 1
        pts = np.vstack([pts, np.where(bits == 1, hi, lo)])
    return pts


def image_restricted_equality(
    h1: ComposedPredictor,
    h2: ComposedPredictor,
    g_ref: Mixer,
    box,
    n_points: int,
    seed: int,
    include_corners: bool = True,
) -> float:
    """Max ``|h1(x) - h2(x)|`` over ``x = g_ref(z)``, ``z`` uniform in ``box`` plus its corners.

    ``box`` is ``(lo, hi)`` with scalar or per-coordinate bounds.
    """
    z = _box_points(box, g_ref.d, n_points, seed, include_corners)
    x = g_ref.mix(z)
    return float(np.max(np.abs(np.asarray(h1(x)) - np.asarray(h2(x)))))

"""Scenario files, the check runner, the pooled linear baseline and report output."""

from __future__ import annotations

import hashlib
import importlib.resources
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import __version__
from .counterexample import demonstrate_non_identifiability, free_subspace_witness, theorem1_pair, theorem2_psi
from .errors import IcrlError, IoError, ParseError, RankDeficient, SchemaError, ValidationError
from .identifiability import TOL_CORR, TOL_RATIO, check_disentangled
from .mixing import (
    FlowMixer,
    LinearMixer,
    Mixer,
    ReparamMap,
    identity,
    mixer_from_dict,
    random_flow,
    signed_power_tail,
)
from .risk import ComposedPredictor, Predictor, worst_case_risk
from .scm import (
    Dataset,
    EnvironmentSet,
    Scm,
    Term,
    environments_from_dict,
    make_env_grid,
    make_env_random_box,
    make_rng,
    sample_environment,
    scm_from_dict,
)

log = logging.getLogger("icrl")

CHECK_ORDER = ("lemma1", "lemma2", "theorem1", "theorem2", "disentangle", "linear_fit")
FULL_SUPPORT_CHECKS = ("lemma1", "lemma2", "theorem1", "theorem2", "linear_fit")

DEFAULT_TOLERANCES = {
    "exact_risk": 1e-12,
    "risk_gap": 1e-10,
    "linearity": 1e-9,
    "tol_corr": TOL_CORR,
    "tol_ratio": TOL_RATIO,
    "stderr_mult": 4.0,
    "residual_var_rel": 0.05,
    "perturbation": 0.1,
    "alt_exponent": 5.0,
}

_NUM = {"type": "number"}
_MECH = {
    "type": "object",
    "required": ["parents", "form", "coefficients"],
    "additionalProperties": False,
    "properties": {
        "parents": {"type": "array", "items": {"type": "integer"}},
        "form": {"enum": ["linear", "basis"]},
        "coefficients": {"type": "array", "items": _NUM},
        "terms": {"type": "array", "items": {"type": "object"}},
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"family": {"enum": ["gaussian", "uniform", "laplace"]}, "variance": _NUM},
        },
    },
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["version", "scm", "mixer", "envs", "n", "seed", "checks"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": "1"},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "n": {"type": "integer"},
        "mode": {"enum": ["exact", "monte_carlo"]},
        "scm": {
            "type": "object",
            "required": ["latent", "target"],
            "additionalProperties": False,
            "properties": {
                "version": {"const": "1"},
                "d": {"type": "integer"},
                "latent": {"type": "array", "items": _MECH, "minItems": 1},
                "target": _MECH,
            },
        },
        "mixer": {"type": "object", "required": ["type"]},
        "psi": {"type": ["object", "null"], "required": ["type"]},
        "envs": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["type", "a_max", "k"],
                    "additionalProperties": False,
                    "properties": {"type": {"const": "grid"}, "a_max": _NUM, "k": {"type": "integer"}},
                },
                {
                    "type": "object",
                    "required": ["type", "a_max", "count", "seed"],
                    "additionalProperties": False,
                    "properties": {
                        "type": {"const": "random_box"},
                        "a_max": _NUM,
                        "count": {"type": "integer"},
                        "seed": {"type": "integer", "minimum": 0},
                    },
                },
                {
                    "type": "object",
                    "required": ["type", "environments"],
                    "additionalProperties": False,
                    "properties": {
                        "type": {"const": "explicit"},
                        "environments": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "object",
                                "required": ["targets", "values"],
                                "additionalProperties": False,
                                "properties": {
                                    "label": {"type": "string"},
                                    "targets": {"type": "array", "items": {"type": "integer"}},
                                    "values": {"type": "array", "items": _NUM},
                                },
                            },
                        },
                    },
                },
            ]
        },
        "checks": {"type": "array", "items": {"enum": list(CHECK_ORDER)}, "uniqueItems": True},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {**{k: _NUM for k in DEFAULT_TOLERANCES}, "expect_disentangled": {"type": "boolean"}},
        },
    },
}


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    scm: Scm
    mixer: Mixer
    envs: EnvironmentSet
    n: int
    seed: int
    checks: tuple[str, ...]
    psi: ReparamMap | None
    mode: str
    tolerances: dict
    expect_disentangled: bool
    document: dict = field(repr=False)

    @property
    def digest(self) -> str:
        canon = json.dumps(self.document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


class CheckError(IcrlError):
    """A module error raised while executing a named check."""

    def __init__(self, check: str, cause: Exception):
        super().__init__(f"[{check}] {type(cause).__name__}: {cause}")
        self.check = check


def _build_mixer(spec: dict, d: int) -> Mixer:
    kind = spec["type"]
    if kind == "identity":
        return identity(int(spec.get("d", d)))
    if kind == "random_flow":
        return random_flow(int(spec.get("d", d)), make_rng(int(spec["seed"])), int(spec.get("n_blocks", 2)), spec.get("p"))
    return mixer_from_dict(spec)


def _build_psi(spec: dict, d: int) -> ReparamMap:
    kind = spec["type"]
    if kind == "cube_tail":
        return signed_power_tail(int(spec.get("d", d)), 3.0)
    if kind == "signed_power_tail":
        return signed_power_tail(int(spec.get("d", d)), float(spec["exponent"]))
    if kind == "theorem2":
        return theorem2_psi(spec["theta"])
    m = _build_mixer(spec, d)
    if not isinstance(m, ReparamMap):
        raise ValidationError("psi must be a square reparametrization (no embedding)")
    return m


def _build_envs(spec: dict, d: int) -> EnvironmentSet:
    kind = spec["type"]
    if kind == "grid":
        return make_env_grid(d, float(spec["a_max"]), int(spec["k"]))
    if kind == "random_box":
        return make_env_random_box(d, float(spec["a_max"]), int(spec["count"]), int(spec["seed"]))
    return environments_from_dict({"d": d, "environments": spec["environments"]})


def _is_linear_mixer(m: Mixer) -> bool:
    return isinstance(m, LinearMixer) or (isinstance(m, FlowMixer) and not m.layers)


def scenario_from_dict(doc: Any, source: str = "<scenario>") -> Scenario:
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in e.absolute_path)
        raise SchemaError(f"{source}: at {where}: {e.message}") from None
    try:
        scm = scm_from_dict(doc["scm"])
        mixer = _build_mixer(doc["mixer"], scm.d)
        psi = None if doc.get("psi") is None else _build_psi(doc["psi"], scm.d)
    except (ValueError, KeyError, TypeError) as e:
        raise ValidationError(f"{source}: {type(e).__name__}: {e}") from None
    if doc["n"] < 1:
        raise ValidationError(f"{source}: n must be >= 1, got {doc['n']}")
    if mixer.d != scm.d:
        raise ValidationError(f"{source}: dimension clash: mixer d={mixer.d} but scm d={scm.d}")
    if psi is not None and psi.d != scm.d:
        raise ValidationError(f"{source}: dimension clash: psi d={psi.d} but scm d={scm.d}")
    try:
        envs = _build_envs(doc["envs"], scm.d)
    except (ValueError, KeyError) as e:
        raise ValidationError(f"{source}: environments: {e}") from None
    checks = tuple(c for c in CHECK_ORDER if c in doc["checks"])
    for c in checks:
        if c in FULL_SUPPORT_CHECKS and not envs.full_support:
            raise ValidationError(f"{source}: {c} requires full-support environments")
    mode = doc.get("mode", "exact" if envs.full_support else "monte_carlo")
    if mode == "exact" and not envs.full_support:
        raise ValidationError(f"{source}: exact mode requires full-support environments")
    if "theorem1" in checks and psi is None:
        raise ValidationError(f"{source}: theorem1 requires a psi reparametrization")
    if "theorem2" in checks:
        theta = Predictor.from_scm(scm).theta
        if scm.target.form != "linear" or scm.d < 2 or not np.any(theta):
            raise ValidationError(f"{source}: theorem2 requires a nonzero linear target and d >= 2")
    if "linear_fit" in checks and not _is_linear_mixer(mixer):
        raise ValidationError(f"{source}: linear_fit requires a linear mixer")
    tol = dict(DEFAULT_TOLERANCES)
    user_tol = dict(doc.get("tolerances", {}))
    expect = bool(user_tol.pop("expect_disentangled", psi is None or not psi.layers))
    tol.update(user_tol)
    return Scenario(
        name=doc.get("name", Path(source).stem),
        scm=scm,
        mixer=mixer,
        envs=envs,
        n=int(doc["n"]),
        seed=int(doc["seed"]),
        checks=checks,
        psi=psi,
        mode=mode,
        tolerances=tol,
        expect_disentangled=expect,
        document=doc,
    )


def load_scenario(path: str | Path, seed: int | None = None) -> Scenario:
    """Parse and fully validate a scenario file; ``seed`` overrides the file's seed."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise IoError(f"{path}: {e.strerror or e}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from None
    if seed is not None and isinstance(doc, dict):
        doc["seed"] = int(seed)
    return scenario_from_dict(doc, str(path))


def bundled_scenario(name: str = "chain2_theorem1") -> Path:
    """Path of a scenario file shipped with the package."""
    path = Path(str(importlib.resources.files("icrl") / "scenarios" / f"{name}.json"))
    if not path.is_file():
        raise IoError(f"no bundled scenario named {name!r}")
    return path


# --- pooled linear baseline ----------------------------------------------


@dataclass(frozen=True)
class PooledFitReport:
    beta: np.ndarray
    intercept: float
    beta_stderr: np.ndarray
    residual_variance: float
    rank: int
    n_total: int
    env_points: np.ndarray
    env_predictions: np.ndarray
    env_pred_stderr: np.ndarray
    env_mean_y: np.ndarray
    misfit: bool
    theta_hat: np.ndarray | None
    g_inv_hat: np.ndarray | None
    caveat: str

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "intercept": self.intercept,
            "beta_stderr": self.beta_stderr.tolist(),
            "residual_variance": self.residual_variance,
            "rank": self.rank,
            "n_total": self.n_total,
            "misfit": self.misfit,
            "theta_hat": None if self.theta_hat is None else self.theta_hat.tolist(),
            "g_inv_hat": None if self.g_inv_hat is None else self.g_inv_hat.tolist(),
            "caveat": self.caveat,
        }


NON_IDENTIFIABILITY_CAVEAT = (
    "beta determines only the composition h = f o g^-1 on the observed image; "
    "theta and G are not recovered separately (any invertible reparametrization fits equally well)"
)


def fit_pooled_linear(datasets: list[Dataset], xs: list[np.ndarray], linear_mixer: bool = True) -> PooledFitReport:
    """Least-squares fit of ``y`` on ``[x, 1]`` pooled over environments.

    With ``linear_mixer`` set, a representative factorization is also
    returned: ``g_inv_hat`` projects onto the top-``d`` right singular
    directions of the pooled observations and ``theta_hat`` is ``beta`` in
    those coordinates.  It is one member of the solution class, nothing more.
    """
    if not datasets or len(datasets) != len(xs):
        raise ValueError("need one observation matrix per dataset")
    d = datasets[0].z.shape[1]
    xs = [np.atleast_2d(np.asarray(x, dtype=float)) for x in xs]
    points = np.array([x.mean(axis=0) for x in xs])
    spread = points[1:] - points[0]
    affine_rank = int(np.linalg.matrix_rank(spread)) if len(points) > 1 else 0
    if affine_rank < d:
        raise RankDeficient(
            f"intervention points span an affine space of dimension {affine_rank} < d={d}; "
            f"need at least d + 1 = {d + 1} affinely independent environments"
        )
    X = np.vstack(xs)
    y = np.concatenate([ds.y for ds in datasets])
    n_total, p = X.shape
    design = np.hstack([X, np.ones((n_total, 1))])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = max(n_total - int(rank), 1)
    s2 = float(resid @ resid / dof)
    cov = s2 * np.linalg.pinv(design.T @ design)
    tilde = np.hstack([points, np.ones((len(points), 1))])
    preds = tilde @ coef
    pred_se = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", tilde, cov, tilde), 0.0))
    mean_y = np.array([ds.y.mean() for ds in datasets])
    counts = np.array([ds.n for ds in datasets])
    misfit = bool(np.any(np.abs(mean_y - preds) > 4.0 * np.sqrt(s2 / counts + pred_se**2)))
    theta_hat = g_inv_hat = None
    if linear_mixer:
        _, _, vt = np.linalg.svd(X, full_matrices=False)
        g_inv_hat = vt[:d]
        theta_hat = g_inv_hat @ coef[:p]
    return PooledFitReport(
        beta=coef[:p],
        intercept=float(coef[p]),
        beta_stderr=np.sqrt(np.maximum(np.diag(cov)[:p], 0.0)),
        residual_variance=s2,
        rank=int(rank),
        n_total=n_total,
        env_points=points,
        env_predictions=preds,
        env_pred_stderr=pred_se,
        env_mean_y=mean_y,
        misfit=misfit,
        theta_hat=theta_hat,
        g_inv_hat=g_inv_hat,
        caveat=NON_IDENTIFIABILITY_CAVEAT,
    )


# --- running checks --------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    primary_metric: float
    tolerance: float
    metrics: dict = field(default_factory=dict)
    plot_header: list[str] | None = None
    plot_rows: list[list[float]] | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "primary_metric": self.primary_metric,
            "tolerance": self.tolerance,
            "metrics": self.metrics,
        }


@dataclass
class RunReport:
    scenario_name: str
    scenario_digest: str
    seed: int
    checks: list[CheckResult]
    wall_clock_seconds: float
    tool_version: str = __version__

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "tool": "icrl",
            "tool_version": self.tool_version,
            "scenario": self.scenario_name,
            "scenario_digest": self.scenario_digest,
            "seed": self.seed,
            "all_passed": self.all_passed,
            "checks": [c.to_dict() for c in self.checks],
            "wall_clock_seconds": self.wall_clock_seconds,
        }


def _perturbed(f: Predictor, delta: float) -> Predictor:
    """``f(z) + delta * z_1``."""
    if f.form == "linear":
        theta = f.theta.copy()
        theta[0] += delta
        return Predictor.linear(theta)
    return Predictor.basis(f.d, f.terms + (Term(delta, ((0, 1),)),))


def _risk_plot(s: Scenario, per_env: tuple[float, ...]) -> tuple[list[str], list[list[float]]]:
    pts = s.envs.points()
    header = [f"a{i + 1}" for i in range(s.scm.d)] + ["risk"]
    return header, [list(map(float, a)) + [r] for a, r in zip(pts, per_env)]


def _risk_floor_check(s: Scenario, name: str, composed: bool) -> CheckResult:
    f_c = Predictor.from_scm(s.scm)
    f_p = _perturbed(f_c, s.tolerances["perturbation"])
    if composed:
        h, h_p, g = ComposedPredictor(f_c, s.mixer), ComposedPredictor(f_p, s.mixer), s.mixer
    else:
        h, h_p, g = f_c, f_p, None
    rep = worst_case_risk(h, s.scm, s.envs, s.n, s.seed, s.mode, g)
    rep_p = worst_case_risk(h_p, s.scm, s.envs, s.n, s.seed, s.mode, g)
    floor = rep.noise_floor
    pts = s.envs.points()
    gaps = (s.scm.f_causal(pts) - f_p(pts)) ** 2
    witness = int(np.argmax(gaps))
    if s.mode == "exact":
        tol = s.tolerances["exact_risk" if name == "lemma1" else "risk_gap"]
        metric = float(max(abs(r - floor) for r in rep.per_env_risk))
        strict = rep_p.worst_case >= floor + float(gaps[witness]) - tol
        passed = metric <= tol and strict
    else:
        tol = s.tolerances["stderr_mult"]
        z = []
        for r, e in zip(rep.per_env_risk, rep.stderr):
            if e > 0:
                z.append(abs(r - floor) / e)
            else:
                z.append(0.0 if r == floor else math.inf)
        metric = float(max(z))
        strict = rep_p.worst_case > rep.worst_case
        passed = metric <= tol and strict
    header, rows = _risk_plot(s, rep.per_env_risk)
    return CheckResult(
        name,
        bool(passed),
        metric,
        tol,
        {
            "risk": rep.to_dict(),
            "perturbed_worst_case": rep_p.worst_case,
            "perturbation_witness_env": s.envs.labels[witness],
            "perturbation_closed_form_gap": float(gaps[witness]),
            "strictness_holds": bool(strict),
        },
        header,
        rows,
    )


def _pool_latents(s: Scenario) -> np.ndarray:
    return np.vstack([sample_environment(s.scm, s.envs, i, s.n, s.seed).z for i in range(len(s.envs))])


def _check_theorem1(s: Scenario) -> CheckResult:
    rep = demonstrate_non_identifiability(
        s.scm, s.mixer, s.psi, s.envs, s.n, s.seed, "theorem1", s.mode, s.tolerances["risk_gap"]
    )
    return CheckResult("theorem1", rep.exhibited, rep.max_env_gap, rep.tol_risk, rep.to_dict())


def _check_theorem2(s: Scenario) -> CheckResult:
    theta = Predictor.from_scm(s.scm).theta
    psi = theorem2_psi(theta)
    tol_lin = s.tolerances["linearity"]
    rep = demonstrate_non_identifiability(
        s.scm, s.mixer, psi, s.envs, s.n, s.seed, "theorem2", s.mode, s.tolerances["risk_gap"]
    )
    psi_a, psi_b = free_subspace_witness(theta, s.tolerances["alt_exponent"])
    a_max = s.envs.a_max or 1.0
    z = make_rng(s.seed).uniform(-a_max, a_max, size=(1000, s.scm.d))
    fa, fb = psi_a.mix(z) @ theta, psi_b.mix(z) @ theta
    f_gap = float(np.max(np.abs(fa - fb)))
    psi_gap = float(np.max(np.abs(psi_a.mix(z) - psi_b.mix(z))))
    f_lin = rep.f_hat_linearity
    passed = (
        rep.exhibited
        and f_lin is not None
        and f_lin.max_abs_residual <= tol_lin
        and not rep.psi_linearity.linear
        and f_gap <= tol_lin * max(1.0, float(np.max(np.abs(fa))))
        and psi_gap > 0
    )
    metrics = rep.to_dict()
    metrics.update({"witness_f_hat_gap": f_gap, "witness_psi_gap": psi_gap, "norm_theta": float(np.linalg.norm(theta))})
    return CheckResult("theorem2", bool(passed), f_lin.max_abs_residual, tol_lin, metrics)


def _check_disentangle(s: Scenario) -> CheckResult:
    psi = s.psi if s.psi is not None else identity(s.scm.d)
    pair = theorem1_pair(s.scm, s.mixer, psi)
    z = _pool_latents(s)
    z_hat = pair.g_hat.unmix(s.mixer.mix(z))
    rep = check_disentangled(z_hat, z, s.tolerances["tol_corr"], s.tolerances["tol_ratio"])
    metrics = rep.to_dict()
    metrics["expected_verdict"] = s.expect_disentangled
    return CheckResult("disentangle", rep.verdict == s.expect_disentangled, rep.mcc, s.tolerances["tol_corr"], metrics)


def _check_linear_fit(s: Scenario) -> CheckResult:
    data = [sample_environment(s.scm, s.envs, i, s.n, s.seed) for i in range(len(s.envs))]
    xs = [s.mixer.mix(ds.z) for ds in data]
    fit = fit_pooled_linear(data, xs, linear_mixer=True)
    truth = s.scm.f_causal(s.envs.points())
    z_comp = np.abs(fit.env_predictions - truth) / np.maximum(fit.env_pred_stderr, 1e-300)
    metric = float(np.max(z_comp))
    var = s.scm.noise_variance
    rel = abs(fit.residual_variance - var) / var if var > 0 else abs(fit.residual_variance)
    passed = metric <= s.tolerances["stderr_mult"] and rel <= s.tolerances["residual_var_rel"]
    metrics = fit.to_dict()
    metrics.update({"residual_variance_rel_error": rel, "noise_variance": var, "max_composition_z": metric})
    header = [f"a{i + 1}" for i in range(s.scm.d)] + ["prediction", "f_causal"]
    rows = [list(map(float, a)) + [float(p), float(t)] for a, p, t in zip(s.envs.points(), fit.env_predictions, truth)]
    return CheckResult("linear_fit", bool(passed), metric, s.tolerances["stderr_mult"], metrics, header, rows)


_CHECKS = {
    "lemma1": lambda s: _risk_floor_check(s, "lemma1", composed=False),
    "lemma2": lambda s: _risk_floor_check(s, "lemma2", composed=True),
    "theorem1": _check_theorem1,
    "theorem2": _check_theorem2,
    "disentangle": _check_disentangle,
    "linear_fit": _check_linear_fit,
}


def run_scenario(s: Scenario) -> RunReport:
    """Run the enabled checks in the fixed order; deterministic given the scenario."""
    t0 = time.perf_counter()
    results = []
    for name in CHECK_ORDER:
        if name not in s.checks:
            continue
        log.info("running check %s", name)
        try:
            res = _CHECKS[name](s)
        except IcrlError as e:
            raise CheckError(name, e) from e
        except (ValueError, ArithmeticError) as e:
            raise CheckError(name, e) from e
        log.info("  %s: %s (metric %.3g, tol %.3g)", name, "pass" if res.passed else "FAIL", res.primary_metric, res.tolerance)
        results.append(res)
    return RunReport(s.name, s.digest, s.seed, results, time.perf_counter() - t0)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def _csv_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_lines(path: Path, lines: list[str]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_report(r: RunReport, out_dir: str | Path) -> list[Path]:
    """Write ``report.json``, ``summary.csv`` and one ``plotdata_<check>.csv`` per check with plot data."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "report.json", out / "summary.csv"]
        paths[0].write_text(json.dumps(_jsonable(r.to_dict()), indent=2) + "\n")
        summary = ["name,pass,primary_metric,tolerance"]
        summary += [
            ",".join(_csv_cell(v) for v in (c.name, c.passed, float(c.primary_metric), float(c.tolerance)))
            for c in r.checks
        ]
        _write_lines(paths[1], summary)
        for c in r.checks:
            if c.plot_header is None:
                continue
            p = out / f"plotdata_{c.name}.csv"
            _write_lines(p, [",".join(c.plot_header)] + [",".join(_csv_cell(float(v)) for v in row) for row in c.plot_rows])
            paths.append(p)
    except OSError as e:
        raise IoError(f"{e.filename or out}: {e.strerror or e}") from None
    return paths

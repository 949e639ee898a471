"""Explicit solution pairs that are risk-equivalent to the causal one but not disentangled.

Given an invertible ``psi`` of latent space, ``(f_causal o psi^{-1}, g_causal o psi^{-1})``
reproduces ``h_causal = f_causal o g_causal^{-1}`` exactly, so no robust-risk
criterion can tell the two apart.  For linear ``f_causal = theta . z`` a
nonlinear ``psi`` even keeps the predictor linear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, DimensionTooSmall, ExponentCollision
from .identifiability import DisentanglementReport, LinearityReport, check_disentangled, linearity_test
from .mixing import (
    Mixer,
    OrthogonalLayer,
    ReparamMap,
    compose,
    householder_to_e1,
    signed_power_tail,
)
from .risk import ComposedPredictor, Predictor, PullbackPredictor, RiskReport, worst_case_risk
from .scm import EnvironmentSet, Scm, sample_environment

PROVENANCES = ("theorem1", "theorem2", "identity")


@dataclass(frozen=True, eq=False)
class SolutionPair:
    f_hat: Callable
    g_hat: Mixer
    psi: ReparamMap
    provenance: str

    def composed(self) -> ComposedPredictor:
        return ComposedPredictor(self.f_hat, self.g_hat)


def _check_dims(scm: Scm, g_causal: Mixer, psi: ReparamMap) -> None:
    if not (scm.d == g_causal.d == psi.d):
        raise DimensionMismatch(f"scm d={scm.d}, g_causal d={g_causal.d}, psi d={psi.d}")
    if psi.embedding is not None:
        raise DimensionMismatch("psi must be a square reparametrization")


def theorem1_pair(scm: Scm, g_causal: Mixer, psi: ReparamMap) -> SolutionPair:
    """``f_hat = f_causal o psi^{-1}`` and ``g_hat^{-1} = psi o g_causal^{-1}``."""
    _check_dims(scm, g_causal, psi)
    f_c = Predictor.from_scm(scm)
    if not psi.layers:
        return SolutionPair(f_c, g_causal, psi, "identity")
    return SolutionPair(PullbackPredictor(f_c, psi, inverse=True), compose(g_causal, psi.inverse()), psi, "theorem1")


def theorem2_pair(scm: Scm, g_causal: Mixer, psi: ReparamMap) -> SolutionPair:
    """``f_hat = f_causal o psi`` and ``g_hat = g_causal o psi``."""
    _check_dims(scm, g_causal, psi)
    f_c = Predictor.from_scm(scm)
    if not psi.layers:
        return SolutionPair(f_c, g_causal, psi, "identity")
    return SolutionPair(PullbackPredictor(f_c, psi), compose(g_causal, psi), psi, "theorem2")


def _frame_psi(theta, tail: ReparamMap) -> ReparamMap:
    a = householder_to_e1(theta)
    if np.array_equal(a, np.eye(len(a))):
        return tail
    return ReparamMap(tail.d, tail.layers + (OrthogonalLayer(a.T),))


def theorem2_psi(theta) -> ReparamMap:
    """``psi = A^T o psi0`` with ``A theta = ||theta|| e_1`` and ``psi0`` the cube tail.

    Then ``theta . psi(z) = ||theta|| z_1`` for every ``z``: the pulled-back
    predictor is linear although ``psi`` is not.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.shape[0] < 2:
        raise DimensionTooSmall(f"need d >= 2, got theta of shape {theta.shape}")
    return _frame_psi(theta, signed_power_tail(theta.shape[0], 3.0))


def free_subspace_witness(theta, alt_exponent: float) -> tuple[ReparamMap, ReparamMap]:
    """Two different maps that both make ``theta . psi(z)`` equal ``||theta|| z_1``."""
    theta = np.asarray(theta, dtype=float)
    if float(alt_exponent) == 3.0:
        raise ExponentCollision("alt_exponent must differ from 3")
    if alt_exponent <= 0:
        raise ValueError("alt_exponent must be positive")
    psi_a = theorem2_psi(theta)
    psi_b = _frame_psi(theta, signed_power_tail(theta.shape[0], alt_exponent))
    return psi_a, psi_b


@dataclass(frozen=True)
class NonIdentifiabilityReport:
    construction: str
    risk_causal: RiskReport
    risk_hat: RiskReport
    risk_gap: float
    max_env_gap: float
    disentanglement: DisentanglementReport
    psi_linearity: LinearityReport
    f_hat_linearity: LinearityReport | None
    tol_risk: float

    @property
    def risks_match(self) -> bool:
        return self.max_env_gap <= self.tol_risk

    @property
    def exhibited(self) -> bool:
        """Risk-equivalent to the causal pair yet not disentangled."""
        return self.risks_match and not self.disentanglement.verdict

    def to_dict(self) -> dict:
        return {
            "construction": self.construction,
            "worst_case_causal": self.risk_causal.worst_case,
            "worst_case_hat": self.risk_hat.worst_case,
            "risk_gap": self.risk_gap,
            "max_env_gap": self.max_env_gap,
            "tol_risk": self.tol_risk,
            "risks_match": self.risks_match,
            "disentanglement": self.disentanglement.to_dict(),
            "psi_linearity": self.psi_linearity.to_dict(),
            "f_hat_linearity": None if self.f_hat_linearity is None else self.f_hat_linearity.to_dict(),
            "exhibited": self.exhibited,
        }


def demonstrate_non_identifiability(
    scm: Scm,
    g_causal: Mixer,
    psi: ReparamMap,
    envs: EnvironmentSet,
    n: int,
    seed: int,
    construction: str = "theorem1",
    mode: str = "exact",
    tol_risk: float = 1e-10,
    linearity_points: int = 500,
) -> NonIdentifiabilityReport:
    """Compare the causal pair with the pair built from ``psi``.

    Latents are pooled over ``n`` samples from every environment; ``psi`` (and
    ``f_hat`` when ``f_causal`` is linear) is tested for linearity on
    ``[-a_max, a_max]^d``.
    """
    if construction == "theorem1":
        pair = theorem1_pair(scm, g_causal, psi)
    elif construction == "theorem2":
        pair = theorem2_pair(scm, g_causal, psi)
    else:
        raise ValueError(f"unknown construction {construction!r}")
    h_causal = ComposedPredictor(Predictor.from_scm(scm), g_causal)
    r_causal = worst_case_risk(h_causal, scm, envs, n, seed, mode, g_causal)
    r_hat = worst_case_risk(pair.composed(), scm, envs, n, seed, mode, g_causal)
    env_gap = float(np.max(np.abs(np.subtract(r_causal.per_env_risk, r_hat.per_env_risk))))

    z = np.vstack([sample_environment(scm, envs, i, n, seed).z for i in range(len(envs))])
    z_hat = pair.g_hat.unmix(g_causal.mix(z))
    dis = check_disentangled(z_hat, z)

    half = envs.a_max if envs.a_max > 0 else 1.0
    box = (-half, half)
    psi_lin = linearity_test(psi.mix, scm.d, box, linearity_points, seed)
    f_lin = None
    if scm.target.form == "linear":
        f_lin = linearity_test(pair.f_hat, scm.d, box, linearity_points, seed)
    return NonIdentifiabilityReport(
        construction=construction,
        risk_causal=r_causal,
        risk_hat=r_hat,
        risk_gap=abs(r_causal.worst_case - r_hat.worst_case),
        max_env_gap=env_gap,
        disentanglement=dis,
        psi_linearity=psi_lin,
        f_hat_linearity=f_lin,
        tol_risk=tol_risk,
    )


def summary_text(report: NonIdentifiabilityReport) -> str:
    """Short pass/fail listing for CI logs."""

    def line(ok: bool, msg: str) -> str:
        return f"{'PASS' if ok else 'FAIL'}  {msg}"

    lines = [
        f"construction: {report.construction}",
        line(report.risks_match, f"risk indistinguishable (max per-env gap {report.max_env_gap:.3e} <= {report.tol_risk:g})"),
        line(not report.disentanglement.verdict, f"recovered latents not disentangled (mcc {report.disentanglement.mcc:.6f})"),
        line(not report.psi_linearity.linear, f"psi nonlinear (max residual {report.psi_linearity.max_abs_residual:.3e})"),
    ]
    if report.f_hat_linearity is not None:
        lines.append(
            f"info  f_hat linear: {report.f_hat_linearity.linear} "
            f"(max residual {report.f_hat_linearity.max_abs_residual:.3e})"
        )
    lines.append(line(report.exhibited, "non-identifiability exhibited"))
    return "\n".join(lines) + "\n"

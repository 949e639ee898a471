"""Disentanglement and linearity diagnostics for recovered latents."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateColumn, DimensionMismatch
from .scm import make_rng

EXHAUSTIVE_MAX_D = 6
TOL_CORR = 1e-4
TOL_RATIO = 1e-3
RATIO_MIN_ABS = 1e-8


@dataclass(frozen=True)
class DisentanglementReport:
    verdict: bool
    permutation: tuple[int, ...]
    scales: tuple[float, ...]
    matched_abs_corr: tuple[float, ...]
    ratio_dispersion: tuple[float, ...]
    mcc: float

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "permutation": list(self.permutation),
            "scales": list(self.scales),
            "matched_abs_corr": list(self.matched_abs_corr),
            "ratio_dispersion": list(self.ratio_dispersion),
            "mcc": self.mcc,
        }

    def csv_lines(self) -> list[str]:
        lines = ["coord,pi,scale,abs_corr,ratio_dispersion"]
        for i, (p, s, c, r) in enumerate(
            zip(self.permutation, self.scales, self.matched_abs_corr, self.ratio_dispersion)
        ):
            lines.append(f"{i},{p},{s!r},{c!r},{r!r}")
        lines.append(f"verdict={self.verdict},mcc={self.mcc!r}")
        return lines


@dataclass(frozen=True)
class LinearityReport:
    r_squared: float
    max_abs_residual: float
    coefficients: np.ndarray
    intercept: np.ndarray | float
    component_residuals: tuple[float, ...]
    output_scale: float
    linear: bool

    def to_dict(self) -> dict:
        return {
            "r_squared": self.r_squared,
            "max_abs_residual": self.max_abs_residual,
            "coefficients": np.asarray(self.coefficients).tolist(),
            "intercept": np.asarray(self.intercept).tolist(),
            "component_residuals": list(self.component_residuals),
            "output_scale": self.output_scale,
            "linear": self.linear,
        }


@dataclass(frozen=True)
class LinearFitReport:
    matrix: np.ndarray
    intercept: np.ndarray
    relative_residual: float
    condition: float
    identified: bool

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "intercept": self.intercept.tolist(),
            "relative_residual": self.relative_residual,
            "condition": self.condition,
            "identified": self.identified,
        }


def _check_pair(z_hat, z) -> tuple[np.ndarray, np.ndarray]:
    z_hat = np.asarray(z_hat, dtype=float)
    z = np.asarray(z, dtype=float)
    if z_hat.ndim != 2 or z.ndim != 2 or z_hat.shape != z.shape:
        raise DimensionMismatch(f"z_hat {z_hat.shape} and z {z.shape} must be equal n x d matrices")
    n, d = z.shape
    if n < d + 2:
        raise ValueError(f"need at least d + 2 = {d + 2} rows, got {n}")
    return z_hat, z


def abs_correlation(z_hat, z) -> np.ndarray:
    """``C[i, j] = |corr(z_hat_i, z_j)|``."""
    z_hat, z = _check_pair(z_hat, z)
    out = []
    for name, m in (("z", z), ("z_hat", z_hat)):
        c = m - m.mean(axis=0)
        s = np.sqrt(np.sum(c**2, axis=0))
        flat = np.flatnonzero(s <= 1e-12 * max(1.0, float(np.max(np.abs(m)))))
        if flat.size:
            raise DegenerateColumn(
                f"{name} column(s) {flat.tolist()} have zero variance; pool more diverse environments"
            )
        out.append(c / s)
    zs, hs = out
    return np.clip(np.abs(hs.T @ zs), 0.0, 1.0)


def best_assignment(score: np.ndarray, method: str = "auto") -> tuple[int, ...]:
    """Permutation ``pi`` maximizing ``sum_i score[i, pi[i]]``.

    ``exhaustive`` scans permutations in lexicographic order and keeps the
    first maximum; ``lsa`` uses the Hungarian solver.  ``auto`` is exhaustive
    up to ``d = 6``.
    """
    d = score.shape[0]
    if method == "auto":
        method = "exhaustive" if d <= EXHAUSTIVE_MAX_D else "lsa"
    if method == "lsa":
        _, cols = linear_sum_assignment(score, maximize=True)
        return tuple(int(c) for c in cols)
    if method != "exhaustive":
        raise ValueError(f"unknown assignment method {method!r}")
    rows = np.arange(d)
    best, best_val = None, -np.inf
    for perm in itertools.permutations(range(d)):
        val = score[rows, perm].sum()
        if val > best_val:
            best, best_val = perm, val
    return tuple(best)


def check_disentangled(z_hat, z, tol_corr: float = TOL_CORR, tol_ratio: float = TOL_RATIO) -> DisentanglementReport:
    """Test ``z_hat = D P z`` (no offset) with matched correlations and constant ratios.

    For each recovered coordinate ``i`` matched to true coordinate ``pi[i]``,
    the scale is the median of ``z_hat_i / z_pi[i]`` over rows where the
    denominator is non-negligible and the dispersion is the ratio's median
    absolute deviation relative to that scale.
    """
    corr = abs_correlation(z_hat, z)
    z_hat, z = np.asarray(z_hat, dtype=float), np.asarray(z, dtype=float)
    perm = best_assignment(corr)
    d = z.shape[1]
    scales, disp, matched = [], [], []
    for i in range(d):
        j = perm[i]
        matched.append(float(corr[i, j]))
        keep = np.abs(z[:, j]) > RATIO_MIN_ABS
        if not keep.any():
            scales.append(0.0)
            disp.append(np.inf)
            continue
        ratio = z_hat[keep, i] / z[keep, j]
        s = float(np.median(ratio))
        scales.append(s)
        mad = float(np.median(np.abs(ratio - s)))
        disp.append(mad / abs(s) if s != 0 else np.inf)
    verdict = (
        all(c >= 1 - tol_corr for c in matched)
        and all(r <= tol_ratio for r in disp)
        and all(abs(s) > 0 for s in scales)
    )
    return DisentanglementReport(
        verdict=bool(verdict),
        permutation=perm,
        scales=tuple(scales),
        matched_abs_corr=tuple(matched),
        ratio_dispersion=tuple(disp),
        mcc=float(np.mean(matched)),
    )


def mcc(z_hat, z) -> float:
    """Mean matched absolute Pearson correlation under the optimal assignment."""
    corr = abs_correlation(z_hat, z)
    perm = best_assignment(corr)
    return float(np.mean(corr[np.arange(len(perm)), perm]))


def _box_sample(box, d: int, n_points: int, seed: int) -> np.ndarray:
    lo, hi = box
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (d,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (d,))
    return make_rng(seed).uniform(lo, hi, size=(n_points, d))


def linearity_test(
    fn: Callable,
    d: int,
    box=(-2.0, 2.0),
    n_points: int = 500,
    seed: int = 0,
    tol: float = 1e-9,
) -> LinearityReport:
    """Least-squares affine fit of ``fn`` on points drawn uniformly from ``box``.

    ``fn`` maps an ``n x d`` array to ``n`` values or an ``n x k`` array.  The
    verdict is linear iff the largest absolute residual is at most
    ``tol * max(1, max|fn|)``.  For vector outputs ``r_squared`` is the
    smallest per-component value.
    """
    if n_points < d + 2:
        raise ValueError(f"need at least d + 2 = {d + 2} points")
    z = _box_sample(box, d, n_points, seed)
    out = np.asarray(fn(z), dtype=float)
    vector = out.ndim == 2
    y = out if vector else out[:, None]
    design = np.hstack([z, np.ones((n_points, 1))])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    comp_res = np.max(np.abs(resid), axis=0)
    ss_tot = np.sum((y - y.mean(axis=0)) ** 2, axis=0)
    ss_res = np.sum(resid**2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(ss_tot > 0, 1.0 - ss_res / ss_tot, 1.0)
    r2 = np.clip(r2, 0.0, 1.0)
    scale = max(1.0, float(np.max(np.abs(y))))
    max_res = float(np.max(comp_res))
    slopes, intercept = coef[:d], coef[d]
    return LinearityReport(
        r_squared=float(np.min(r2)),
        max_abs_residual=max_res,
        coefficients=slopes if vector else slopes[:, 0],
        intercept=intercept if vector else float(intercept[0]),
        component_residuals=tuple(float(r) for r in comp_res),
        output_scale=scale,
        linear=max_res <= tol * scale,
    )


def linear_identifiability(z_hat, z, rtol: float = 1e-6, max_condition: float = 1e8) -> LinearFitReport:
    """Fit ``z_hat ~ L z + b``; identified up to a linear map iff the fit is exact and ``L`` invertible."""
    z_hat, z = _check_pair(z_hat, z)
    n, d = z.shape
    zc = z - z.mean(axis=0)
    if np.linalg.matrix_rank(zc) < d:
        raise DegenerateColumn("z columns are jointly degenerate; pool more diverse environments")
    design = np.hstack([z, np.ones((n, 1))])
    coef, *_ = np.linalg.lstsq(design, z_hat, rcond=None)
    resid = z_hat - design @ coef
    spread = np.linalg.norm(z_hat - z_hat.mean(axis=0))
    rel = float(np.linalg.norm(resid) / spread) if spread > 0 else np.inf
    L = coef[:d].T
    cond = float(np.linalg.cond(L))
    return LinearFitReport(
        matrix=L,
        intercept=coef[d],
        relative_residual=rel,
        condition=cond,
        identified=bool(rel <= rtol and cond <= max_condition),
    )

"""Command-line entry point.

Exit codes: 0 when every check passes, 1 when any check fails, 2 on usage,
I/O, parse or validation errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .counterexample import free_subspace_witness, theorem2_psi
from .errors import IcrlError, IoError, ParseError, ValidationError
from .experiment import CheckError, _jsonable, load_scenario, run_scenario, write_report
from .identifiability import TOL_CORR, TOL_RATIO, check_disentangled, linearity_test
from .scm import make_rng, sample_environment, write_dataset_csv

log = logging.getLogger("icrl")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the master seed")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    ap = argparse.ArgumentParser(prog="icrl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="load and validate a scenario file")
    p.add_argument("scenario")

    p = sub.add_parser("run", parents=[common], help="run a scenario and write reports")
    p.add_argument("scenario")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sample", parents=[common], help="sample one environment to CSV")
    p.add_argument("scenario")
    p.add_argument("--env", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("counterexample", parents=[common], help="build and verify the linear-predictor counterexample")
    p.add_argument("--theta", required=True, help="comma-separated coefficients, e.g. 3,4")
    p.add_argument("--alt-exponent", type=float, default=5.0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("disentangle", parents=[common], help="test z_hat = D P z on two CSV matrices")
    p.add_argument("--zhat", required=True)
    p.add_argument("--z", required=True)
    p.add_argument("--tol-corr", type=float, default=TOL_CORR)
    p.add_argument("--tol-ratio", type=float, default=TOL_RATIO)
    return ap


def _clean(v: float) -> str:
    v = round(float(v), 9) + 0.0
    return f"{v:g}"


def _read_matrix(path: str) -> np.ndarray:
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as e:
        raise IoError(f"{path}: {e.strerror or e}") from None
    if not lines:
        raise ParseError(f"{path}: empty file")
    first = lines[0].split(",")
    cols = slice(None)
    try:
        [float(c) for c in first]
    except ValueError:
        if first[:2] == ["env", "row"]:
            cols = slice(2, 2 + sum(c.startswith("z") for c in first))
        lines = lines[1:]
    try:
        rows = [[float(c) for c in ln.split(",")][cols] for ln in lines]
        return np.array(rows, dtype=float)
    except ValueError as e:
        raise ParseError(f"{path}: {e}") from None


def _cmd_validate(args) -> int:
    s = load_scenario(args.scenario, args.seed)
    print(f"{args.scenario}: ok (d={s.scm.d}, {len(s.envs)} environments, checks={list(s.checks)}, digest={s.digest[:12]})")
    return EXIT_OK


def _cmd_run(args) -> int:
    s = load_scenario(args.scenario, args.seed)
    try:
        report = run_scenario(s)
    except CheckError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    paths = write_report(report, args.out)
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  metric={c.primary_metric:.6g}  tol={c.tolerance:g}")
    log.info("wrote %s", ", ".join(str(p) for p in paths))
    return EXIT_OK if report.all_passed else EXIT_FAIL


def _cmd_sample(args) -> int:
    s = load_scenario(args.scenario, args.seed)
    if args.n < 0:
        raise ValidationError("--n must be >= 0")
    data = sample_environment(s.scm, s.envs, args.env, args.n, s.seed)
    try:
        write_dataset_csv(args.out, [data])
    except OSError as e:
        raise IoError(f"{args.out}: {e.strerror or e}") from None
    log.info("wrote %d rows of environment %s to %s", data.n, s.envs.labels[args.env], args.out)
    return EXIT_OK


def _cmd_counterexample(args) -> int:
    try:
        theta = np.array([float(t) for t in args.theta.split(",")])
    except ValueError:
        raise ValidationError(f"--theta must be comma-separated numbers, got {args.theta!r}") from None
    seed = 0 if args.seed is None else args.seed
    d = theta.shape[0]
    psi = theorem2_psi(theta)
    psi_a, psi_b = free_subspace_witness(theta, args.alt_exponent)
    box = (-2.0, 2.0)
    f_lin = linearity_test(lambda z: psi.mix(z) @ theta, d, box, 500, seed)
    psi_lin = linearity_test(psi.mix, d, box, 500, seed)
    z = make_rng(seed).uniform(-2.0, 2.0, size=(1000, d))
    f_gap = float(np.max(np.abs(psi_a.mix(z) @ theta - psi_b.mix(z) @ theta)))
    psi_gap = float(np.max(np.abs(psi_a.mix(z) - psi_b.mix(z))))
    norm = float(np.linalg.norm(theta))
    slope_err = float(np.max(np.abs(f_lin.coefficients - norm * np.eye(d)[0])))

    coefs = ", ".join(_clean(c) for c in f_lin.coefficients)
    checks = [
        ("f_hat linear", f_lin.linear, f"max residual {f_lin.max_abs_residual:.3e}"),
        ("f_hat slope = |theta| e1", slope_err <= 1e-8, f"max error {slope_err:.3e}"),
        ("psi nonlinear", not psi_lin.linear, f"max residual {psi_lin.max_abs_residual:.3e}"),
        ("witnesses give the same f_hat", f_gap <= 1e-9 * max(1.0, 2.0 * norm), f"max gap {f_gap:.3e}"),
        ("witnesses differ pointwise", psi_gap > 0, f"max gap {psi_gap:.3e}"),
    ]
    lines = [
        f"theta = ({', '.join(_clean(t) for t in theta)}), |theta| = {norm:.12g}",
        f"f_hat coefficients: ({coefs}), intercept {_clean(f_lin.intercept)}",
        f"psi linearity: {'linear' if psi_lin.linear else 'nonlinear'}",
    ] + [f"{'PASS' if ok else 'FAIL'}  {name} ({detail})" for name, ok, detail in checks]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            bundle = {
                "theta": theta,
                "psi": psi.to_dict(),
                "psi_alt": psi_b.to_dict(),
                "alt_exponent": args.alt_exponent,
                "f_hat_linearity": f_lin.to_dict(),
                "psi_linearity": psi_lin.to_dict(),
                "witness_f_hat_gap": f_gap,
                "witness_psi_gap": psi_gap,
                "checks": {name: ok for name, ok, _ in checks},
            }
            (out / "counterexample.json").write_text(json.dumps(_jsonable(bundle), indent=2) + "\n")
            (out / "summary.txt").write_text(text)
        except OSError as e:
            raise IoError(f"{out}: {e.strerror or e}") from None
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_FAIL


def _cmd_disentangle(args) -> int:
    z_hat, z = _read_matrix(args.zhat), _read_matrix(args.z)
    try:
        rep = check_disentangled(z_hat, z, args.tol_corr, args.tol_ratio)
    except (IcrlError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    print("\n".join(rep.csv_lines()))
    return EXIT_OK if rep.verdict else EXIT_FAIL


_COMMANDS = {
    "validate": _cmd_validate,
    "run": _cmd_run,
    "sample": _cmd_sample,
    "counterexample": _cmd_counterexample,
    "disentangle": _cmd_disentangle,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logging.basicConfig(format="%(message)s", stream=sys.stderr, force=True,
                        level=logging.WARNING if args.quiet else logging.INFO)
    try:
        return _COMMANDS[args.command](args)
    except (IcrlError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end; every command writes CSV with a ``#`` comment header.

Exit codes: 0 success, 2 invalid input, 3 a numerical check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import shlex
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .circulant import ModelError, identify
from .families import eval_spectrum, fit_theta, make_family
from .fisher import fisher_blocks, fisher_numeric_oracle, g_beta, g_theta, log_det_g_beta
from .montecarlo import RESULT_COLUMNS, compare_priors, config_from_mapping, parse_config_text, sample_dataset
from .priors import PriorSpec, check_superharmonic
from .risk import standard_risk_curves, risk_curve_full, risk_diff_exchangeable_closed_form, RiskCurvePoint, write_risk_csv

EXIT_OK, EXIT_INVALID, EXIT_CHECK_FAILED = 0, 2, 3


class CliError(Exception):
    def __init__(self, flag: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# --- parsing helpers -----------------------------------------------------

def _floats(flag: str, text: str | None) -> np.ndarray | None:
    if text is None:
        return None
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise CliError(flag, f"expected comma-separated numbers, got {text!r}") from None


def _ints(flag: str, text: str | None) -> list[int] | None:
    vals = _floats(flag, text)
    if vals is None:
        return None
    if np.any(vals != np.round(vals)):
        raise CliError(flag, "expected integers")
    return [int(v) for v in vals]


def parse_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise CliError("--grid", f"expected lo:hi:count, got {text!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise CliError("--grid", f"expected lo:hi:count, got {text!r}") from None
    if count < 1:
        raise CliError("--grid", "count must be >= 1")
    return np.linspace(lo, hi, count)


def exponent_priors(args) -> list[PriorSpec] | None:
    """Normalize whichever of --gamma/--c/--t/--a was given to PriorSpecs."""
    for flag, ctor in (("gamma", PriorSpec.from_gamma), ("c", PriorSpec), ("t", PriorSpec.from_t), ("a", PriorSpec.from_a)):
        vals = _floats(f"--{flag}", getattr(args, flag, None))
        if vals is not None:
            if vals.size == 0:
                raise CliError(f"--{flag}", "no values given")
            return [ctor(float(v)) for v in vals]
    return None


def _family(args, p=None):
    try:
        return make_family(args.model, args.p if p is None else p)
    except ModelError as exc:
        raise CliError("--p" if "p must" in str(exc) else "--model", str(exc)) from None


def _theta(args, fam, flag="--theta"):
    theta = _floats(flag, args.theta)
    if theta is None:
        return np.zeros(fam.d)
    if theta.size != fam.d:
        raise CliError(flag, f"expected {fam.d} value(s) for the {fam.name} model with p={fam.p}, got {theta.size}")
    try:
        return fam.check_theta(theta)
    except ModelError as exc:
        raise CliError(flag, str(exc)) from None


def _beta(args, fam):
    beta = _floats("--beta", args.beta)
    if beta is None:
        return np.zeros(fam.p)
    if beta.size != fam.p:
        raise CliError("--beta", f"expected {fam.p} values, got {beta.size}")
    return beta


# --- output --------------------------------------------------------------

def header_lines(argv, extra=()) -> list[str]:
    lines = [f"circcorr {__version__} (kernels: {kernels.BACKEND})", "invocation: circcorr " + shlex.join(argv)]
    return lines + list(extra)


def exponent_header(prior: PriorSpec) -> str:
    return f"exponent: c={prior.c:g} a={prior.a:g} t={prior.t:g} gamma={prior.gamma:g}"


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def write_table(fh, header, columns, rows) -> None:
    for line in header:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)


def read_csv(source) -> tuple[list[str], list[str], list[list[str]]]:
    """Read a CSV written by this tool; returns (comment lines, column names, rows)."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    comments, body = [], []
    for line in text.splitlines():
        (comments if line.startswith("#") else body).append(line)
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    if not rows:
        return [c[1:].strip() for c in comments], [], []
    return [c[1:].strip() for c in comments], rows[0], rows[1:]


def _fmt(x) -> str:
    return repr(float(x))


def _join(values) -> str:
    return ",".join(_fmt(v) for v in np.atleast_1d(values))


# --- commands ------------------------------------------------------------

def cmd_fisher(args, argv):
    fam = _family(args)
    theta = _theta(args, fam)
    fb = fisher_blocks(fam, theta)
    rows = [["g_theta", i + 1, j + 1, _fmt(v)] for (i, j), v in np.ndenumerate(fb.g_theta)]
    rows += [["g_beta", i + 1, j + 1, _fmt(v)] for (i, j), v in np.ndenumerate(fb.g_beta)]
    rows.append(["log_det_g_beta", "", "", _fmt(fb.log_det_g_beta)])
    with _output(args.out) as fh:
        write_table(fh, header_lines(argv, [f"model={fam.name} p={fam.p} theta={_join(theta)}"]), ["block", "i", "j", "value"], rows)
    return EXIT_OK


def cmd_verify_fisher(args, argv):
    fam = _family(args)
    theta, beta = _theta(args, fam), _beta(args, fam)
    oracle = fisher_numeric_oracle(fam, theta, beta)
    spec = eval_spectrum(fam, theta)
    d = fam.d
    gt, gb = g_theta(fam), g_beta(spec)
    dense = np.linalg.slogdet(gb)[1]
    checks = [
        ("g_theta_rel", np.abs(oracle[:d, :d] - gt).max() / np.abs(gt).max(), args.tol_rel),
        ("g_beta_rel", np.abs(oracle[d:, d:] - gb).max() / np.abs(gb).max(), args.tol_rel),
        ("cross_block_abs", np.abs(oracle[:d, d:]).max(), args.tol_cross),
        ("log_det_identity_rel", abs(dense - log_det_g_beta(spec)) / max(1.0, abs(dense)), 1e-8),
    ]
    rows = [[name, _fmt(dev), _fmt(tol), int(dev < tol)] for name, dev, tol in checks]
    with _output(args.out) as fh:
        write_table(fh, header_lines(argv), ["quantity", "max_deviation", "tolerance", "pass"], rows)
    return EXIT_OK if all(r[3] for r in rows) else EXIT_CHECK_FAILED


def cmd_check_superharmonic(args, argv):
    fam = _family(args)
    priors = exponent_priors(args) or [PriorSpec.uniform()]
    if len(priors) != 1:
        raise CliError("--c", "check-superharmonic takes a single exponent")
    prior = priors[0]
    axis = parse_grid(args.grid)
    points = np.array(list(itertools.product(axis, repeat=fam.d)))
    try:
        report = check_superharmonic(fam, prior, PriorSpec.jeffreys(), points, sqrt=args.convention == "sqrt")
    except ModelError as exc:
        raise CliError("--grid", str(exc)) from None
    label = "f = (pi/pi_J)^(1/2)" if report.sqrt_convention else "f = pi/pi_J"
    header = header_lines(argv, [
        f"model={fam.name} p={fam.p}", exponent_header(prior),
        f"convention: {args.convention} ({label}; f = |g_beta|^{report.exponent:g})",
        f"max f_inv_laplacian_f = {report.max_value!r}; violations (>= 0): {len(report.violations)}",
    ])
    cols = [f"theta_{i + 1}" for i in range(fam.d)] + ["f_inv_laplacian_f"]
    rows = [[*map(_fmt, x), _fmt(v)] for x, v in zip(report.points, report.values)]
    with _output(args.out) as fh:
        write_table(fh, header, cols, rows)
    return EXIT_OK if report.superharmonic else EXIT_CHECK_FAILED


def cmd_risk_curve(args, argv):
    n = args.n if args.n is not None else 100
    if n < 1:
        raise CliError("--n", "must be >= 1")
    grid = parse_grid(args.grid) if args.grid else np.linspace(-6.0, 6.0, 241)
    extra = [f"theta grid: {float(grid[0])!r}:{float(grid[-1])!r}:{grid.size}", "risk_diff = risk(pi_J) - risk(pi), leading 1/n^2 term"]
    if args.standard_set:
        rows = standard_risk_curves(n=n, grid=grid)
        extra.append("standard set: p in (2, 3, 10), gamma in (-1/2, -1/4, -1/100)")
    else:
        priors = exponent_priors(args) or [PriorSpec.uniform()]
        p_list = _ints("--p", args.p_list) or [2]
        extra += [exponent_header(prior) for prior in priors]
        rows = []
        for p in p_list:
            fam = _family(args, p)
            for prior in priors:
                if fam.name == "exchangeable":
                    vals = risk_diff_exchangeable_closed_form(p, prior.gamma, grid, n)
                    rows += [RiskCurvePoint(fam.name, p, n, prior.gamma, float(t), float(v)) for t, v in zip(grid, np.atleast_1d(vals))]
                else:
                    direction = _floats("--theta", args.theta)
                    if direction is None or direction.size != fam.d:
                        raise CliError("--theta", f"full model risk curves need a direction of {fam.d} value(s); the grid scales it")
                    try:
                        rows += risk_curve_full(fam, prior, n, [r * direction for r in grid])
                    except ModelError as exc:
                        raise CliError("--grid", str(exc)) from None
    with _output(args.out) as fh:
        write_risk_csv(rows, fh, header_lines(argv, extra))
    return EXIT_OK


def _experiment_config(args):
    mapping = parse_config_text(Path(args.config).read_text()) if args.config else {}
    cli_values = {
        "model": args.model if args.model != "_unset" else None,
        "p": args.p, "n": args.n, "reps": args.reps, "seed": args.seed,
        "chain_length": args.chain_length, "burn_in": args.burn_in, "thin": args.thin,
        "kl_eval_draws": args.kl_draws, "workers": args.workers,
    }
    mapping.update({k: v for k, v in cli_values.items() if v is not None})
    mapping.setdefault("model", "exchangeable")
    fam = _family(argparse.Namespace(model=mapping["model"], p=mapping.get("p", 2)))
    if args.theta is not None:
        mapping["theta"] = _theta(args, fam)
    if args.beta is not None:
        mapping["beta"] = _beta(args, fam)
    for key, flag, size in (("theta", "--theta", fam.d), ("beta", "--beta", fam.p)):
        if key in mapping and np.size(mapping[key]) != size:
            raise CliError(flag, f"expected {size} value(s), got {np.size(mapping[key])}")
    try:
        return config_from_mapping(mapping), mapping
    except (ModelError, ValueError) as exc:
        raise CliError("--config" if args.config else "--reps", str(exc)) from None


def cmd_simulate(args, argv):
    cfg, mapping = _experiment_config(args)
    priors = exponent_priors(args)
    if priors is None and "priors" in mapping:
        priors = [PriorSpec(float(v)) for v in _floats("priors", mapping["priors"])]
    priors = priors or [PriorSpec.uniform()]
    all_priors = [PriorSpec.jeffreys()] + [p for p in priors if p.c != 1.0]
    if len(all_priors) < 2:
        raise CliError("--c", "need a prior other than Jeffreys to compare against")
    res = compare_priors(cfg, all_priors)
    theta0 = ";".join(repr(float(v)) for v in cfg.true_theta)
    fam = cfg.family
    rows = []
    for est in res.estimates:
        rows.append([est.label, _fmt(est.prior.c), fam.p, cfg.n, theta0, est.reps_used, _fmt(est.mean_kl),
                     _fmt(est.std_error), _fmt(est.acceptance_rate), est.excluded])
    base = res.estimates[0]
    for est, dm, ds in zip(res.estimates[1:], res.diff_mean[1:], res.diff_se[1:]):
        rows.append([f"diff(jeffreys-{est.label})", _fmt(est.prior.c), fam.p, cfg.n, theta0, est.reps_used,
                     _fmt(dm), _fmt(ds), _fmt(base.acceptance_rate), est.excluded])
    m = cfg.mcmc
    header = header_lines(argv, [
        f"model={fam.name} p={fam.p} n={cfg.n} reps={cfg.reps} seed={cfg.seed} beta0={_join(cfg.true_beta)}",
        f"mcmc: chain_length={m.chain_length} burn_in={m.burn_in} thin={m.thin} kl_eval_draws={cfg.kl_eval_draws}",
        *(exponent_header(p) for p in all_priors),
    ])
    mode = "a" if args.append and args.out not in (None, "-") and Path(args.out).exists() else "w"
    if mode == "a":
        with open(args.out, "a", encoding="utf-8", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    else:
        with _output(args.out) as fh:
            write_table(fh, header, RESULT_COLUMNS, rows)
    return EXIT_OK


def cmd_sample(args, argv):
    fam = _family(args)
    theta, beta = _theta(args, fam), _beta(args, fam)
    n = args.n if args.n is not None else 100
    if n < 1:
        raise CliError("--n", "must be >= 1")
    from .circulant import CovarianceFactorization, ScaleVector

    f = CovarianceFactorization(ScaleVector(beta), eval_spectrum(fam, theta))
    x = sample_dataset(f, n, np.random.default_rng(args.seed))
    with _output(args.out) as fh:
        write_table(fh, header_lines(argv), [f"x{i + 1}" for i in range(fam.p)], [[_fmt(v) for v in row] for row in x])
    return EXIT_OK


def _read_matrix(path: str) -> np.ndarray:
    try:
        _, cols, rows = read_csv(path)
        data = [cols] + rows if cols and all(_is_number(c) for c in cols) else rows
        m = np.array([[float(v) for v in r] for r in data if r])
        if m.ndim == 2 and m.shape[0] == m.shape[1]:
            return m
        return np.loadtxt(path, comments="#")
    except (OSError, ValueError) as exc:
        raise CliError("--sigma", f"cannot read matrix from {path!r}: {exc}") from None


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def cmd_identify(args, argv):
    sigma = _read_matrix(args.sigma)
    try:
        f = identify(sigma)
    except ModelError as exc:
        raise CliError("--sigma", str(exc)) from None
    rows = [["alpha", i + 1, _fmt(v)] for i, v in enumerate(f.alpha)]
    rows += [["lambda", i + 1, _fmt(v)] for i, v in enumerate(f.spectrum.lam)]
    if args.model != "_unset":
        fam = make_family(args.model, f.dim)
        try:
            rows += [["theta", i + 1, _fmt(v)] for i, v in enumerate(fit_theta(fam, f.spectrum))]
        except ModelError as exc:
            raise CliError("--model", str(exc)) from None
    with _output(args.out) as fh:
        write_table(fh, header_lines(argv), ["name", "index", "value"], rows)
    return EXIT_OK


# --- parser --------------------------------------------------------------

def _add_model(sp, p_required=True):
    sp.add_argument("--model", choices=["full", "exchangeable"], default="exchangeable")
    sp.add_argument("--p", type=int, required=p_required, help="dimension p >= 2")


def _add_exponent(sp):
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--gamma", help="prior pi_J^(4 gamma + 1)")
    g.add_argument("--c", help="prior pi_J^c")
    g.add_argument("--t", help="prior pi_J^(2t + 1)")
    g.add_argument("--a", help="prior pi_J^a")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="circcorr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"circcorr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("fisher", help="print the Fisher metric blocks")
    _add_model(sp)
    sp.add_argument("--theta")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_fisher)

    sp = sub.add_parser("verify-fisher", help="compare closed-form blocks with the trace-formula oracle")
    _add_model(sp)
    sp.add_argument("--theta")
    sp.add_argument("--beta")
    sp.add_argument("--tol-rel", type=float, default=1e-5)
    sp.add_argument("--tol-cross", type=float, default=1e-6)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_verify_fisher)

    sp = sub.add_parser("check-superharmonic", help="evaluate f^-1 Delta f on a theta grid")
    _add_model(sp)
    _add_exponent(sp)
    sp.add_argument("--convention", choices=["ratio", "sqrt"], default="ratio",
                    help="ratio: f = pi/pi_J; sqrt: f = (pi/pi_J)^(1/2)")
    sp.add_argument("--grid", default="-3:3:61", help="lo:hi:count per theta coordinate (product grid)")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_check_superharmonic)

    sp = sub.add_parser("risk-curve", help="asymptotic risk-difference curves (CSV)")
    sp.add_argument("--model", choices=["full", "exchangeable"], default="exchangeable")
    sp.add_argument("--p", dest="p_list", help="comma-separated dimensions")
    _add_exponent(sp)
    sp.add_argument("--theta", help="full model: ray direction scaled by the grid")
    sp.add_argument("--n", type=int)
    sp.add_argument("--grid")
    sp.add_argument("--standard-set", action="store_true", help="all p in (2,3,10) and gamma in (-1/2,-1/4,-1/100)")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_risk_curve)

    sp = sub.add_parser("simulate", help="Monte-Carlo KL risks of Jeffreys vs another prior")
    sp.add_argument("--model", choices=["full", "exchangeable"], default="_unset")
    sp.add_argument("--p", type=int)
    _add_exponent(sp)
    sp.add_argument("--theta")
    sp.add_argument("--beta")
    sp.add_argument("--n", type=int)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--chain-length", type=int)
    sp.add_argument("--burn-in", type=int)
    sp.add_argument("--thin", type=int)
    sp.add_argument("--kl-draws", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--config", help="key=value file; command-line flags take precedence")
    sp.add_argument("--append", action="store_true", help="append rows to an existing --out file")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sample", help="draw a dataset from the model")
    _add_model(sp)
    sp.add_argument("--theta")
    sp.add_argument("--beta")
    sp.add_argument("--n", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("identify", help="recover alpha, lambda (and theta) from a covariance matrix")
    sp.add_argument("--sigma", required=True, help="matrix file (CSV or whitespace-separated)")
    sp.add_argument("--model", choices=["full", "exchangeable"], default="_unset")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_identify)
    return parser


_VALUE_FLAGS = {"--grid", "--theta", "--beta", "--gamma", "--c", "--t", "--a"}


def _attach_values(argv: list[str]) -> list[str]:
    """Rewrite ``--grid -6:6:241`` as ``--grid=-6:6:241`` so argparse does not read it as a flag."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-") and len(argv[i + 1]) > 1 and argv[i + 1][1] in "0123456789.":
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(_attach_values(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except CliError as exc:
        print(f"circcorr: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ModelError, ValueError) as exc:
        print(f"circcorr: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

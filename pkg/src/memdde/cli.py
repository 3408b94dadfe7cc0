"""Command-line front end.

Commands: simulate, analyze, hopf, sweep, certify, verify, audit.  Each
writes a CSV artifact (17 significant digits, LF endings) plus, on the
report paths, a rendered figure; errors also land in errors.csv.  Exit
codes: 0 success, 2 validation failure, 3 numerical failure, 4 I/O
error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import analysis, plots
from .config import ConfigError, ValidationFailure, parse_config
from .core import GammaKernel, UnsupportedKernelError
from .memory import kernel_mass, memory_lipschitz_bound
from .solver import (
    NonConvergenceError,
    SolveConfig,
    cross_validate,
    integrate,
    wellposedness_certificate,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class NumericalFailure(RuntimeError):
    pass


def _fmt(v) -> str:
    if v is None:
        return "nan"
    return f"{float(v):.17g}"


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            cell if isinstance(cell, str) else _fmt(cell) for cell in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_text(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")


def _parse_grid(spec, name):
    try:
        lo, hi, n = spec.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError(f"{name} must be 'lo:hi:count', got {spec!r}") from None
    if n < 1 or hi < lo:
        raise ConfigError(f"invalid grid {spec!r} for {name}")
    return np.linspace(lo, hi, n)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg, args, out):
    traj = integrate(cfg.model, cfg.history, cfg.solve)
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    plots.plot_trajectory(traj, os.path.join(out, "trajectory.png"))
    if traj.blown_up:
        raise NumericalFailure(
            f"blow-up detected at t = {traj.t_end:.6g}; trajectory written")


def cmd_analyze(cfg, args, out):
    rhs = cfg.model.rhs
    r, K_c, alpha = rhs.r, rhs.K_c, rhs.alpha
    beta = cfg.model.kernel.rate if isinstance(cfg.model.kernel, GammaKernel) \
        else None
    if beta is None:
        raise ConfigError("analyze requires a Gamma kernel")
    kappa = 1.0
    eqs = analysis.equilibria(r, K_c, alpha, kappa)
    rows = [("r", r), ("K_c", K_c), ("alpha", alpha), ("beta", beta),
            ("kappa", kappa)]
    for i, x in enumerate(eqs):
        rows.append((f"equilibrium_{i}", x))
    txt = [f"stability analysis (r = {r:g}, K_c = {K_c:g}, alpha = {alpha:g}, "
           f"beta = {beta:g})", "", "equilibria: "
           + ", ".join(f"{x:.12g}" for x in eqs)]
    labelled = []
    if len(eqs) > 1:
        x1 = eqs[1]
        lin = analysis.linearize(r, K_c, alpha, kappa, x1, "eq4-direct")
        lin_p = analysis.linearize(r, K_c, alpha, kappa, x1, "paper-simplified")
        rows += [("a_inst_eq4", lin.a_inst), ("a_inst_paper", lin_p.a_inst)]
        derived = analysis.characteristic_cubic(lin, alpha, beta)
        printed = analysis.paper_cubic(r, alpha, beta)
        for tag, c in (("derived", derived), ("paper", printed)):
            roots = analysis.cubic_roots(c)
            verdict = analysis.routh_hurwitz(c)
            labelled.append((tag, roots))
            rows += [(f"{tag}_A", c.A), (f"{tag}_B", c.B), (f"{tag}_C", c.C),
                     (f"{tag}_rh_verdict", verdict),
                     (f"{tag}_max_re_lambda", max(z.real for z in roots))]
            for j, z in enumerate(roots):
                rows += [(f"{tag}_root{j+1}_re", z.real),
                         (f"{tag}_root{j+1}_im", z.imag)]
            txt += ["", f"{tag} cubic: A = {c.A:.12g}, B = {c.B:.12g}, "
                    f"C = {c.C:.12g}",
                    f"  roots: " + ", ".join(f"{z:.10g}" for z in roots),
                    f"  Routh-Hurwitz verdict: {verdict}"]
    else:
        txt += ["", f"no positive equilibrium (r <= alpha*kappa)"]
    _write_csv(os.path.join(out, "analysis.csv"), ["name", "value"], rows)
    _write_text(os.path.join(out, "analysis.txt"), "\n".join(txt))
    if labelled:
        plots.plot_roots(labelled, os.path.join(out, "analysis.png"))


def cmd_hopf(cfg, args, out):
    rhs = cfg.model.rhs
    r, K_c = rhs.r, rhs.K_c
    if not isinstance(cfg.model.kernel, GammaKernel):
        raise ConfigError("hopf requires a Gamma kernel")
    beta = cfg.model.kernel.rate
    closed = analysis.hopf_closed_form(r, beta)
    numeric = analysis.hopf_threshold_numeric(r, K_c, beta, "derived-eq4")
    paper = analysis.hopf_threshold_numeric(r, K_c, beta, "paper-eq7")
    _write_csv(
        os.path.join(out, "hopf.csv"),
        ["r", "beta", "closed_form_alpha", "closed_form_omega",
         "derived_numeric_alpha", "derived_numeric_omega", "paper_cubic_status"],
        [(r, beta, closed.alpha_H, closed.omega_H,
          numeric.alpha_H, numeric.omega_H, paper.status)])
    plots.plot_hopf_curves(r, beta, os.path.join(out, "hopf.png"))


def cmd_sweep(cfg, args, out):
    rhs = cfg.model.rhs
    beta_grid = _parse_grid(args.beta_grid, "--beta-grid")
    alpha_grid = _parse_grid(args.alpha_grid, "--alpha-grid")
    rows = analysis.sweep(rhs.r, rhs.K_c, beta_grid, alpha_grid,
                          workers=args.workers)
    _write_csv(
        os.path.join(out, "sweep.csv"),
        ["beta", "alpha", "max_re_lambda", "rh_verdict", "alpha_H_closed",
         "alpha_H_numeric"],
        [(row.beta, row.alpha, row.max_re_lambda, row.rh_verdict,
          row.alpha_H_closed, row.alpha_H_numeric) for row in rows])
    plots.plot_sweep(rows, os.path.join(out, "sweep.png"))


def cmd_certify(cfg, args, out):
    if cfg.model.lipschitz is None:
        raise ConfigError("certify requires a [lipschitz] section (L_F, L_x)")
    C_K = memory_lipschitz_bound(cfg.model.kernel,
                                 window=(0.0, cfg.solve.t_end))
    cert = wellposedness_certificate(
        cfg.model.lipschitz.L_F, cfg.model.lipschitz.L_x,
        cfg.model.delay.L_tau, C_K, R=cfg.model.lipschitz.R)
    _write_text(os.path.join(out, "certificate.txt"), str(cert))


def cmd_verify(cfg, args, out):
    rep = cross_validate(cfg.model, cfg.history, args.T,
                         h=min(cfg.solve.h, cfg.model.delay.tau_min / 2.0),
                         grid_n=args.grid_n)
    _write_csv(os.path.join(out, "verify.csv"),
               ["T", "sup_diff", "picard_converged", "passed"],
               [(rep.T, rep.sup_diff, str(rep.picard_converged).lower(),
                 str(rep.passed).lower())])
    _write_text(os.path.join(out, "verify.txt"), str(rep))
    if not rep.picard_converged:
        raise NumericalFailure("Picard iteration did not converge")


def cmd_audit(cfg, args, out):
    rhs = cfg.model.rhs
    if not isinstance(cfg.model.kernel, GammaKernel):
        raise ConfigError("audit requires a Gamma kernel")
    report = analysis.paper_audit(rhs.r, rhs.K_c, cfg.model.kernel.rate)
    _write_text(os.path.join(out, "audit.csv"), report.to_csv_text())
    _write_text(os.path.join(out, "audit.txt"), report.to_text())


_COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "hopf": cmd_hopf,
    "sweep": cmd_sweep,
    "certify": cmd_certify,
    "verify": cmd_verify,
    "audit": cmd_audit,
}


def build_parser():
    ap = argparse.ArgumentParser(
        prog="memdde",
        description="Delay equations with distributed memory: simulation, "
                    "well-posedness certificates, and Hopf analysis.")
    ap.add_argument("command", choices=sorted(_COMMANDS))
    ap.add_argument("--model", required=True, help="model config file")
    ap.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="SECTION.KEY=VALUE", help="override a config key")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=0,
                    help="seed for randomized validation probes")
    ap.add_argument("--force", action="store_true",
                    help="run even if assumption validation fails")
    ap.add_argument("--T", type=float, default=0.5,
                    help="verify: cross-validation horizon")
    ap.add_argument("--grid-n", type=int, default=1000,
                    help="verify: Picard grid size")
    ap.add_argument("--beta-grid", default="0.5:2:10",
                    help="sweep: beta grid as lo:hi:count")
    ap.add_argument("--alpha-grid", default="0.05:0.95:10",
                    help="sweep: alpha grid as lo:hi:count")
    ap.add_argument("--workers", type=int, default=1,
                    help="sweep: concurrent workers over beta rows")
    return ap


def _record_error(out, exc, code):
    try:
        os.makedirs(out, exist_ok=True)
        _write_csv(os.path.join(out, "errors.csv"),
                   ["error_class", "exit_code", "message"],
                   [(type(exc).__name__, str(code),
                     str(exc).replace("\n", " ").replace(",", ";"))])
    except OSError:
        pass


def run(args) -> int:
    out = args.out
    try:
        os.makedirs(out, exist_ok=True)
        cfg = parse_config(args.model, overrides=args.overrides,
                           check=not args.force, seed=args.seed)
        _COMMANDS[args.command](cfg, args, out)
        return EXIT_OK
    except ValidationFailure as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        print(exc.report, file=sys.stderr)
        _record_error(out, exc, EXIT_VALIDATION)
        return EXIT_VALIDATION
    except (ConfigError, ValueError, UnsupportedKernelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _record_error(out, exc, EXIT_VALIDATION)
        return EXIT_VALIDATION
    except (NumericalFailure, NonConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        _record_error(out, exc, EXIT_NUMERICAL)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        _record_error(out, exc, EXIT_IO)
        return EXIT_IO


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())

"""Stability and Hopf analysis for the logistic benchmark with a
second-order Gamma memory kernel.

The linearized dynamics reduce, after clearing the Laplace transform of
the kernel, to a real cubic lambda^3 + A lambda^2 + B lambda + C.  Two
provenances of (A, B, C) are kept side by side: ``derived`` expands the
characteristic relation from the direct linearization coefficient,
``paper-eq7`` uses the published coefficients verbatim.  The audit
report evaluates both and records their disagreements instead of
resolving them.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    DelaySpec,
    GammaKernel,
    InitialHistory,
    LogisticMemoryModel,
    ModelSpec,
)
from .solver import SolveConfig, integrate


# ---------------------------------------------------------------------------
# Equilibria and linearization
# ---------------------------------------------------------------------------

def equilibria(r: float, K_c: float, alpha: float, kappa: float) -> list:
    """Equilibria of r x (1 - x/K_c) - alpha*kappa*x = 0.

    Always contains 0; the positive branch K_c (1 - alpha*kappa/r)
    exists iff r > alpha*kappa.
    """
    if r <= 0 or K_c <= 0 or alpha < 0 or kappa < 0:
        raise ValueError("need r > 0, K_c > 0, alpha >= 0, kappa >= 0")
    eqs = [0.0]
    if r > alpha * kappa:
        eqs.append(K_c * (1.0 - alpha * kappa / r))
    return eqs


@dataclass(frozen=True)
class LinearizationResult:
    """Coefficients of the linearized benchmark around an equilibrium.

    y' = a_inst * y - a_del * integral K(s) y(t-s) ds, with a_del the
    memory strength alpha.
    """

    x_star: float
    a_inst: float
    a_del: float
    mode: str  # eq4-direct | paper-simplified


def linearize(r: float, K_c: float, alpha: float, kappa: float,
              x_star: float, mode: str = "eq4-direct") -> LinearizationResult:
    """Instantaneous coefficient at an equilibrium.

    ``eq4-direct`` evaluates r - 2 r x*/K_c.  ``paper-simplified`` uses
    the published shortcut alpha*kappa - r, defined only at the positive
    equilibrium.
    """
    if mode == "eq4-direct":
        a = r - 2.0 * r * x_star / K_c
    elif mode == "paper-simplified":
        if abs(x_star) < 1e-300:
            raise ValueError(
                "paper-simplified coefficient is defined only at the "
                "positive equilibrium")
        a = alpha * kappa - r
    else:
        raise ValueError(f"unknown linearization mode {mode!r}")
    return LinearizationResult(x_star=x_star, a_inst=a, a_del=alpha, mode=mode)


# ---------------------------------------------------------------------------
# Characteristic cubic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CharacteristicCubic:
    """lambda^3 + A lambda^2 + B lambda + C with recorded provenance."""

    A: float
    B: float
    C: float
    provenance: str  # derived | paper-eq7

    def __call__(self, lam):
        return ((lam + self.A) * lam + self.B) * lam + self.C


def characteristic_cubic(lin: LinearizationResult, alpha: float,
                         beta: float) -> CharacteristicCubic:
    """Cubic from multiplying lambda = a - alpha*beta^2/(lambda+beta)^2
    through by (lambda+beta)^2."""
    if beta <= 0:
        raise ValueError("need beta > 0")
    a = lin.a_inst
    return CharacteristicCubic(
        A=2.0 * beta - a,
        B=beta * beta - 2.0 * beta * a,
        C=beta * beta * (alpha - a),
        provenance="derived",
    )


def paper_cubic(r: float, alpha: float, beta: float) -> CharacteristicCubic:
    """The published cubic coefficients, taken verbatim."""
    if beta <= 0:
        raise ValueError("need beta > 0")
    return CharacteristicCubic(
        A=2.0 * beta + r - alpha,
        B=beta * beta + 2.0 * beta * (r - alpha),
        C=beta * beta * (r - 2.0 * alpha),
        provenance="paper-eq7",
    )


def cubic_roots(c: CharacteristicCubic) -> np.ndarray:
    """All three roots, closed form plus one Newton polish each.

    Sorted by descending real part, ties by descending imaginary part.
    Residual |p(root)| <= 1e-10 * max(1, |A|, |B|, |C|).
    """
    A, B, C = c.A, c.B, c.C
    if not all(math.isfinite(v) for v in (A, B, C)):
        raise ValueError("cubic coefficients must be finite")
    # depressed form u^3 + p u + q with lambda = u - A/3
    p = B - A * A / 3.0
    q = 2.0 * A ** 3 / 27.0 - A * B / 3.0 + C
    shift = -A / 3.0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if abs(p) < 1e-300 and abs(q) < 1e-300:
        roots = [complex(shift)] * 3
    elif disc > 0:
        sq = math.sqrt(disc)
        s1 = math.copysign(abs(-q / 2.0 + sq) ** (1.0 / 3.0), -q / 2.0 + sq)
        s2 = math.copysign(abs(-q / 2.0 - sq) ** (1.0 / 3.0), -q / 2.0 - sq)
        u1 = s1 + s2
        re = -u1 / 2.0
        im = math.sqrt(3.0) / 2.0 * (s1 - s2)
        roots = [complex(u1 + shift), complex(re + shift, im),
                 complex(re + shift, -im)]
    else:
        # three real roots, trigonometric form
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * m)
        arg = min(1.0, max(-1.0, arg))
        theta = math.acos(arg) / 3.0
        roots = [complex(m * math.cos(theta - 2.0 * math.pi * k / 3.0) + shift)
                 for k in range(3)]

    def polish(z):
        for _ in range(3):
            f = ((z + A) * z + B) * z + C
            df = (3.0 * z + 2.0 * A) * z + B
            if df == 0:
                return z
            step = f / df
            if abs(step) > 1.0:
                return z
            z = z - step
        return z

    polished = [polish(z) for z in roots]
    # drop spurious imaginary dust on essentially-real roots
    scale = max(1.0, abs(A), abs(B), abs(C))
    cleaned = []
    for z in polished:
        if abs(z.imag) < 1e-12 * max(1.0, abs(z.real)):
            z = complex(z.real, 0.0)
        cleaned.append(z)
    cleaned.sort(key=lambda z: (-z.real, -z.imag))
    return np.array(cleaned)


def routh_hurwitz(c: CharacteristicCubic, rel_tol: float = 1e-12) -> str:
    """Verdict for the monic cubic: stable, unstable, or marginal.

    Stable iff A > 0, C > 0, A*B > C; marginal iff A*B = C (to rel_tol)
    with B > 0.
    """
    A, B, C = c.A, c.B, c.C
    scale = max(1.0, abs(A * B), abs(C))
    if abs(A * B - C) <= rel_tol * scale and B > 0:
        return "marginal"
    if A > 0 and C > 0 and A * B > C:
        return "stable"
    return "unstable"


# ---------------------------------------------------------------------------
# Hopf thresholds
# ---------------------------------------------------------------------------

@dataclass
class HopfResult:
    alpha_H: Optional[float]
    omega_H: Optional[float]
    method: str  # closed-form-eq10 | numeric-AB-equals-C | simulation-onset
    status: str  # found | no-crossing | outside-validity
    roots: Optional[np.ndarray] = None


def hopf_closed_form(r: float, beta: float) -> HopfResult:
    """Published closed forms: alpha_H = r(beta+r)/(2 beta + r) and the
    frequency from omega^2 = beta^2 + 2 beta (r - alpha_H)."""
    if r <= 0 or beta <= 0:
        raise ValueError("need r > 0 and beta > 0")
    alpha_H = r * (beta + r) / (2.0 * beta + r)
    radicand = beta * beta + 2.0 * beta * (r - alpha_H)
    if radicand <= 0:
        return HopfResult(alpha_H=alpha_H, omega_H=None,
                          method="closed-form-eq10", status="outside-validity")
    return HopfResult(alpha_H=alpha_H, omega_H=math.sqrt(radicand),
                      method="closed-form-eq10", status="found")


def _cubic_for(alpha: float, r: float, beta: float,
               source: str) -> CharacteristicCubic:
    if source == "derived-eq4":
        # instantaneous coefficient at the positive equilibrium, kappa = 1
        a = 2.0 * alpha - r
        return CharacteristicCubic(A=2.0 * beta - a, B=beta * beta - 2.0 * beta * a,
                                   C=beta * beta * (alpha - a), provenance="derived")
    if source == "paper-eq7":
        return paper_cubic(r, alpha, beta)
    raise ValueError(f"unknown cubic source {source!r}")


def hopf_threshold_numeric(r: float, K_c: float, beta: float,
                           cubic_source: str = "derived-eq4",
                           alpha_range=None, tol: float = 1e-10,
                           kappa: float = 1.0) -> HopfResult:
    """Bisect g(alpha) = A*B - C over the band where B > 0.

    A sign change of g with positive B marks a conjugate root pair on
    the imaginary axis with omega = sqrt(B).
    """
    if alpha_range is None:
        hi = min(r / kappa, r / 2.0 + beta) - 1e-6
        alpha_range = (1e-6, hi)
    lo, hi = alpha_range
    if not (0 < lo < hi):
        raise ValueError(f"invalid alpha range {alpha_range}")

    def g(alpha):
        c = _cubic_for(alpha, r, beta, cubic_source)
        return c.A * c.B - c.C, c.B

    grid = np.linspace(lo, hi, 2001)
    gv = np.empty_like(grid)
    bv = np.empty_like(grid)
    for i, a in enumerate(grid):
        gv[i], bv[i] = g(a)

    bracket = None
    for i in range(len(grid) - 1):
        if bv[i] > 0 and bv[i + 1] > 0 and gv[i] * gv[i + 1] <= 0:
            bracket = (grid[i], grid[i + 1])
            break
    if bracket is None:
        status = "no-crossing" if np.any(bv > 0) else "outside-validity"
        return HopfResult(alpha_H=None, omega_H=None,
                          method="numeric-AB-equals-C", status=status)

    a_lo, a_hi = bracket
    g_lo = g(a_lo)[0]
    for _ in range(200):
        mid = 0.5 * (a_lo + a_hi)
        g_mid = g(mid)[0]
        if abs(g_mid) <= tol:
            a_lo = a_hi = mid
            break
        if g_lo * g_mid <= 0:
            a_hi = mid
        else:
            a_lo, g_lo = mid, g_mid
    alpha_H = 0.5 * (a_lo + a_hi)
    c = _cubic_for(alpha_H, r, beta, cubic_source)
    omega = math.sqrt(c.B)
    roots = cubic_roots(c)
    return HopfResult(alpha_H=alpha_H, omega_H=omega,
                      method="numeric-AB-equals-C", status="found", roots=roots)


def chain_jacobian_cubic(r: float, K_c: float, alpha: float,
                         beta: float) -> CharacteristicCubic:
    """Characteristic polynomial of the chain-reduced benchmark ODE
    Jacobian at the positive equilibrium (independent cross-check of the
    Laplace-based cubic)."""
    x1 = K_c * (1.0 - alpha / r)
    a = r - 2.0 * r * x1 / K_c
    J = np.array([
        [a, 0.0, -alpha],
        [beta, -beta, 0.0],
        [0.0, beta, -beta],
    ])
    c2 = -np.trace(J)
    minors = 0.0
    for i in range(3):
        idx = [j for j in range(3) if j != i]
        minors += np.linalg.det(J[np.ix_(idx, idx)])
    c0 = -np.linalg.det(J)
    return CharacteristicCubic(A=float(c2), B=float(minors), C=float(c0),
                               provenance="derived")


# ---------------------------------------------------------------------------
# Simulation-based onset detection
# ---------------------------------------------------------------------------

@dataclass
class OnsetRow:
    alpha: float
    amplitude: float
    status: str  # ok | blow-up | no-equilibrium


@dataclass
class OnsetScanResult:
    alpha_c: Optional[float]
    rows: list
    amp_tol: float


def oscillation_onset_scan(r: float, K_c: float, beta: float,
                           alpha_grid: Sequence[float],
                           sim: Optional[SolveConfig] = None,
                           transient_fraction: float = 0.5,
                           amp_tol: Optional[float] = None,
                           kernel_order: int = 2) -> OnsetScanResult:
    """Integrate the benchmark across an alpha grid and read off the
    first grid cell where the settled oscillation amplitude crosses
    amp_tol; alpha_c is that cell's midpoint."""
    if sim is None:
        sim = SolveConfig(h=0.02, t_end=800.0, memory_mode="chain")
    if amp_tol is None:
        amp_tol = 1e-3 * K_c
    kernel = GammaKernel(order=kernel_order, rate=beta)
    delay = DelaySpec.constant(1.0)
    rows = []
    for alpha in alpha_grid:
        if r <= alpha:
            rows.append(OnsetRow(alpha=alpha, amplitude=math.nan,
                                 status="no-equilibrium"))
            continue
        x1 = K_c * (1.0 - alpha / r)
        model = ModelSpec(dimension=1, rhs=LogisticMemoryModel(r, K_c, alpha),
                          delay=delay, kernel=kernel)
        hist = InitialHistory.constant(0.9 * x1, delay.tau_max)
        traj = integrate(model, hist, sim)
        if traj.blown_up:
            rows.append(OnsetRow(alpha=alpha, amplitude=math.inf,
                                 status="blow-up"))
            continue
        cut = transient_fraction * sim.t_end
        tail = traj.values[traj.ts >= cut, 0]
        amp = float(tail.max() - tail.min())
        rows.append(OnsetRow(alpha=alpha, amplitude=amp, status="ok"))

    alpha_c = None
    for prev, cur in zip(rows[:-1], rows[1:]):
        if prev.status == "ok" and cur.status == "ok" \
                and prev.amplitude <= amp_tol < cur.amplitude:
            alpha_c = 0.5 * (prev.alpha + cur.alpha)
            break
    return OnsetScanResult(alpha_c=alpha_c, rows=rows, amp_tol=amp_tol)


# ---------------------------------------------------------------------------
# Audit of the printed formulas
# ---------------------------------------------------------------------------

@dataclass
class AuditRow:
    check_name: str
    expected_source: str
    value_a: float
    value_b: float
    abs_diff: float
    flag: str  # ok | mismatch


@dataclass
class AuditReport:
    r: float
    K_c: float
    beta: float
    alpha_ref: float
    rows: list
    numeric: HopfResult
    onset: OnsetScanResult

    def to_csv_text(self) -> str:
        lines = ["check_name,expected_source,value_a,value_b,abs_diff,flag"]
        for row in self.rows:
            lines.append(
                f"{row.check_name},{row.expected_source},{row.value_a:.17g},"
                f"{row.value_b:.17g},{row.abs_diff:.17g},{row.flag}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        out = [
            "audit of the printed linearization / cubic / Hopf formulas",
            f"parameters: r = {self.r:.17g}, K_c = {self.K_c:.17g}, "
            f"beta = {self.beta:.17g}",
            f"reference memory strength alpha = closed-form threshold "
            f"= {self.alpha_ref:.17g}",
            "",
        ]
        width = max(len(r.check_name) for r in self.rows)
        for row in self.rows:
            out.append(
                f"  {row.check_name:<{width}}  {row.value_a:+.10e} vs "
                f"{row.value_b:+.10e}  |diff| = {row.abs_diff:.10e}  [{row.flag}]")
        out.append("")
        if self.numeric.status == "found":
            out.append(
                f"numeric threshold (derived pipeline): alpha_H = "
                f"{self.numeric.alpha_H:.17g}, omega_H = {self.numeric.omega_H:.17g}")
        else:
            out.append(f"numeric threshold (derived pipeline): {self.numeric.status}")
        if self.onset.alpha_c is not None:
            out.append(
                f"simulation onset: alpha_c = {self.onset.alpha_c:.17g} "
                f"(amplitude tolerance {self.onset.amp_tol:.17g})")
        else:
            out.append("simulation onset: not localized on the scanned grid")
        return "\n".join(out) + "\n"


def paper_audit(r: float, K_c: float, beta: float,
                onset_step: float = 0.005, onset_halfwidth: float = 0.03,
                sim: Optional[SolveConfig] = None) -> AuditReport:
    """Cross-check the printed formulas against the derivation pipeline.

    Evaluates, at the closed-form threshold value of the memory
    strength: the two candidate linearization coefficients, the cubic
    coefficients expanded from the characteristic relation (with either
    coefficient) against the printed ones, and the residual of the
    closed-form threshold in both A*B - C functions.  Also reports the
    numeric threshold and a simulation-based onset estimate.
    """
    if min(r, K_c, beta) <= 0:
        raise ValueError("need r, K_c, beta > 0")
    closed = hopf_closed_form(r, beta)
    alpha = closed.alpha_H
    rows = []

    def add(name, source, va, vb, tol=1e-12):
        diff = abs(va - vb)
        rows.append(AuditRow(name, source, va, vb, diff,
                             "ok" if diff <= tol else "mismatch"))

    # (i) the linearization coefficient at the positive equilibrium
    a_eq4 = 2.0 * alpha - r
    a_printed = alpha - r
    add("linearization_a_inst", "eq4-direct vs printed-simplified",
        a_eq4, a_printed)

    # (ii) expanded cubic vs printed, for both coefficient choices
    printed = paper_cubic(r, alpha, beta)
    for label, a in (("paper_a", a_printed), ("eq4_a", a_eq4)):
        exp = CharacteristicCubic(A=2.0 * beta - a, B=beta * beta - 2.0 * beta * a,
                                  C=beta * beta * (alpha - a), provenance="derived")
        add(f"cubic_A_{label}", f"expanded({label}) vs printed", exp.A, printed.A)
        add(f"cubic_B_{label}", f"expanded({label}) vs printed", exp.B, printed.B)
        add(f"cubic_C_{label}", f"expanded({label}) vs printed", exp.C, printed.C)

    # (iii) residual of the closed-form threshold in both A*B - C functions
    for source, name in (("derived-eq4", "alphaH_residual_derived_g"),
                         ("paper-eq7", "alphaH_residual_paper_g")):
        c = _cubic_for(alpha, r, beta, source)
        add(name, f"g({source}) at closed-form alpha_H", c.A * c.B - c.C, 0.0)

    # crossing counts of g over the equilibrium-existence band
    def crossings(source):
        grid = np.linspace(1e-6, r - 1e-6, 2001)
        count = 0
        gp = bp = None
        for a in grid:
            c = _cubic_for(a, r, beta, source)
            gv, bv = c.A * c.B - c.C, c.B
            if gp is not None and bp > 0 and bv > 0 and gp * gv <= 0:
                count += 1
            gp, bp = gv, bv
        return float(count)

    add("g_sign_changes", "derived-eq4 vs paper-eq7",
        crossings("derived-eq4"), crossings("paper-eq7"))

    # memory-free reduction: both provenances must coincide at alpha = 0
    exp0 = _cubic_for(0.0, r, beta, "derived-eq4")
    pr0 = paper_cubic(r, 0.0, beta)
    add("memoryless_reduction", "derived vs printed at alpha = 0",
        max(abs(exp0.A - pr0.A), abs(exp0.B - pr0.B), abs(exp0.C - pr0.C)), 0.0)

    numeric = hopf_threshold_numeric(r, K_c, beta, cubic_source="derived-eq4")
    if numeric.status == "found":
        add("numeric_vs_closed_form_alphaH",
            "bisection on derived g vs printed closed form",
            numeric.alpha_H, alpha, tol=1e-9)
        center = numeric.alpha_H
    else:
        center = alpha
    n_cells = max(2, int(round(2 * onset_halfwidth / onset_step)))
    grid = center - onset_halfwidth + onset_step * np.arange(n_cells + 1)
    onset = oscillation_onset_scan(r, K_c, beta, grid, sim=sim)
    if numeric.status == "found" and onset.alpha_c is not None:
        add("numeric_vs_onset_alpha", "bisection vs simulation onset",
            numeric.alpha_H, onset.alpha_c, tol=0.02)

    return AuditReport(r=r, K_c=K_c, beta=beta, alpha_ref=alpha, rows=rows,
                       numeric=numeric, onset=onset)


# ---------------------------------------------------------------------------
# Parameter sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    beta: float
    alpha: float
    max_re_lambda: float
    rh_verdict: str
    alpha_H_closed: float
    alpha_H_numeric: Optional[float]
    error: Optional[str] = None


def sweep(r: float, K_c: float, beta_grid: Sequence[float],
          alpha_grid: Sequence[float], workers: int = 1) -> list:
    """Stability table over a (beta, alpha) grid (beta outer, alpha inner).

    Per-row failures are recorded in the row, never abort the sweep.
    Rows may be computed concurrently per beta; aggregation order is
    fixed by grid index.
    """
    def rows_for_beta(beta):
        closed = hopf_closed_form(r, beta)
        numeric = hopf_threshold_numeric(r, K_c, beta, cubic_source="derived-eq4")
        a_num = numeric.alpha_H if numeric.status == "found" else None
        out = []
        for alpha in alpha_grid:
            try:
                c = _cubic_for(alpha, r, beta, "derived-eq4")
                roots = cubic_roots(c)
                out.append(SweepRow(
                    beta=beta, alpha=alpha,
                    max_re_lambda=float(max(z.real for z in roots)),
                    rh_verdict=routh_hurwitz(c),
                    alpha_H_closed=closed.alpha_H,
                    alpha_H_numeric=a_num))
            except Exception as exc:  # per-row errors recorded, sweep continues
                out.append(SweepRow(beta=beta, alpha=alpha,
                                    max_re_lambda=math.nan, rh_verdict="error",
                                    alpha_H_closed=closed.alpha_H,
                                    alpha_H_numeric=a_num, error=str(exc)))
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(rows_for_beta, beta_grid))
    else:
        chunks = [rows_for_beta(b) for b in beta_grid]
    return [row for chunk in chunks for row in chunk]

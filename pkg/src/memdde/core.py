"""Domain types for delay equations with a distributed-memory term.

The model class is

    x'(t) = F(t, x(t), x(t - tau(x(t), t)), M(t)),

where tau is a (possibly state-dependent) bounded delay and M(t) is a
weighted integral of the recent history against a nonnegative kernel.
This module holds the immutable building blocks: initial histories,
delay specifications, memory kernels, model specs, and the piecewise
cubic trajectory container.  All types are safe to share between
concurrent solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.special import gammaln, gammainc, gammaincc, lambertw


class DomainError(ValueError):
    """Evaluation requested outside the covered time domain."""


class DelayBoundsError(ValueError):
    """A delay evaluation left the declared [tau_min, tau_max] band."""


class UnsupportedKernelError(ValueError):
    """Operation not defined for this kernel variant."""


# ---------------------------------------------------------------------------
# Initial history
# ---------------------------------------------------------------------------

# Finite-difference step for history derivatives, relative to tau_max.
_FD_REL_STEP = 1e-6


@dataclass(frozen=True)
class InitialHistory:
    """The history function phi on [-tau_max, 0].

    Construct through the classmethods.  ``extension`` controls values
    requested below -tau_max (needed when an infinite-support kernel
    looks further back than the declared window): ``constant`` holds the
    left endpoint, ``analytic`` evaluates the defining formula directly
    when one exists.
    """

    tau_max: float
    form: str  # constant | polynomial | sinusoid | tabulated | callable
    extension: str = "constant"
    value: Optional[np.ndarray] = None
    coeffs: Optional[np.ndarray] = None  # (deg+1, n), ascending powers
    sin_params: Optional[tuple] = None   # (amplitude, frequency, phase, offset)
    spline: Optional[CubicSpline] = None
    fn: Optional[Callable[[float], np.ndarray]] = None
    dfn: Optional[Callable[[float], np.ndarray]] = None

    @classmethod
    def constant(cls, value, tau_max: float) -> "InitialHistory":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(tau_max=float(tau_max), form="constant", extension="constant",
                   value=v)

    @classmethod
    def polynomial(cls, coeffs, tau_max: float,
                   extension: str = "constant") -> "InitialHistory":
        """phi(s) = sum_k coeffs[k] * s**k (coeffs may be (deg+1,) or (deg+1, n))."""
        c = np.asarray(coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        return cls(tau_max=float(tau_max), form="polynomial",
                   extension=extension, coeffs=c)

    @classmethod
    def sinusoid(cls, amplitude, frequency, phase, offset, tau_max: float,
                 extension: str = "constant") -> "InitialHistory":
        params = tuple(np.atleast_1d(np.asarray(p, dtype=float))
                       for p in (amplitude, frequency, phase, offset))
        return cls(tau_max=float(tau_max), form="sinusoid",
                   extension=extension, sin_params=params)

    @classmethod
    def tabulated(cls, times, samples, tau_max: float) -> "InitialHistory":
        """Samples on [-tau_max, 0], interpolated by a cubic spline."""
        t = np.asarray(times, dtype=float)
        x = np.asarray(samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if t[0] > -tau_max + 1e-12 or t[-1] < -1e-12:
            raise ValueError("tabulated history must cover [-tau_max, 0]")
        sp = CubicSpline(t, x, bc_type="not-a-knot")
        return cls(tau_max=float(tau_max), form="tabulated",
                   extension="constant", spline=sp)

    @classmethod
    def from_callable(cls, fn, tau_max: float, extension: str = "constant",
                      dfn=None) -> "InitialHistory":
        return cls(tau_max=float(tau_max), form="callable", extension=extension,
                   fn=fn, dfn=dfn)

    @property
    def domain_start(self) -> float:
        return -self.tau_max

    @property
    def dimension(self) -> int:
        return self(0.0).shape[0]

    def _eval_form(self, t: float) -> np.ndarray:
        if self.form == "constant":
            return self.value
        if self.form == "polynomial":
            powers = t ** np.arange(self.coeffs.shape[0])
            return powers @ self.coeffs
        if self.form == "sinusoid":
            a, w, p, o = self.sin_params
            return o + a * np.sin(w * t + p)
        if self.form == "tabulated":
            return self.spline(t)
        return np.atleast_1d(np.asarray(self.fn(t), dtype=float))

    def __call__(self, t: float) -> np.ndarray:
        if t > 1e-12:
            raise DomainError(f"history evaluated at t = {t} > 0")
        if t < -self.tau_max:
            if self.extension == "analytic" and self.form != "tabulated":
                return np.asarray(self._eval_form(t), dtype=float)
            return np.asarray(self._eval_form(-self.tau_max), dtype=float)
        return np.asarray(self._eval_form(t), dtype=float)

    def eval_many(self, ts) -> np.ndarray:
        """Vectorized evaluation for t <= 0 (extension policy applied)."""
        ts = np.asarray(ts, dtype=float)
        if np.any(ts > 1e-12):
            raise DomainError("history evaluated at positive time")
        analytic = self.extension == "analytic" and self.form != "tabulated"
        te = ts if analytic else np.maximum(ts, -self.tau_max)
        if self.form == "constant":
            return np.tile(self.value, (len(te), 1))
        if self.form == "polynomial":
            powers = te[:, None] ** np.arange(self.coeffs.shape[0])
            return powers @ self.coeffs
        if self.form == "sinusoid":
            a, w, p, o = self.sin_params
            return o + a * np.sin(w * te[:, None] + p)
        if self.form == "tabulated":
            return np.atleast_2d(self.spline(te))
        return np.array([np.atleast_1d(self.fn(t)) for t in te], dtype=float)

    def derivative(self, t: float) -> np.ndarray:
        """d(phi)/dt, analytic where the form allows, else centered differences."""
        t = min(t, 0.0)
        if self.form == "constant":
            return np.zeros_like(self.value)
        if self.form == "polynomial":
            k = np.arange(1, self.coeffs.shape[0])
            powers = t ** (k - 1)
            return (k * powers) @ self.coeffs[1:]
        if self.form == "sinusoid":
            a, w, p, o = self.sin_params
            return a * w * np.cos(w * t + p)
        if self.form == "tabulated":
            return self.spline(t, 1)
        if self.dfn is not None:
            return np.atleast_1d(np.asarray(self.dfn(t), dtype=float))
        h = _FD_REL_STEP * self.tau_max
        hi = min(t + h, 0.0)  # stay inside the domain near t = 0
        return (self(hi) - self(hi - 2 * h)) / (2 * h)

    def check_continuity(self, tol: float = 1e-6, n: int = 256) -> bool:
        """Probe for jumps: max adjacent difference must shrink under refinement."""
        def max_jump(m):
            ts = np.linspace(-self.tau_max, 0.0, m)
            vals = np.array([self(t) for t in ts])
            return float(np.max(np.abs(np.diff(vals, axis=0)))) if m > 1 else 0.0

        j1 = max_jump(n)
        j2 = max_jump(2 * n)
        return j2 <= 0.75 * j1 + tol


# ---------------------------------------------------------------------------
# Delay specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DelaySpec:
    """State-dependent delay tau(x, t), bounded in [tau_min, tau_max].

    The affine form clamps c0 + c1*x[0] into the band (the scalar
    reduction uses the first state component).  Every evaluation is
    checked against the declared bounds.
    """

    tau_min: float
    tau_max: float
    L_tau: float
    form: str = "constant"  # constant | affine | callable
    tau0: float = 0.0
    c0: float = 0.0
    c1: float = 0.0
    fn: Optional[Callable] = None

    @classmethod
    def constant(cls, tau0: float) -> "DelaySpec":
        return cls(tau_min=float(tau0), tau_max=float(tau0), L_tau=0.0,
                   form="constant", tau0=float(tau0))

    @classmethod
    def affine(cls, c0: float, c1: float, tau_min: float, tau_max: float) -> "DelaySpec":
        # clamp is 1-Lipschitz, so |c1| bounds the state sensitivity
        return cls(tau_min=float(tau_min), tau_max=float(tau_max),
                   L_tau=abs(float(c1)), form="affine", c0=float(c0), c1=float(c1))

    @classmethod
    def from_callable(cls, fn, tau_min: float, tau_max: float, L_tau: float) -> "DelaySpec":
        return cls(tau_min=float(tau_min), tau_max=float(tau_max),
                   L_tau=float(L_tau), form="callable", fn=fn)

    def __call__(self, x, t: float) -> float:
        x = np.atleast_1d(x)
        if self.form == "constant":
            return self.tau0
        if self.form == "affine":
            return float(min(max(self.c0 + self.c1 * x[0], self.tau_min), self.tau_max))
        tau = float(self.fn(x, t))
        if not (self.tau_min - 1e-12 <= tau <= self.tau_max + 1e-12):
            raise DelayBoundsError(
                f"tau(x,t) = {tau} outside [{self.tau_min}, {self.tau_max}]")
        return tau


# ---------------------------------------------------------------------------
# Memory kernels
# ---------------------------------------------------------------------------

def gamma_truncation_horizon(order: int, rate: float, tail_tol: float) -> float:
    """Smallest H with tail mass of Gamma(order, rate) below tail_tol.

    Closed form for orders 1 and 2 (the order-2 case through the lower
    Lambert-W branch), bisection on the regularized upper incomplete
    gamma otherwise.
    """
    if order == 1:
        return -math.log(tail_tol) / rate
    if order == 2:
        # (1+u)e^{-u} = tol  =>  u = -1 - W_{-1}(-tol/e)
        u = -1.0 - lambertw(-tail_tol / math.e, k=-1).real
        return u / rate
    f = lambda H: gammaincc(order, rate * H) - tail_tol
    hi = order / rate
    while f(hi) > 0:
        hi *= 2.0
    return brentq(f, 1e-12, hi, xtol=1e-12)


def gamma_density(order: int, rate: float, s):
    """Gamma(order, rate) density rate**p * s**(p-1) * exp(-rate*s) / (p-1)!."""
    s = np.asarray(s, dtype=float)
    logk = order * math.log(rate) - gammaln(order)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(
            s >= 0,
            np.exp(logk + (order - 1) * np.log(np.maximum(s, 1e-300)) - rate * s),
            0.0,
        )
    if order == 1:
        out = np.where(s >= 0, rate * np.exp(-rate * s), 0.0)
    return out


@dataclass(frozen=True)
class GammaKernel:
    """Convolution kernel K(s) = rate**p s**(p-1) e^{-rate s} / (p-1)!.

    Infinite support; quadrature truncates at ``horizon`` (given
    explicitly, or derived so the tail mass is below tail_tol).  An
    explicit horizon also truncates the reported mass.
    """

    order: int
    rate: float
    tail_tol: float = 1e-10
    horizon: Optional[float] = None

    def __post_init__(self):
        if self.order < 1 or self.rate <= 0:
            raise ValueError("Gamma kernel needs order >= 1 and rate > 0")

    @property
    def support(self) -> float:
        if self.horizon is not None:
            return self.horizon
        return gamma_truncation_horizon(self.order, self.rate, self.tail_tol)

    def density(self, s):
        return gamma_density(self.order, self.rate, s)

    def __call__(self, s):
        return self.density(s)


@dataclass(frozen=True)
class TabulatedKernel:
    """Nonnegative kernel given by samples of K(s) on [0, tau_max]."""

    s: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s", np.asarray(self.s, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.s[0] != 0.0:
            raise ValueError("tabulated kernel samples must start at s = 0")
        object.__setattr__(
            self, "_spline", CubicSpline(self.s, self.values, bc_type="clamped"))

    @property
    def support(self) -> float:
        return float(self.s[-1])

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.values == 0.0))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = self._spline(np.clip(s, self.s[0], self.s[-1]))
        return np.where((s >= self.s[0]) & (s <= self.s[-1]), out, 0.0)


@dataclass(frozen=True)
class NonautonomousKernel:
    """General kernel K(t, s) acting on the window [t - tau_max, t]."""

    fn: Callable[[float, np.ndarray], np.ndarray]
    tau_max: float

    @property
    def support(self) -> float:
        return self.tau_max

    def __call__(self, t: float, s):
        return np.asarray(self.fn(t, np.asarray(s, dtype=float)), dtype=float)


# ---------------------------------------------------------------------------
# Model specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogisticMemoryModel:
    """Scalar logistic growth damped by the memory channel.

    x' = r x (1 - x/K_c) - alpha * M(t)
    """

    r: float
    K_c: float
    alpha: float

    def __post_init__(self):
        if self.r <= 0 or self.K_c <= 0 or self.alpha < 0:
            raise ValueError("need r > 0, K_c > 0, alpha >= 0")

    def __call__(self, t, x, x_delayed, M):
        return self.r * x * (1.0 - x / self.K_c) - self.alpha * M


@dataclass(frozen=True)
class LipschitzData:
    """User-supplied constants feeding the well-posedness certificate."""

    L_F: float
    L_x: float
    R: Optional[float] = None


@dataclass(frozen=True)
class ModelSpec:
    dimension: int
    rhs: Callable  # LogisticMemoryModel or F(t, x, x_delayed, M) -> dx/dt
    delay: DelaySpec
    kernel: object  # GammaKernel | TabulatedKernel | NonautonomousKernel
    lipschitz: Optional[LipschitzData] = None


# ---------------------------------------------------------------------------
# Trajectory with dense output
# ---------------------------------------------------------------------------

class Trajectory:
    """Mesh solution with piecewise cubic Hermite dense output.

    Values may include chain auxiliary columns after the first
    ``n_state`` components; the mesh covers [-tau_max, t_end] and the
    interpolant is C0 across interval boundaries by construction.
    """

    def __init__(self, ts, values, derivs, n_state: int,
                 history: Optional[InitialHistory] = None,
                 blown_up: bool = False, chain_order: int = 0,
                 derivs_minus=None):
        self.ts = np.asarray(ts, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.derivs = np.asarray(derivs, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
            self.derivs = self.derivs[:, None]
        if np.any(np.diff(self.ts) <= 0):
            raise ValueError("trajectory mesh must be strictly increasing")
        # left-sided derivatives; differ from derivs only at breaking
        # points (the history/solution junction at t = 0)
        if derivs_minus is None:
            self.derivs_minus = self.derivs
        else:
            self.derivs_minus = np.asarray(derivs_minus, dtype=float)
            if self.derivs_minus.ndim == 1:
                self.derivs_minus = self.derivs_minus[:, None]
        self.n_state = n_state
        self.history = history
        self.blown_up = blown_up
        self.chain_order = chain_order

    @property
    def t_start(self) -> float:
        return float(self.ts[0])

    @property
    def t_end(self) -> float:
        return float(self.ts[-1])

    def _hermite(self, t, idx):
        i = np.clip(idx, 0, len(self.ts) - 2)
        t0 = self.ts[i]
        dt = self.ts[i + 1] - t0
        th = (t - t0) / dt
        h00 = (1 + 2 * th) * (1 - th) ** 2
        h10 = th * (1 - th) ** 2
        h01 = th * th * (3 - 2 * th)
        h11 = th * th * (th - 1)
        y0, y1 = self.values[i], self.values[i + 1]
        f0, f1 = self.derivs[i], self.derivs_minus[i + 1]
        if np.ndim(t) == 0:
            return h00 * y0 + h01 * y1 + dt * (h10 * f0 + h11 * f1)
        return (h00[:, None] * y0 + h01[:, None] * y1
                + dt[:, None] * (h10[:, None] * f0 + h11[:, None] * f1))

    def __call__(self, t: float) -> np.ndarray:
        if t < self.t_start - 1e-12 or t > self.t_end + 1e-12:
            raise DomainError(
                f"t = {t} outside trajectory domain [{self.t_start}, {self.t_end}]")
        t = min(max(t, self.t_start), self.t_end)
        idx = int(np.searchsorted(self.ts, t, side="right")) - 1
        return self._hermite(t, idx)

    def eval_many(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if np.any(ts < self.t_start - 1e-12) or np.any(ts > self.t_end + 1e-12):
            raise DomainError("evaluation points outside trajectory domain")
        tc = np.clip(ts, self.t_start, self.t_end)
        idx = np.searchsorted(self.ts, tc, side="right") - 1
        return self._hermite(tc, idx)

    def eval_extended(self, ts) -> np.ndarray:
        """Like eval_many but applying the history extension below t_start."""
        ts = np.asarray(np.atleast_1d(ts), dtype=float)
        out = np.empty((len(ts), self.values.shape[1]))
        below = ts < self.t_start
        if np.any(below):
            if self.history is None:
                raise DomainError("no history available to extend below the mesh")
            out[below, :self.n_state] = self.history.eval_many(ts[below])
            if self.values.shape[1] > self.n_state:
                out[below, self.n_state:] = self.values[0, self.n_state:]
        if np.any(~below):
            out[~below] = self.eval_many(ts[~below])
        return out

    def state_at(self, t: float) -> np.ndarray:
        return self(t)[:self.n_state]

    def to_csv(self, path) -> None:
        """Write nodes as t,x_1..x_n[,y_1..y_p] with 17 significant digits."""
        n, p = self.n_state, self.chain_order
        header = ["t"] + [f"x_{i+1}" for i in range(n)] \
            + [f"y_{j+1}" for j in range(p)]
        lines = [",".join(header)]
        for t, row in zip(self.ts, self.values):
            lines.append(",".join(f"{v:.17g}" for v in (t, *row)))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Assumption validation
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    status: str  # pass | fail | unknown
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    def add(self, name, status, detail=""):
        self.checks.append(CheckResult(name, status, detail))

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def failures(self):
        return [c for c in self.checks if c.status == "fail"]

    def __str__(self):
        width = max(len(c.name) for c in self.checks) if self.checks else 0
        return "\n".join(
            f"{c.name:<{width}}  {c.status}" + (f"  ({c.detail})" if c.detail else "")
            for c in self.checks)


def validate(model: ModelSpec, history: Optional[InitialHistory] = None,
             seed: int = 0) -> ValidationReport:
    """Check the delay-bound, kernel-integrability and Lipschitz assumptions.

    Built-in forms are checked exactly where possible; caller-supplied
    routines only by sampling, reported as ``unknown`` for the analytic
    properties.  The report never raises; failures are expected to abort
    downstream solves unless forced.
    """
    rng = np.random.default_rng(seed)
    rep = ValidationReport()
    d = model.delay

    # delay bounds and state-Lipschitz property
    if d.tau_min <= 0:
        rep.add("A1.delay_bounds", "fail",
                f"tau_min = {d.tau_min} must be positive")
    elif d.tau_max < d.tau_min:
        rep.add("A1.delay_bounds", "fail", "tau_max < tau_min")
    else:
        ok = True
        try:
            for _ in range(200):
                x = rng.normal(scale=5.0, size=model.dimension)
                t = rng.uniform(0, 10)
                tau = d(x, t)
                if not (d.tau_min - 1e-12 <= tau <= d.tau_max + 1e-12):
                    ok = False
                    break
        except DelayBoundsError:
            ok = False
        rep.add("A1.delay_bounds", "pass" if ok else "fail",
                f"tau in [{d.tau_min}, {d.tau_max}]")
        lips_ok = True
        for _ in range(200):
            x = rng.normal(scale=3.0, size=model.dimension)
            y = rng.normal(scale=3.0, size=model.dimension)
            t = rng.uniform(0, 10)
            if abs(d(x, t) - d(y, t)) > d.L_tau * np.linalg.norm(x - y) + 1e-9:
                lips_ok = False
                break
        if d.form == "callable":
            rep.add("A1.delay_lipschitz", "pass" if lips_ok else "fail",
                    "sampled only (caller-supplied routine)")
        else:
            rep.add("A1.delay_lipschitz", "pass" if lips_ok else "fail")
        if d.form == "constant" and d.L_tau != 0.0:
            rep.add("A1.constant_L_tau", "fail", "constant delay must have L_tau = 0")

    # kernel nonnegativity and integrability
    k = model.kernel
    if isinstance(k, GammaKernel):
        rep.add("A2.kernel_nonneg", "pass", "Gamma density is nonnegative")
        rep.add("A2.kernel_mass", "pass", "unit mass on [0, inf)")
    elif isinstance(k, TabulatedKernel):
        if np.any(k.values < 0):
            rep.add("A2.kernel_nonneg", "fail", "negative sample in tabulated kernel")
        else:
            rep.add("A2.kernel_nonneg", "pass")
        mass = float(np.trapezoid(k.values, k.s))
        rep.add("A2.kernel_mass", "pass" if math.isfinite(mass) else "fail",
                f"mass ~ {mass:.6g}")
    elif isinstance(k, NonautonomousKernel):
        ss = np.linspace(0, k.tau_max, 64)
        ok = True
        sup = 0.0
        for t in np.linspace(0, 10, 16):
            vals = k(t, t - ss)
            if np.any(vals < -1e-12) or not np.all(np.isfinite(vals)):
                ok = False
            sup = max(sup, float(np.trapezoid(np.abs(vals), ss)))
        rep.add("A2.kernel_nonneg", "pass" if ok else "fail",
                "sampled on the simulation window")
        rep.add("A2.kernel_mass", "pass" if math.isfinite(sup) else "fail",
                f"sup_t integral ~ {sup:.6g} (sampled)")
    else:
        rep.add("A2.kernel_nonneg", "unknown", "unrecognized kernel type")

    # right-hand side
    if isinstance(model.rhs, LogisticMemoryModel):
        rep.add("A3.rhs_lipschitz", "pass",
                "built-in logistic-memory model is smooth")
    else:
        ok = True
        try:
            for _ in range(50):
                args = [rng.uniform(0, 5)] + [rng.normal(size=model.dimension)
                                              for _ in range(3)]
                v = np.asarray(model.rhs(*args), dtype=float)
                if not np.all(np.isfinite(v)):
                    ok = False
                    break
        except Exception:
            ok = False
        rep.add("A3.rhs_lipschitz", "unknown" if ok else "fail",
                "caller-supplied rhs: finiteness sampled, Lipschitz not verifiable")

    if history is not None:
        cont = history.check_continuity()
        rep.add("history.continuity", "pass" if cont else "fail")

    return rep


def eval_history(h: InitialHistory, t: float) -> np.ndarray:
    """Value of phi(t) for t <= 0, applying the extension policy below -tau_max."""
    return h(t)

"""Time integration and fixed-point reference solver.

Two independent routes to the same solution: a fixed-step classical
Runge-Kutta method with cubic Hermite dense output (delayed states are
read from the interpolant of the already-computed past), and a Picard
iteration of the integral operator underlying the local existence
argument.  The well-posedness certificate packages the contraction
constants.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .core import (
    GammaKernel,
    InitialHistory,
    LogisticMemoryModel,
    ModelSpec,
    NonautonomousKernel,
    TabulatedKernel,
    Trajectory,
    UnsupportedKernelError,
)
from .memory import ChainSystem, chain_reduce, kernel_mass, memory_lipschitz_bound


class NonConvergenceError(RuntimeError):
    """An iterative stage failed to converge."""


@dataclass(frozen=True)
class SolveConfig:
    """Fixed-step integration settings.

    ``memory_mode`` selects chain co-integration (Gamma kernels only)
    or direct quadrature of the memory integral.  With the default
    ``reject`` policy the step must satisfy h <= tau_min/2 so delayed
    arguments never land in the step being computed; the alternative
    ``fixed-point`` policy iterates the step instead.
    """

    h: float
    t_end: float
    memory_mode: str = "chain"  # chain | quadrature
    blowup_threshold: float = 1e8
    within_step_policy: str = "reject"  # reject | fixed-point
    stage_tol: float = 1e-12
    max_stage_iter: int = 10

    def __post_init__(self):
        if self.h <= 0 or self.t_end <= 0:
            raise ValueError("need h > 0 and t_end > 0")
        if self.memory_mode not in ("chain", "quadrature"):
            raise ValueError(f"unknown memory_mode {self.memory_mode!r}")
        if self.within_step_policy not in ("reject", "fixed-point"):
            raise ValueError(f"unknown within_step_policy {self.within_step_policy!r}")


@dataclass(frozen=True)
class Certificate:
    """Contraction data (L, T0) for the local existence interval.

    C_tau bounds the state-dependent delay evaluation, L is the
    Lipschitz constant of the right-hand side on the history space, and
    L * T0 < 1 guarantees the integral operator contracts on [0, T0].
    """

    C_tau: float
    L: float
    T0: float
    L_F: float
    L_x: float
    L_tau: float
    C_K: float
    R: Optional[float]
    safety: float

    def __str__(self):
        lines = [
            "well-posedness certificate",
            f"  inputs: L_F = {self.L_F:.17g}, L_x = {self.L_x:.17g}, "
            f"L_tau = {self.L_tau:.17g}, C_K = {self.C_K:.17g}",
            f"  R = {self.R if self.R is not None else 'n/a'}",
            f"  C_tau = L_x*L_tau + 1 = {self.C_tau:.17g}",
            f"  L = L_F*(1 + C_tau + C_K) = {self.L:.17g}",
            f"  T0 = safety/L = {self.T0:.17g}  (safety = {self.safety:.17g})",
            f"  contraction factor L*T0 = {self.L * self.T0:.17g} < 1",
        ]
        return "\n".join(lines)


def wellposedness_certificate(L_F: float, L_x: float, L_tau: float, C_K: float,
                              safety: float = 0.9, R: Optional[float] = None) -> Certificate:
    """Certificate with C_tau = L_x*L_tau + 1, L = L_F*(1+C_tau+C_K), T0 = safety/L."""
    vals = (L_F, L_x, L_tau, C_K, safety)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("certificate inputs must be finite")
    if L_F <= 0 or min(L_x, L_tau, C_K) < 0:
        raise ValueError("need L_F > 0 and L_x, L_tau, C_K >= 0")
    if not 0 < safety < 1:
        raise ValueError("safety must lie in (0, 1)")
    C_tau = L_x * L_tau + 1.0
    L = L_F * (1.0 + C_tau + C_K)
    return Certificate(C_tau=C_tau, L=L, T0=safety / L, L_F=L_F, L_x=L_x,
                       L_tau=L_tau, C_K=C_K, R=R, safety=safety)


# ---------------------------------------------------------------------------
# Runge-Kutta integration
# ---------------------------------------------------------------------------

def _history_mesh(history: InitialHistory, tau_max: float, h: float):
    m = max(2, int(math.ceil(tau_max / h - 1e-12)))
    ts = np.linspace(-tau_max, 0.0, m + 1)
    xs = np.array([history(t) for t in ts])
    fs = np.array([history.derivative(t) for t in ts])
    return ts, xs, fs


def _hermite_point(t, t0, t1, y0, y1, f0, f1):
    dt = t1 - t0
    th = (t - t0) / dt
    h00 = (1 + 2 * th) * (1 - th) ** 2
    h10 = th * (1 - th) ** 2
    h01 = th * th * (3 - 2 * th)
    h11 = th * th * (th - 1)
    return h00 * y0 + h01 * y1 + dt * (h10 * f0 + h11 * f1)


def _integrate_benchmark_chain(model: ModelSpec, history: InitialHistory,
                               cfg: SolveConfig, chain: ChainSystem) -> Trajectory:
    """Scalar logistic benchmark with chain memory: plain-float inner loop.

    The benchmark right-hand side does not use the discrete-delay
    channel, so the delayed lookup is skipped here; the general path
    handles every other case.
    """
    rhs = model.rhs
    r, Kc, al = rhs.r, rhs.K_c, rhs.alpha
    beta, p = chain.rate, chain.order
    h, t_end, blow = cfg.h, cfg.t_end, cfg.blowup_threshold

    hist_ts, hist_xs, hist_fs = _history_mesh(history, model.delay.tau_max, h)
    y0 = [float(chain.y0[j, 0]) for j in range(p)]

    n_steps = int(math.ceil(t_end / h - 1e-9))
    ts = [0.0]
    vals = [[float(hist_xs[-1, 0])] + y0]
    blown = False

    def f(state):
        x = state[0]
        ys = state[1:]
        out = [r * x * (1.0 - x / Kc) - al * ys[p - 1]]
        out.append(beta * (x - ys[0]))
        for j in range(1, p):
            out.append(beta * (ys[j - 1] - ys[j]))
        return out

    derivs = [f(vals[0])]
    state = vals[0]
    t = 0.0
    for k in range(n_steps):
        hk = min(h, t_end - t)
        k1 = derivs[-1]
        s2 = [state[i] + 0.5 * hk * k1[i] for i in range(p + 1)]
        k2 = f(s2)
        s3 = [state[i] + 0.5 * hk * k2[i] for i in range(p + 1)]
        k3 = f(s3)
        s4 = [state[i] + hk * k3[i] for i in range(p + 1)]
        k4 = f(s4)
        new = [state[i] + hk / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
               for i in range(p + 1)]
        if not all(math.isfinite(v) for v in new) or abs(new[0]) > blow:
            blown = True
            break
        t += hk
        state = new
        ts.append(t)
        vals.append(state)
        derivs.append(f(state))

    n_hist = len(hist_ts)
    all_ts = np.concatenate((hist_ts[:-1], np.asarray(ts)))
    all_vals = np.empty((len(all_ts), 1 + p))
    all_vals[:n_hist - 1, 0] = hist_xs[:-1, 0]
    all_vals[:n_hist - 1, 1:] = np.asarray(y0)
    all_vals[n_hist - 1:] = np.asarray(vals)
    all_fs = np.zeros_like(all_vals)
    all_fs[:n_hist - 1, 0] = hist_fs[:-1, 0]
    all_fs[n_hist - 1:] = np.asarray(derivs)
    all_fs_minus = all_fs.copy()
    all_fs_minus[n_hist - 1] = 0.0
    all_fs_minus[n_hist - 1, 0] = hist_fs[-1, 0]  # phi'(0-) at the junction
    return Trajectory(all_ts, all_vals, all_fs, n_state=1, history=history,
                      blown_up=blown, chain_order=p, derivs_minus=all_fs_minus)


class _MeshView:
    """Growable mesh with Hermite lookup, including a provisional tail
    that extends the last committed cubic (used for memory quadrature
    at stage times inside the current step)."""

    def __init__(self, capacity, width):
        self.ts = np.empty(capacity)
        self.vals = np.empty((capacity, width))
        self.fs = np.empty((capacity, width))       # right-sided derivative
        self.fs_minus = np.empty((capacity, width))  # left-sided derivative
        self.count = 0

    def append(self, t, v, f, f_minus=None):
        self.ts[self.count] = t
        self.vals[self.count] = v
        self.fs[self.count] = f
        self.fs_minus[self.count] = f if f_minus is None else f_minus
        self.count += 1

    def eval(self, t, history=None, n_state=None, allow_beyond=False):
        c = self.count
        if t < self.ts[0] - 1e-12:
            if history is None:
                raise ValueError(f"lookup at t = {t} before mesh start")
            out = self.vals[0].copy()
            out[:n_state] = history(t)
            return out
        if t > self.ts[c - 1] + 1e-12 and not allow_beyond:
            raise ValueError(f"lookup at t = {t} beyond computed mesh")
        i = int(np.searchsorted(self.ts[:c], min(t, self.ts[c - 1]),
                                side="right")) - 1
        i = min(max(i, 0), c - 2)
        return _hermite_point(t, self.ts[i], self.ts[i + 1], self.vals[i],
                              self.vals[i + 1], self.fs[i], self.fs_minus[i + 1])

    def eval_many_states(self, pts, history, n_state):
        """Vectorized state lookup at sorted times; extrapolates the
        last committed cubic beyond the mesh end."""
        c = self.count
        ts = self.ts[:c]
        out = np.empty((len(pts), n_state))
        below = pts < ts[0] - 1e-12
        if np.any(below):
            out[below] = history.eval_many(pts[below])
        rest = np.nonzero(~below)[0]
        if len(rest):
            tp = pts[rest]
            i = np.clip(np.searchsorted(ts, np.minimum(tp, ts[-1]),
                                        side="right") - 1, 0, c - 2)
            t0 = ts[i]
            dt = ts[i + 1] - t0
            th = (tp - t0) / dt
            h00 = (1 + 2 * th) * (1 - th) ** 2
            h10 = th * (1 - th) ** 2
            h01 = th * th * (3 - 2 * th)
            h11 = th * th * (th - 1)
            v = (h00[:, None] * self.vals[i, :n_state]
                 + h01[:, None] * self.vals[i + 1, :n_state]
                 + (dt * h10)[:, None] * self.fs[i, :n_state]
                 + (dt * h11)[:, None] * self.fs_minus[i + 1, :n_state])
            out[rest] = v
        return out

    def as_trajectory(self, n_state, history, chain_order=0, blown_up=False):
        c = self.count
        return Trajectory(self.ts[:c], self.vals[:c], self.fs[:c],
                          n_state=n_state, history=history,
                          blown_up=blown_up, chain_order=chain_order,
                          derivs_minus=self.fs_minus[:c].copy())


def _quad_memory(mesh: _MeshView, kernel, t, n_state, history, refine=2):
    """Single-pass Simpson memory integral over mesh-aligned panels."""
    if isinstance(kernel, TabulatedKernel) and kernel.is_zero:
        return np.zeros(n_state)
    support = kernel.support if not isinstance(kernel, NonautonomousKernel) \
        else kernel.tau_max
    lo, hi = t - support, t
    c = mesh.count
    inner = mesh.ts[:c][(mesh.ts[:c] > lo + 1e-14) & (mesh.ts[:c] < hi - 1e-14)]
    edges = np.concatenate(([lo], inner, [hi]))
    # the window can reach far below the mesh; cap the panel width there
    # so the kernel stays resolved
    w_max = (hi - lo) / 256.0
    gaps = np.diff(edges)
    big = np.nonzero(gaps > w_max)[0]
    if big.size:
        extra = [np.linspace(edges[i], edges[i + 1],
                             int(np.ceil(gaps[i] / w_max)) + 1)[1:-1]
                 for i in big]
        edges = np.sort(np.concatenate([edges] + extra))
    offs = np.arange(refine) / refine
    pts = np.concatenate(
        ((edges[:-1, None] + np.diff(edges)[:, None] * offs[None, :]).ravel(), [hi]))
    xs = mesh.eval_many_states(pts, history, n_state)
    if isinstance(kernel, NonautonomousKernel):
        kv = kernel(t, pts)
    else:
        kv = kernel(t - pts)
    w = np.ones(refine + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    n_panels = len(edges) - 1
    idx = np.arange(n_panels)[:, None] * refine + np.arange(refine + 1)
    seg = (kv[:, None] * xs)[idx]
    hh = (np.diff(edges) / refine)[:, None]
    return (hh / 3.0 * (w[None, :, None] * seg).sum(axis=1)).sum(axis=0)


def integrate(model: ModelSpec, history: InitialHistory,
              cfg: SolveConfig) -> Trajectory:
    """Solve the delay equation by fixed-step classical Runge-Kutta.

    Delayed states come from the cubic Hermite interpolant of the
    already-computed trajectory; the memory channel is co-integrated as
    chain variables (Gamma kernels) or evaluated by quadrature.  The
    trajectory includes the history segment.  Integration stops early
    with ``blown_up`` set if the state norm exceeds the blow-up
    threshold or turns non-finite.
    """
    n = model.dimension
    delay = model.delay
    kernel = model.kernel
    chain_mode = cfg.memory_mode == "chain"
    if chain_mode and not isinstance(kernel, GammaKernel):
        raise UnsupportedKernelError("chain memory mode requires a Gamma kernel")
    if cfg.within_step_policy == "reject" and cfg.h > delay.tau_min / 2 + 1e-15:
        raise ValueError(
            "h must satisfy h <= tau_min/2 under the reject policy "
            f"(h = {cfg.h}, tau_min = {delay.tau_min})")

    chain = chain_reduce(kernel, history) if chain_mode else None
    if chain_mode and isinstance(model.rhs, LogisticMemoryModel) and n == 1 \
            and cfg.within_step_policy == "reject":
        return _integrate_benchmark_chain(model, history, cfg, chain)

    p = chain.order if chain_mode else 0
    width = n * (1 + p)
    h, t_end = cfg.h, cfg.t_end
    hist_ts, hist_xs, hist_fs = _history_mesh(history, delay.tau_max, h)
    n_steps = int(math.ceil(t_end / h - 1e-9))
    mesh = _MeshView(len(hist_ts) + n_steps + 2, width)
    for i in range(len(hist_ts)):
        v = np.empty(width)
        f = np.zeros(width)
        v[:n] = hist_xs[i]
        f[:n] = hist_fs[i]
        if p:
            v[n:] = chain.y0.ravel()
        mesh.append(hist_ts[i], v, f)

    beta = chain.rate if chain_mode else 0.0

    def rhs_full(t, z):
        x = z[:n]
        tau = delay(x, t)
        xd = mesh.eval(t - tau, history, n)[:n]
        if chain_mode:
            M = z[n + (p - 1) * n: n + p * n]
        else:
            M = _quad_memory(mesh, kernel, t, n, history)
        dz = np.empty(width)
        dz[:n] = np.atleast_1d(model.rhs(t, x, xd, M))
        if chain_mode:
            ys = z[n:].reshape(p, n)
            dz[n:2 * n] = beta * (x - ys[0])
            for j in range(1, p):
                dz[n * (1 + j): n * (2 + j)] = beta * (ys[j - 1] - ys[j])
        return dz

    blown = False
    fixed_point = cfg.within_step_policy == "fixed-point"
    z = mesh.vals[mesh.count - 1].copy()
    f_node = rhs_full(0.0, z)
    mesh.fs[mesh.count - 1] = f_node
    t = 0.0

    for _ in range(n_steps):
        hk = min(h, t_end - t)
        if fixed_point:
            # provisional endpoint node, refined by within-step iteration
            mesh.append(t + hk, z + hk * f_node, f_node)
        prev = None
        z_new = None
        for _ in range(cfg.max_stage_iter if fixed_point else 1):
            k1 = f_node
            k2 = rhs_full(t + hk / 2, z + hk / 2 * k1)
            k3 = rhs_full(t + hk / 2, z + hk / 2 * k2)
            k4 = rhs_full(t + hk, z + hk * k3)
            z_new = z + hk / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(z_new)):
                break
            if fixed_point:
                mesh.vals[mesh.count - 1] = z_new
                f_end = rhs_full(t + hk, z_new)
                mesh.fs[mesh.count - 1] = f_end
                mesh.fs_minus[mesh.count - 1] = f_end
                if prev is not None and np.max(np.abs(z_new - prev)) < cfg.stage_tol:
                    break
                prev = z_new
        else:
            if fixed_point:
                raise NonConvergenceError(
                    "within-step fixed point did not converge")
        if not np.all(np.isfinite(z_new)) \
                or np.linalg.norm(z_new[:n], ord=np.inf) > cfg.blowup_threshold:
            if fixed_point:
                mesh.count -= 1  # drop the provisional node
            blown = True
            break
        t += hk
        z = z_new
        if fixed_point:
            f_node = mesh.fs[mesh.count - 1].copy()
        else:
            mesh.append(t, z, np.zeros(width))
            f_node = rhs_full(t, z)
            mesh.fs[mesh.count - 1] = f_node
            mesh.fs_minus[mesh.count - 1] = f_node

    return mesh.as_trajectory(n, history, chain_order=p, blown_up=blown)


# ---------------------------------------------------------------------------
# Picard fixed-point solver
# ---------------------------------------------------------------------------

@dataclass
class PicardResult:
    trajectory: Trajectory
    ratios: list
    converged: bool
    iterations: int
    final_diff: float


def _certificate_for(model: ModelSpec, T: float):
    if model.lipschitz is None:
        return None
    try:
        C_K = memory_lipschitz_bound(model.kernel, window=(0.0, T))
    except (UnsupportedKernelError, ValueError):
        return None
    return wellposedness_certificate(model.lipschitz.L_F, model.lipschitz.L_x,
                                     model.delay.L_tau, C_K, R=model.lipschitz.R)


def picard_solve(model: ModelSpec, history: InitialHistory, T: float,
                 grid_n: int = 1000, tol: float = 1e-8,
                 max_iter: int = 60) -> PicardResult:
    """Iterate the integral operator x -> phi(0) + int_0^t F(...) ds.

    Runs on a uniform grid with trapezoidal quadrature, starting from
    the constant extension of phi(0).  Records the per-iteration
    sup-norm contraction ratios; failure to converge inside max_iter is
    reported (signalling L*T >= 1 or T too large), not raised.
    """
    cert = _certificate_for(model, T)
    if cert is not None and T > cert.T0:
        warnings.warn(f"T = {T} exceeds certified contraction window T0 = {cert.T0}")

    n = model.dimension
    delay = model.delay
    kernel = model.kernel
    s = np.linspace(0.0, T, grid_n)
    phi0 = history(0.0)
    X = np.tile(phi0, (grid_n, 1))

    zero_kernel = isinstance(kernel, TabulatedKernel) and kernel.is_zero
    if not zero_kernel:
        support = kernel.tau_max if isinstance(kernel, NonautonomousKernel) \
            else kernel.support
        Nq = 800
        sig = np.linspace(0.0, support, Nq + 1)
        wq = np.ones(Nq + 1)
        wq[1:-1:2] = 4.0
        wq[2:-1:2] = 2.0
        wq *= (sig[1] - sig[0]) / 3.0
        if not isinstance(kernel, NonautonomousKernel):
            kv = kernel(sig)

    def iterate_eval(X, tq):
        out = np.empty((len(tq), n))
        neg = tq <= 0
        if np.any(neg):
            out[neg] = history.eval_many(np.minimum(tq[neg], 0.0))
        if np.any(~neg):
            for d in range(n):
                out[~neg, d] = np.interp(tq[~neg], s, X[:, d])
        return out

    def integrand(X):
        G = np.empty((grid_n, n))
        if zero_kernel:
            M = np.zeros((grid_n, n))
        else:
            M = np.empty((grid_n, n))
            for j, t in enumerate(s):
                xv = iterate_eval(X, t - sig)
                if isinstance(kernel, NonautonomousKernel):
                    kvj = kernel(t, t - sig)
                else:
                    kvj = kv
                M[j] = wq @ (kvj[:, None] * xv)
        for j, t in enumerate(s):
            tau = delay(X[j], t)
            xd = iterate_eval(X, np.array([t - tau]))[0]
            G[j] = np.atleast_1d(model.rhs(t, X[j], xd, M[j]))
        return G

    ratios = []
    prev_diff = None
    converged = False
    diff = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        G = integrand(X)
        Xnew = phi0[None, :] + cumulative_trapezoid(G, s, axis=0, initial=0.0)
        diff = float(np.max(np.abs(Xnew - X)))
        if prev_diff is not None and prev_diff > 0:
            ratios.append(diff / prev_diff)
        X = Xnew
        if diff < tol:
            converged = True
            break
        prev_diff = diff

    G = integrand(X)
    hist_ts, hist_xs, hist_fs = _history_mesh(history, delay.tau_max,
                                              max(T / (grid_n - 1), delay.tau_max / 512))
    all_ts = np.concatenate((hist_ts[:-1], s))
    all_xs = np.vstack((hist_xs[:-1], X))
    all_fs = np.vstack((hist_fs[:-1], G))
    all_fs_minus = all_fs.copy()
    all_fs_minus[len(hist_ts) - 1] = hist_fs[-1]  # phi'(0-) at the junction
    traj = Trajectory(all_ts, all_xs, all_fs, n_state=n, history=history,
                      derivs_minus=all_fs_minus)
    return PicardResult(trajectory=traj, ratios=ratios, converged=converged,
                        iterations=it, final_diff=diff)


@dataclass
class CrossValidateReport:
    sup_diff: float
    passed: bool
    picard_converged: bool
    T: float

    def __str__(self):
        return (f"cross-validation on [0, {self.T:.17g}]\n"
                f"  sup |x_rk - x_picard| = {self.sup_diff:.17g}\n"
                f"  picard converged: {self.picard_converged}\n"
                f"  pass: {self.passed}")


def cross_validate(model: ModelSpec, history: InitialHistory, T: float,
                   h: float = 1e-3, grid_n: int = 1000,
                   pass_tol: float = 1e-5) -> CrossValidateReport:
    """Run both solvers on [0, T] and report their sup-norm disagreement."""
    memory_mode = "chain" if isinstance(model.kernel, GammaKernel) else "quadrature"
    cfg = SolveConfig(h=h, t_end=T, memory_mode=memory_mode)
    traj = integrate(model, history, cfg)
    pic = picard_solve(model, history, T, grid_n=grid_n)
    s = np.linspace(0.0, T, grid_n)
    rk_vals = traj.eval_many(s)[:, :model.dimension]
    pi_vals = pic.trajectory.eval_many(s)[:, :model.dimension]
    sup = float(np.max(np.abs(rk_vals - pi_vals)))
    return CrossValidateReport(sup_diff=sup, passed=sup <= pass_tol,
                               picard_converged=pic.converged, T=T)

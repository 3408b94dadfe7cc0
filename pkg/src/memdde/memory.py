"""Distributed-memory operator: quadrature evaluation and chain reduction.

M(t) = integral of K(t-s) x(s) ds over the kernel support ending at t.
For Gamma kernels the convolution is equivalently a cascade of linear
ODEs (one per kernel order) whose last component equals M(t); that
reduction is exact for the continuous problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

from .core import (
    GammaKernel,
    InitialHistory,
    NonautonomousKernel,
    TabulatedKernel,
    Trajectory,
    UnsupportedKernelError,
    gamma_density,
)


def _simpson_uniform(values: np.ndarray, h: float) -> float:
    """Composite Simpson on a uniform grid with an even panel count."""
    n = len(values) - 1
    if n % 2 != 0:
        raise ValueError("Simpson needs an even number of subintervals")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(h / 3.0 * np.dot(w, values))


def kernel_mass(k) -> float:
    """Total kernel mass kappa = integral of K over its support.

    Gamma kernels have unit mass on [0, inf); an explicitly set horizon
    truncates the mass analytically.  Tabulated kernels integrate by
    composite Simpson on the sample mesh.  Nonautonomous kernels have a
    time-dependent mass and are rejected.
    """
    if isinstance(k, GammaKernel):
        if k.horizon is None:
            return 1.0
        return float(gammainc(k.order, k.rate * k.horizon))
    if isinstance(k, TabulatedKernel):
        s, v = k.s, k.values
        if len(s) >= 3 and len(s) % 2 == 1 and np.allclose(np.diff(s), s[1] - s[0]):
            return _simpson_uniform(v, s[1] - s[0])
        # non-uniform or even-panel meshes: refine onto the spline
        grid = np.linspace(s[0], s[-1], 2 * len(s) * 8 + 1)
        return _simpson_uniform(k(grid), grid[1] - grid[0])
    raise UnsupportedKernelError("mass is time-dependent for nonautonomous kernels")


def memory_lipschitz_bound(k, window=None, grid_n: int = 200) -> float:
    """Bound C_K with |M[x](t) - M[y](t)| <= C_K * sup |x - y| on the window.

    For convolution kernels this is the kernel mass.  For nonautonomous
    kernels it is a sampled lower bound: the sup over a uniform grid of
    grid_n times on the window (spacing (t1-t0)/grid_n).
    """
    if isinstance(k, (GammaKernel, TabulatedKernel)):
        return kernel_mass(k)
    if isinstance(k, NonautonomousKernel):
        if window is None:
            raise ValueError("nonautonomous kernels need an explicit time window")
        t0, t1 = window
        ss = np.linspace(0.0, k.tau_max, 513)
        best = 0.0
        for t in np.linspace(t0, t1, grid_n + 1):
            vals = np.abs(k(t, t - ss))
            best = max(best, _simpson_uniform(vals, ss[1] - ss[0]))
        return best
    raise UnsupportedKernelError(f"unrecognized kernel type {type(k)!r}")


def _quadrature_points(traj: Trajectory, lo: float, hi: float, refine: int):
    """Panel edges aligned with the trajectory mesh, each split into
    `refine` Simpson subintervals."""
    inner = traj.ts[(traj.ts > lo + 1e-14) & (traj.ts < hi - 1e-14)]
    edges = np.concatenate(([lo], inner, [hi]))
    # the window can extend far past the mesh (kernel support beyond the
    # declared history); cap the panel width so the kernel stays resolved
    w_max = (hi - lo) / 256.0
    gaps = np.diff(edges)
    big = np.nonzero(gaps > w_max)[0]
    if big.size:
        extra = [np.linspace(edges[i], edges[i + 1],
                             int(np.ceil(gaps[i] / w_max)) + 1)[1:-1]
                 for i in big]
        edges = np.sort(np.concatenate([edges] + extra))
    offs = np.arange(refine) / refine
    pts = (edges[:-1, None] + np.diff(edges)[:, None] * offs[None, :]).ravel()
    return edges, np.concatenate((pts, [hi]))


def _panel_simpson(edges, pts, fvals, refine):
    w = np.ones(refine + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    n_panels = len(edges) - 1
    idx = np.arange(n_panels)[:, None] * refine + np.arange(refine + 1)
    seg = fvals[idx]                       # (panels, refine+1, n)
    h = (np.diff(edges) / refine)[:, None]
    per_panel = (w[None, :, None] * seg).sum(axis=1)
    return (h / 3.0 * per_panel).sum(axis=0)


def eval_memory_quadrature(traj: Trajectory, k, t: float, refine: int = 8):
    """Memory value M(t) by composite Simpson, with an error estimate.

    Panels follow the trajectory mesh (so no panel straddles a
    derivative break); each is refined into ``refine`` subintervals.
    The attached absolute error estimate comes from one Richardson
    halving (refine vs 2*refine).  Returns (value, error_estimate);
    value has shape (n_state,).
    """
    if refine % 2 != 0 or refine < 2:
        raise ValueError("refine must be an even integer >= 2")
    support = k.support
    lo, hi = t - support, t
    if lo < traj.t_start and traj.history is None:
        raise ValueError("trajectory cannot cover the memory window")

    def integral(rf):
        edges, pts = _quadrature_points(traj, lo, hi, rf)
        x = traj.eval_extended(pts)[:, :traj.n_state]
        if isinstance(k, NonautonomousKernel):
            kv = k(t, pts)
        else:
            kv = k(t - pts)
        return _panel_simpson(edges, pts, kv[:, None] * x, rf)

    coarse = integral(refine)
    fine = integral(2 * refine)
    err = float(np.max(np.abs(fine - coarse))) / 15.0
    return fine, err


@dataclass
class ChainSystem:
    """Cascade replacing a Gamma(p, rate) convolution.

    y_1' = rate (x - y_1), y_j' = rate (y_{j-1} - y_j); the output
    channel is y_p = M(t).  Holds per-integration state and must not be
    shared between concurrent solves.
    """

    rate: float
    order: int
    y0: np.ndarray  # (p, n)

    @property
    def dimension(self) -> int:
        return self.order


def _history_moment(order: int, rate: float, h: InitialHistory,
                    horizon: float, tol: float = 1e-12) -> np.ndarray:
    """integral over [0, horizon] of Gamma(order, rate) density times phi(-s)."""
    n = 512
    prev = None
    while True:
        ss = np.linspace(0.0, horizon, n + 1)
        kv = gamma_density(order, rate, ss)
        phi = np.array([h(-s) for s in ss])
        val = _panel_simpson(np.array([0.0, horizon]),
                            ss, kv[:, None] * phi, n)
        if prev is not None and np.max(np.abs(val - prev)) / 15.0 < tol:
            return val
        if n >= 65536:
            return val
        prev = val
        n *= 2


def chain_reduce(k: GammaKernel, h: InitialHistory) -> ChainSystem:
    """Build the chain system for a Gamma kernel, initialized from the history.

    y_j(0) is the Gamma(j, rate) moment of the history (with the
    history's extension policy applied beyond its declared window), so
    that y_p(t) reproduces M(t) exactly for the continuous problem.
    """
    if not isinstance(k, GammaKernel):
        raise UnsupportedKernelError("chain reduction is exact only for Gamma kernels")
    horizon = k.support
    y0 = np.array([
        _history_moment(j, k.rate, h, horizon, tol=min(k.tail_tol, 1e-12))
        for j in range(1, k.order + 1)
    ])
    return ChainSystem(rate=k.rate, order=k.order, y0=y0)

"""Figure rendering for the CLI report paths (written next to the CSVs)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import _cubic_for


def plot_trajectory(traj, path):
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for i in range(traj.n_state):
        ax.plot(traj.ts, traj.values[:, i], lw=1.0, label=f"x_{i+1}")
    for j in range(traj.chain_order):
        ax.plot(traj.ts, traj.values[:, traj.n_state + j], lw=0.8, ls="--",
                alpha=0.6, label=f"y_{j+1}")
    ax.axvline(0.0, color="k", lw=0.5, alpha=0.4)
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    if traj.blown_up:
        ax.set_title("trajectory (terminated: blow-up)")
    else:
        ax.set_title("trajectory")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_roots(labelled_roots, path):
    """labelled_roots: list of (label, iterable of complex roots)."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for label, roots in labelled_roots:
        roots = np.asarray(roots)
        ax.scatter(roots.real, roots.imag, s=40, label=label)
    ax.axvline(0.0, color="k", lw=0.7)
    ax.axhline(0.0, color="k", lw=0.3, alpha=0.5)
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_title("characteristic roots")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_hopf_curves(r, beta, path, alpha_max=None):
    if alpha_max is None:
        alpha_max = r
    alphas = np.linspace(1e-3, alpha_max - 1e-3, 400)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for source in ("derived-eq4", "paper-eq7"):
        g = [(_cubic_for(a, r, beta, source).A * _cubic_for(a, r, beta, source).B
              - _cubic_for(a, r, beta, source).C) for a in alphas]
        ax.plot(alphas, g, label=f"A*B - C ({source})")
    ax.axhline(0.0, color="k", lw=0.7)
    ax.set_xlabel("alpha")
    ax.set_ylabel("A*B - C")
    ax.set_title(f"Hopf condition, r = {r:g}, beta = {beta:g}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep(rows, path):
    betas = sorted({row.beta for row in rows})
    alphas = sorted({row.alpha for row in rows})
    grid = np.full((len(betas), len(alphas)), np.nan)
    bi = {b: i for i, b in enumerate(betas)}
    ai = {a: i for i, a in enumerate(alphas)}
    for row in rows:
        grid[bi[row.beta], ai[row.alpha]] = row.max_re_lambda
    fig, ax = plt.subplots(figsize=(7, 5))
    im = ax.pcolormesh(alphas, betas, grid, shading="nearest", cmap="RdBu_r",
                       vmin=-np.nanmax(np.abs(grid)), vmax=np.nanmax(np.abs(grid)))
    fig.colorbar(im, ax=ax, label="max Re lambda")
    ax.set_xlabel("alpha")
    ax.set_ylabel("beta")
    ax.set_title("stability sweep (derived cubic)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

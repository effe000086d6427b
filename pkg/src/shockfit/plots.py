"""Figure rendering for the report paths: solution profiles, loss curves,
parameter-scan contours, and learned-source maps, saved next to the CSVs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_profile_figure",
    "save_history_figure",
    "save_scan_figure",
    "save_source_figure",
]

_PROFILE_FIELDS = (("rho", "density"), ("u", "velocity"), ("p", "pressure"),
                   ("T", "temperature"))


def save_profile_figure(path, x, fields: dict, reference: dict | None = None,
                        title: str = ""):
    """2x2 panel of (rho, u, p, T) profiles, with an optional exact overlay."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    for ax, (key, label) in zip(axes.ravel(), _PROFILE_FIELDS):
        if key in fields:
            ax.plot(x, fields[key], "-", lw=1.2, label="solution")
        if reference is not None and key in reference:
            ax.plot(x, reference[key], "k--", lw=1.0, label="exact")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("x")
    axes[0, 0].legend(loc="best", fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_history_figure(path, history, title: str = ""):
    """Total and per-term loss curves on a log axis."""
    rows = np.asarray([list(r) for r in history], dtype=np.float64)
    it = rows[:, 0]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for col, label in ((6, "total"), (1, "pde"), (2, "bc"), (3, "ic"),
                       (4, "data"), (5, "reg")):
        series = rows[:, col]
        if np.any(series > 0):
            ax.semilogy(it, np.maximum(series, 1e-300), lw=1.1, label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_scan_figure(path, slices: dict, field: str = "rho", title: str = ""):
    """Overlay of one field across gamma slices plus an (x, gamma) contour."""
    gammas = sorted(slices.keys())
    x = slices[gammas[0]]["x"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))
    for g in gammas:
        ax1.plot(x, slices[g][field], lw=1.0, label=f"γ={g:.3f}")
    ax1.set_xlabel("x")
    ax1.set_ylabel(field)
    ax1.grid(alpha=0.3)
    ax1.legend(fontsize=7)
    z = np.stack([slices[g][field] for g in gammas])
    c = ax2.contourf(x, gammas, z, levels=30, cmap="viridis")
    fig.colorbar(c, ax=ax2, label=field)
    ax2.set_xlabel("x")
    ax2.set_ylabel("γ")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_source_figure(path, x, t, sources: np.ndarray, title: str = ""):
    """Heatmaps of each learned source f_i over (x, t)."""
    n_f = sources.shape[-1]
    fig, axes = plt.subplots(1, n_f, figsize=(4.0 * n_f, 3.6), squeeze=False)
    nt, nx = len(t), len(x)
    for i in range(n_f):
        fmap = sources[:, i].reshape(nt, nx)
        lim = max(np.abs(fmap).max(), 1e-12)
        im = axes[0, i].imshow(fmap, origin="lower", aspect="auto",
                               extent=(x[0], x[-1], t[0], t[-1]),
                               cmap="RdBu_r", vmin=-lim, vmax=lim)
        axes[0, i].set_title(f"f{i + 1}")
        axes[0, i].set_xlabel("x")
        fig.colorbar(im, ax=axes[0, i])
    axes[0, 0].set_ylabel("t")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)

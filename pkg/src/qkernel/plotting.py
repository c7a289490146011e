"""Optional PNG figures for sweep, denoising and tuning outputs.

matplotlib is imported lazily so the rest of the package never needs it.
"""
from __future__ import annotations

import numpy as np


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        from .errors import ConfigError

        raise ConfigError("--plot needs matplotlib (pip install 'artifact[plot]')") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _means(rows, key, value):
    xs = sorted({r[key] for r in rows})
    vals = [[r[value] for r in rows if r[key] == x] for x in xs]
    return np.array(xs), np.array([np.mean(v) for v in vals]), np.array([np.std(v) for v in vals])


def plot_series(rows, key, path, logx=False):
    """Seed-mean alignment and test accuracy against ``key`` with std error bars."""
    plt = _pyplot()
    fig, axes = plt.subplots(2, 1, figsize=(5, 6), sharex=True)
    for ax, value in zip(axes, ("test_accuracy", "alignment")):
        x, m, s = _means(rows, key, value)
        ax.errorbar(x, m, yerr=s, marker="o", capsize=3)
        ax.set_ylabel(value.replace("_", " "))
        if logx:
            ax.set_xscale("log")
    axes[-1].set_xlabel(key.replace("_", " "))
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_noise_sweep(rows, path):
    """Heat maps of seed-mean alignment and accuracy over (p1, p2), plus their scatter."""
    plt = _pyplot()
    p1s = sorted({r["p1"] for r in rows})
    p2s = sorted({r["p2"] for r in rows})
    grids = {}
    for value in ("alignment", "test_accuracy"):
        g = np.zeros((len(p1s), len(p2s)))
        for i, a in enumerate(p1s):
            for j, b in enumerate(p2s):
                g[i, j] = np.mean([r[value] for r in rows if r["p1"] == a and r["p2"] == b])
        grids[value] = g
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    for ax, value in zip(axes, ("alignment", "test_accuracy")):
        im = ax.imshow(grids[value], origin="lower", cmap="viridis")
        ax.set_xticks(range(len(p2s)), [f"{v:g}" for v in p2s])
        ax.set_yticks(range(len(p1s)), [f"{v:g}" for v in p1s])
        ax.set_xlabel("p2")
        ax.set_ylabel("p1")
        ax.set_title(value.replace("_", " "))
        fig.colorbar(im, ax=ax)
    axes[2].scatter(grids["alignment"].ravel(), grids["test_accuracy"].ravel())
    axes[2].set_xlabel("alignment")
    axes[2].set_ylabel("test accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_denoise(selection, path):
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    r = np.arange(1, len(selection.alignment_curve) + 1)
    axes[0].plot(r, selection.alignment_curve, marker="o")
    axes[0].axvline(selection.r_star, color="k", ls="--")
    axes[0].set_xlabel("rank r")
    axes[0].set_ylabel("alignment with reference")
    axes[1].bar(r, selection.eigenvalues)
    axes[1].set_xlabel("k")
    axes[1].set_ylabel("eigenvalue" if selection.method == "eig" else "singular value")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_surface(result, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    rows = result.surface
    if "rmse" in rows[0]:
        eps = sorted({r["epsilon"] for r in rows})
        Cs = sorted({r["C"] for r in rows})
        Z = np.full((len(eps), len(Cs)), np.nan)
        for r in rows:
            Z[eps.index(r["epsilon"]), Cs.index(r["C"])] = r["rmse"]
        im = ax.pcolormesh(Cs, eps, Z, shading="nearest")
        fig.colorbar(im, ax=ax, label="validation RMSE")
        ax.plot(result.best["C"], result.best["epsilon"], "r*", ms=12)
        ax.set_xlabel("C")
        ax.set_ylabel("epsilon")
    else:
        ax.plot([r["C"] for r in rows], [r["accuracy"] for r in rows], marker=".")
        ax.axvline(result.best["C"], color="k", ls="--")
        ax.set_xlabel("C")
        ax.set_ylabel("validation accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

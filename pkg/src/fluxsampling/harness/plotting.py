"""PNG figures next to the column files; Agg backend, no display needed."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_compare(campaign, path):
    """Wall time per repeat and mean rate with 3-SE bars, per sampler."""
    names = list(campaign.summaries)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for i, n in enumerate(names):
        t = campaign.summaries[n].wall_times
        ax1.plot(np.arange(len(t)), t, "o-", ms=3, lw=0.8, label=n)
    ax1.set_xlabel("repeat")
    ax1.set_ylabel("wall time (s)")
    ax1.set_yscale("log")
    ax1.legend()
    means = [campaign.summaries[n].mean for n in names]
    errs = [3 * campaign.summaries[n].se for n in names]
    ax2.errorbar(np.arange(len(names)), means, yerr=errs, fmt="s", capsize=4)
    ax2.set_xticks(np.arange(len(names)), names)
    ax2.set_ylabel(r"$k_{AB}$ (mean $\pm$ 3 SE)")
    return _save(fig, path)


def plot_ims(scan, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.plot(scan.lambdas, scan.fractions, "o-", ms=4)
    ax1.set_xlabel(r"$\lambda_i$")
    ax1.set_ylabel(r"$n_{i,3}/M_i$")
    if scan.report is not None:
        h = scan.report.density
        left = h.edges[:-1]
        ax2.step(left, h.density(), where="post")
        ax2.axvline(scan.report.lambda_ims, ls="--", color="k", lw=0.8)
        ax2.set_xlabel(r"$\lambda$")
        ax2.set_ylabel(r"$\rho(\lambda)$")
    else:
        ax2.text(0.5, 0.5, "no IMS located", ha="center", transform=ax2.transAxes)
    return _save(fig, path)


def plot_sweep(rows, path):
    fig, ax = plt.subplots(figsize=(5, 3.8))
    w = [r.w for r in rows]
    for key, mk in (("k_in", "o-"), ("k_out", "s-"), ("k_AB", "^-")):
        ax.plot(w, [getattr(r, key) for r in rows], mk, label=key)
    ax.set_yscale("log")
    ax.set_xlabel("pore width w")
    ax.set_ylabel("rate (per sweep)")
    ax.legend()
    return _save(fig, path)


def plot_interfaces(rate, path, title: str = ""):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    lam = [s.lam_from for s in rate.stats]
    ax.semilogy(lam, rate.probabilities, "o-")
    ax.set_xlabel(r"$\lambda_i$")
    ax.set_ylabel(r"$P(\lambda_{i+1}|\lambda_i)$")
    if title:
        ax.set_title(title)
    return _save(fig, path)

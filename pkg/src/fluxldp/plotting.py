"""Figure rendering for the report-producing CLI paths.

Figures are a convenience companion to the delimited outputs; the CSV/JSON
files remain the canonical artifacts.  Rendering uses the Agg backend and
fixed metadata so repeated runs emit identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["plot_gridpath", "plot_lln", "plot_slope"]

_SAVEKW = {"dpi": 110, "metadata": {"Software": "fluxldp"}}


def plot_gridpath(path, species, outfile: str, title: str = "fluid path"):
    """Two panels: concentrations and cumulative fluxes over time."""
    fig, (ax_c, ax_w) = plt.subplots(1, 2, figsize=(9, 3.4))
    for y, name in enumerate(species):
        ax_c.plot(path.times, path.c[:, y], label=f"c:{name}")
    ax_c.set_xlabel("t")
    ax_c.set_ylabel("concentration")
    ax_c.legend(fontsize=8)
    for r in range(path.n_reactions):
        ax_w.plot(path.times, path.w[:, r], label=f"w:{r}")
    ax_w.set_xlabel("t")
    ax_w.set_ylabel("integrated flux")
    ax_w.legend(fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(outfile, **_SAVEKW)
    plt.close(fig)


def plot_lln(reports, outfile: str):
    """Median sup-norm gap against volume on log-log axes with the fitted slope."""
    vols = np.array([r.volume for r in reports], dtype=float)
    medians = np.array([r.quantile(0.5) for r in reports])
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    ax.loglog(vols, medians, "o-", label="median gap")
    if len(vols) >= 2 and np.all(medians > 0):
        slope, intercept = np.polyfit(np.log(vols), np.log(medians), 1)
        ax.loglog(vols, np.exp(intercept) * vols**slope, "--", label=f"fit slope {slope:.3f}")
    ax.set_xlabel("volume V")
    ax.set_ylabel("sup-norm gap to fluid path")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(outfile, **_SAVEKW)
    plt.close(fig)


def plot_slope(report, outfile: str):
    """LDP slope estimates with 2-stderr intervals against the reference rate."""
    entries = [e for e in report.entries if not e.ess_collapse]
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    if entries:
        vols = np.array([e.volume for e in entries], dtype=float)
        slopes = np.array([e.slope for e in entries])
        lo = slopes - np.array([e.ci_lo for e in entries])
        hi = np.array([e.ci_hi for e in entries]) - slopes
        ax.errorbar(vols, slopes, yerr=[np.abs(lo), np.abs(hi)], fmt="o-", capsize=3,
                    label="-(1/V) log p")
    ax.axhline(report.J_ref, color="k", linestyle="--", label=f"J_ref = {report.J_ref:.4g}")
    ax.axhline(report.fitted_asymptote, color="C3", linestyle=":",
               label=f"asymptote = {report.fitted_asymptote:.4g}")
    ax.set_xscale("log")
    ax.set_xlabel("volume V")
    ax.set_ylabel("slope estimate")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(outfile, **_SAVEKW)
    plt.close(fig)

"""The five figure kinds rendered from CSV artifacts.

Every renderer takes the input directory and a style dict and returns a
matplotlib Figure; rendering never mutates the inputs and identical
inputs yield identical image bytes (fixed rcParams, salted SVG ids).
"""
from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .schemas import SchemaError, read_table

CONFIGS = ("AA", "AB", "BA", "BB")
COLORS = {"A": "#d95f02", "B": "#1f77b4"}   # orange for mode A, blue for B

matplotlib.rcParams.update({
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "svg.hashsalt": "tlsjitter-plots",
    "font.size": 9,
})


def _need(in_dir: str, name: str) -> str:
    path = os.path.join(in_dir, name)
    if not os.path.exists(path):
        raise SchemaError(f"required input {name} not found in {in_dir}")
    return path


def _config_mode(config: str, chain: str) -> str:
    # chain "12" measures the first letter, "34" the second
    return config[0] if chain == "12" else config[1]


def render_traces(in_dir: str, style: dict) -> plt.Figure:
    """Four stacked rows (AA, AB, BA, BB) of synchronized demodulated
    frequency-jitter traces from both RSA pairs, over a short window."""
    window = float(style.get("window_s", 200e-6))
    fig, axes = plt.subplots(4, 1, figsize=(7.0, 6.4), sharex=True)
    for ax, config in zip(axes, CONFIGS):
        for chain, alpha in (("12", 0.95), ("34", 0.65)):
            table = read_table(_need(in_dir, f"demod_traj000_{config}_{chain}.csv"),
                               "demod_trace_v1")
            t, value, valid = table["t_s"], table["value"], table["valid"] > 0.5
            keep = (t <= window) & valid
            mode = _config_mode(config, chain)
            ax.plot(t[keep] * 1e6, value[keep] / 1e3, color=COLORS[mode], alpha=alpha,
                    lw=0.8, label=f"mode {mode} (pair {chain})")
        ax.set_ylabel("shift (kHz)")
        ax.legend(loc="upper right", fontsize=7, frameon=False)
        ax.text(0.01, 0.82, config, transform=ax.transAxes, fontweight="bold")
    axes[-1].set_xlabel("time (us)")
    fig.suptitle("Synchronized frequency jitter")
    fig.tight_layout()
    return fig


def render_histograms(in_dir: str, style: dict) -> plt.Figure:
    """Demodulated-shift histograms per configuration with the averaged
    swept spectrum overlaid (dashed), both peak-normalized."""
    fig, axes = plt.subplots(4, 1, figsize=(5.2, 7.2), sharex=True)
    for ax, config in zip(axes, CONFIGS):
        table = read_table(_need(in_dir, f"hist_demod_{config}.csv"), "histogram_v1")
        centers, counts = table["bin_center_hz"], table["count"]
        mode = config[0]
        peak = counts.max() if counts.size and counts.max() > 0 else 1.0
        ax.fill_between(centers / 1e3, counts / peak, step="mid",
                        color=COLORS[mode], alpha=0.55)
        psd_path = os.path.join(in_dir, f"psd_{mode}.csv")
        if os.path.exists(psd_path):
            psd = read_table(psd_path, "fast_scan_v1")
            power = psd["power"]
            ax.plot(psd["f_hz"] / 1e3, power / power.max(), "k--", lw=1.0,
                    label="averaged spectrum")
            ax.legend(loc="upper right", fontsize=7, frameon=False)
        ax.set_ylabel("normalized")
        ax.text(0.01, 0.82, config, transform=ax.transAxes, fontweight="bold")
    axes[-1].set_xlabel("frequency shift (kHz)")
    fig.suptitle("Jitter histograms vs averaged spectra")
    fig.tight_layout()
    return fig


def render_matrix(in_dir: str, style: dict) -> plt.Figure:
    """2x2 zero-delay correlation matrix with annotated cells."""
    table = read_table(_need(in_dir, "summary.csv"), "rho_summary_v1")
    rho = dict(zip(table["pair"], table["rho0"]))
    missing = [c for c in CONFIGS if c not in rho]
    if missing:
        raise SchemaError(f"summary.csv: missing pair rows {missing}")
    grid = np.array([[rho["AA"], rho["AB"]], [rho["BA"], rho["BB"]]])
    fig, ax = plt.subplots(figsize=(3.6, 3.2))
    im = ax.imshow(grid, vmin=-1.0, vmax=1.0, cmap="RdBu_r")
    for i in range(2):
        for j in range(2):
            ax.text(j, i, f"{grid[i, j]:+.2f}", ha="center", va="center",
                    color="white" if abs(grid[i, j]) > 0.5 else "black")
    ax.set_xticks([0, 1], ["A", "B"])
    ax.set_yticks([0, 1], ["A", "B"])
    ax.set_title("zero-delay correlation")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    return fig


def render_mc_correlations(in_dir: str, style: dict) -> plt.Figure:
    """Renormalized correlation curves of the simulated traces."""
    fig, axes = plt.subplots(4, 1, figsize=(5.2, 7.2), sharex=True)
    for ax, config in zip(axes, CONFIGS):
        table = read_table(_need(in_dir, f"mc_renorm_{config}.csv"), "correlation_v1")
        ax.plot(table["tau_s"] * 1e6, table["c_value"], color=COLORS[config[0]], lw=1.2)
        ax.axhline(0.0, color="gray", lw=0.6)
        ax.set_ylabel("C/C_cross - 1")
        ax.text(0.01, 0.8, config, transform=ax.transAxes, fontweight="bold")
    axes[-1].set_xlabel("delay (us)")
    fig.suptitle("Cross-trajectory renormalized correlations")
    fig.tight_layout()
    return fig


def render_sweep(in_dir: str, style: dict) -> plt.Figure:
    """Linewidth versus temperature on log-log axes with a power-law fit."""
    table = read_table(_need(in_dir, "sweep.csv"), "sweep_v1")
    T, fwhm = table["temperature_k"], table["fwhm_hz"]
    if T.size < 2:
        raise SchemaError("sweep.csv: need at least two temperatures")
    slope, intercept = np.polyfit(np.log(T), np.log(fwhm), 1)
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.loglog(T, fwhm / 1e3, "o", color=COLORS["A"])
    tt = np.geomspace(T.min(), T.max(), 50)
    ax.loglog(tt, np.exp(intercept) * tt ** slope / 1e3, "k--", lw=1.0,
              label=f"T^{slope:.2f}")
    ax.set_xlabel("temperature (K)")
    ax.set_ylabel("FWHM (kHz)")
    ax.legend(frameon=False)
    ax.set_title("filtered linewidth vs temperature")
    fig.tight_layout()
    return fig


RENDERERS = {
    "traces": render_traces,
    "histograms": render_histograms,
    "matrix": render_matrix,
    "mc_correlations": render_mc_correlations,
    "sweep": render_sweep,
}


def render(kind: str, in_dir: str, out_base: str, style: dict | None = None) -> list:
    """Render one figure kind to <out_base>.png and <out_base>.svg.

    Returns the written paths.  Nothing is written when rendering fails.
    """
    if kind not in RENDERERS:
        raise SchemaError(f"unknown figure kind {kind!r}; "
                          f"choose from {sorted(RENDERERS)}")
    fig = RENDERERS[kind](in_dir, style or {})
    base, ext = os.path.splitext(out_base)
    if ext.lower() in (".png", ".svg", ".pdf"):
        out_base = base
    written = []
    try:
        for suffix in (".png", ".svg"):
            path = out_base + suffix
            fig.savefig(path, metadata={"Date": None} if suffix == ".svg" else None)
            written.append(path)
    finally:
        plt.close(fig)
    return written

"""Figures for the CLI reports, rendered headless to PNG."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

def _save(fig, path, meta=None):
    """Write a PNG with fixed metadata; ``meta`` goes into the Description field."""
    info = {"Software": None}
    if meta:
        info["Description"] = " ".join(f"{k}={v}" for k, v in meta.items())
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=info)
    plt.close(fig)


def plot_queue_law(path, k_values: np.ndarray, reference: np.ndarray | None = None, title: str = "", meta=None):
    """Empirical law of the queue length, optionally against a reference law."""
    emp = np.bincount(k_values) / max(k_values.size, 1)
    n = max(emp.size, 0 if reference is None else reference.size)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(np.arange(emp.size), emp, color="tab:blue", alpha=0.7, label="empirical")
    if reference is not None:
        ax.plot(np.arange(reference.size), reference, "o-", color="tab:red", ms=3, label="reference")
    ax.set_xlim(-0.5, min(n, 30) - 0.5)
    ax.set_xlabel("k")
    ax.set_ylabel("probability")
    ax.set_title(title)
    ax.legend()
    _save(fig, path, meta)


def plot_flow_summary(path, grid: np.ndarray, mean_k: np.ndarray, p_empty: np.ndarray, title: str = "", meta=None):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(grid, mean_k, label="mean k")
    ax2 = ax.twinx()
    ax2.plot(grid, p_empty, color="tab:orange", label="P(k = 0)")
    ax.set_xlabel("t")
    ax.set_ylabel("mean k")
    ax2.set_ylabel("P(k = 0)")
    ax.set_title(title)
    _save(fig, path, meta)


def plot_jump_counts(path, hist: np.ndarray, envelope: np.ndarray, title: str = "", meta=None):
    n = np.arange(hist.size)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(n, np.where(hist > 0, hist, np.nan), "o", ms=3, label="empirical")
    ax.semilogy(n, envelope, "-", label="envelope")
    ax.set_xlabel("number of jumps n")
    ax.set_ylabel("P(exactly n jumps)")
    ax.set_title(title)
    ax.legend()
    _save(fig, path, meta)


def plot_picard(path, distances, noise_floor: float | None = None, title: str = "", meta=None):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    d = np.asarray(distances, float)
    ax.semilogy(np.arange(d.size), np.where(d > 0, d, np.nan), "o-", label="d_m")
    if noise_floor is not None:
        ax.axhline(noise_floor, color="gray", ls="--", label="noise floor")
    ax.set_xlabel("m")
    ax.set_ylabel("sup TV proxy")
    ax.set_title(title)
    ax.legend()
    _save(fig, path, meta)


def plot_table(path, table, xlabel: str, title: str = "", meta=None):
    """One line per scheme delay from a diagnostic table."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    arr = table.as_array()
    for h in sorted(set(arr[:, 0])):
        sel = arr[arr[:, 0] == h]
        order = np.argsort(sel[:, 1])
        ax.plot(sel[order, 1], sel[order, 2], "o-", ms=3, label=f"h={h:g}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("probability")
    ax.set_title(title)
    ax.legend()
    _save(fig, path, meta)

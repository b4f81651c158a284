"""Figures rendered next to the CSV outputs of a run or an alpha sweep."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _read(path):
    from .runner import read_rows
    return read_rows(path)


def _band(ax, rows, field, label, color):
    it = np.array([r["iter"] for r in rows])
    m = np.array([r[f"{field}_mean"] for r in rows], dtype=float)
    s = np.array([r[f"{field}_std"] for r in rows], dtype=float)
    ax.plot(it, m, color=color, label=label)
    ax.fill_between(it, m - s, m + s, color=color, alpha=0.2, linewidth=0)


def render_run(run_dir) -> list:
    """Quality curves, class sample counts and component counts of a run (PNG files)."""
    run_dir = Path(run_dir)
    rows = _read(run_dir / "summary.csv")
    fig_dir = run_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    out = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for field, color in (("precision", "tab:blue"), ("recall", "tab:green"), ("accuracy", "tab:red")):
        _band(ax, rows, field, field, color)
    ax.set(xlabel="iteration", ylabel="score", ylim=(0, 1.02))
    ax.legend(loc="lower right")
    out.append(_save(fig, fig_dir / "quality.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    _band(ax, rows, "n0", "label 0 samples", "tab:gray")
    _band(ax, rows, "n1", "label 1 samples", "tab:orange")
    ax.set(xlabel="iteration", ylabel="samples")
    ax.legend(loc="upper left")
    out.append(_save(fig, fig_dir / "samples.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    _band(ax, rows, "K0", "label 0 components", "tab:gray")
    _band(ax, rows, "K1", "label 1 components", "tab:orange")
    ax.set(xlabel="iteration", ylabel="components")
    ax.legend(loc="upper left")
    out.append(_save(fig, fig_dir / "components.png"))
    return out


def render_sweep(sweep_dir) -> Path:
    """Final scores against alpha."""
    sweep_dir = Path(sweep_dir)
    rows = _read(sweep_dir / "sweep.csv")
    alpha = np.array([r["alpha"] for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    for field, color in (("precision", "tab:blue"), ("recall", "tab:green"), ("accuracy", "tab:red")):
        m = np.array([r[f"{field}_mean"] for r in rows])
        s = np.array([r[f"{field}_std"] for r in rows])
        ax.errorbar(alpha, m, yerr=s, color=color, marker="o", capsize=3, label=field)
    ax.set(xlabel="alpha", ylabel="final score", ylim=(0, 1.02))
    ax.legend(loc="lower right")
    return _save(fig, sweep_dir / "sweep.png")


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path

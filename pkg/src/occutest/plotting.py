"""Simple SVG line charts of the study tables.

Figures are written with fixed metadata and a fixed hash salt so repeated
runs produce identical files.
"""

from __future__ import annotations

import functools
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.5),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.3,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "svg.hashsalt": "occutest",
    "svg.fonttype": "none",
}

LABELS = {
    "lrt": "LRT",
    "wald": "Wald",
    "score_expected": "$T_E$",
    "score_observed": "$T_O$",
    "score_observed_modified": "$T_O^*$",
    "score_observed_positive": "$T_O^+$",
}


def styled(func):
    """Run a plotting function under :data:`STYLE`."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        with plt.rc_context(STYLE):
            return func(*args, **kwargs)

    return wrapper


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def _column(rows, header, name):
    j = header.index(name)
    return np.array([r[j] for r in rows], dtype=float)


@styled
def plot_power(table, path, title=None):
    header, rows = table
    fig, ax = plt.subplots()
    tests = list(dict.fromkeys(r[1] for r in rows))
    for name in tests:
        sel = [r for r in rows if r[1] == name]
        ax.plot([r[0] for r in sel], [r[2] for r in sel], label=LABELS.get(name, name))
    ax.set_xlabel("R")
    ax.set_ylabel("rejection rate")
    ax.set_ylim(0, 1.02)
    ax.legend(loc="best")
    if title:
        ax.set_title(title)
    return _save(fig, path)


@styled
def plot_medians(table, path):
    header, rows = table
    R = _column(rows, header, "R")
    fig, (left, right) = plt.subplots(1, 2, figsize=(8.0, 3.2))
    left.plot(R, _column(rows, header, "median_t_exp"), label="$T_E$")
    left.plot(R, _column(rows, header, "median_t_obs"), label="$T_O$")
    left.plot(R, _column(rows, header, "median_t_obs_positive"), "--", label="$T_O^+$")
    left.plot(R, _column(rows, header, "median_t_obs_negative"), ":", label="$T_O^-$")
    left.axhline(0, color="k", lw=0.6)
    left.set_xlabel("R")
    left.set_ylabel("median")
    left.legend(loc="best")
    right.plot(R, _column(rows, header, "median_ratio"))
    right.set_xlabel("R")
    right.set_ylabel("median $T_E/T_O$")
    fig.tight_layout()
    return _save(fig, path)


@styled
def plot_agreement(table, path):
    header, rows = table
    fig, ax = plt.subplots()
    for variant in dict.fromkeys(r[1] for r in rows):
        sel = [r for r in rows if r[1] == variant]
        ax.plot([r[0] for r in sel], [r[2] for r in sel], marker="o", ms=3, label=variant)
    ax.set_xlabel("R")
    ax.set_ylabel("agreement with $T_E$")
    ax.set_ylim(0, 1.02)
    ax.legend(loc="best")
    return _save(fig, path)


@styled
def plot_eigen(table, path):
    header, rows = table
    R = _column(rows, header, "R")
    fig, ax = plt.subplots()
    for j in range(1, 5):
        (line,) = ax.plot(R, _column(rows, header, f"median_eig{j}"), label=f"$\\lambda_{j}$")
        expected = _column(rows, header, f"expected_eig{j}")
        if np.any(np.isfinite(expected)):
            ax.plot(R, expected, "--", color=line.get_color())
    ax.axhline(0, color="k", lw=0.6)
    ax.set_yscale("symlog", linthresh=1.0)
    ax.set_xlabel("R")
    ax.set_ylabel("eigenvalue of $J$ at null fit")
    ax.legend(loc="best")
    return _save(fig, path)


@styled
def plot_asymptotics(table, path):
    header, rows = table
    R = _column(rows, header, "R")
    fig, (left, right) = plt.subplots(1, 2, figsize=(8.0, 3.2))
    for j in range(1, 5):
        left.plot(R, _column(rows, header, f"eig{j}"), label=f"$\\lambda_{j}$")
    left.axhline(0, color="k", lw=0.6)
    left.set_yscale("symlog", linthresh=1.0)
    left.set_xlabel("R")
    left.set_ylabel("expected information eigenvalue")
    left.legend(loc="best")
    recip = _column(rows, header, "reciprocal")
    right.plot(R, recip)
    right.axhline(0, color="k", lw=0.6)
    right.set_xlabel("R")
    right.set_ylabel("1 / leading eigenvalue of $B\\Sigma$")
    fig.tight_layout()
    return _save(fig, path)


@styled
def plot_fig6(table, path):
    header, rows = table
    values = _column(rows, header, "reciprocal_eigenvalue")
    fig, ax = plt.subplots()
    ax.plot(np.arange(len(values)), values, ".", ms=2)
    ax.axhline(0, color="k", lw=0.6)
    ax.set_xlabel("replicate")
    ax.set_ylabel("1 / leading eigenvalue")
    return _save(fig, path)


@styled
def plot_scatter(table, path):
    header, rows = table
    te = _column(rows, header, "t_exp")
    to = _column(rows, header, "t_obs")
    fig, ax = plt.subplots()
    ax.plot(te, to, ".", ms=1.5, alpha=0.5)
    ax.axhline(0, color="k", lw=0.6)
    ax.set_xlabel("$T_E$")
    ax.set_ylabel("$T_O$")
    return _save(fig, path)

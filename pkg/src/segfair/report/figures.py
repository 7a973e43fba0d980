from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import numpy as np  # noqa: E402
from matplotlib import rc_context  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from segfair.embedding.cluster import Density  # noqa: E402
from segfair.model.models import group_sort_key  # noqa: E402
from segfair.model.reports import RegressionResult  # noqa: E402

PathLike = Union[str, Path]

# Identifiants SVG stables d'une exécution à l'autre
SVG_HASH_SALT = "segfair"

GROUP_COLORS = {"Young": "#d95f02", "Middle": "#7570b3", "Older": "#1b9e77"}


def _save(fig: Figure, path: PathLike, deterministic: bool) -> None:
    metadata = {"Date": None} if deterministic else {}
    with rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata=metadata)


def _color(group: str) -> str:
    return GROUP_COLORS.get(str(group), "#666666")


def ols_scatter(
    x: Sequence[float],
    y: Sequence[float],
    groups: Sequence[str],
    reg: RegressionResult,
    path: PathLike,
    ylabel: str = "Dice",
    deterministic: bool = True,
) -> None:
    """Nuage âge × performance, droite OLS et annotation R²/p."""
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    groups = np.asarray(groups)
    for g in sorted(set(groups.tolist()), key=group_sort_key):
        sel = groups == g
        ax.scatter(x[sel], y[sel], s=10, alpha=0.6, color=_color(g), label=g)
    xs = np.array([x.min(), x.max()])
    ax.plot(xs, reg.intercept + reg.slope * xs, color="black", linewidth=1.5)
    ax.text(
        0.02,
        0.98,
        f"R² = {reg.r2:.4f}, p = {reg.p_slope:.4g}",
        transform=ax.transAxes,
        va="top",
    )
    ax.set_xlabel("Âge (années)")
    ax.set_ylabel(ylabel)
    ax.legend(loc="lower right", fontsize=8)
    _save(fig, path, deterministic)


def box_plots(
    values_by_group: Mapping[str, Sequence[float]],
    path: PathLike,
    ylabel: str,
    deterministic: bool = True,
) -> None:
    order = sorted(values_by_group, key=group_sort_key)
    fig = Figure(figsize=(4, 4))
    ax = fig.add_subplot()
    parts = ax.boxplot(
        [list(values_by_group[g]) for g in order], patch_artist=True
    )
    ax.set_xticks(range(1, len(order) + 1), order)
    for patch, g in zip(parts["boxes"], order):
        patch.set_facecolor(_color(g))
        patch.set_alpha(0.6)
    ax.set_ylabel(ylabel)
    _save(fig, path, deterministic)


def embedding_scatter(
    points: np.ndarray,
    groups: Sequence[str],
    path: PathLike,
    deterministic: bool = True,
) -> None:
    fig = Figure(figsize=(5, 5))
    ax = fig.add_subplot()
    groups = np.asarray(groups)
    for g in sorted(set(groups.tolist()), key=group_sort_key):
        sel = groups == g
        ax.scatter(points[sel, 0], points[sel, 1], s=8, alpha=0.7, color=_color(g), label=g)
    ax.set_xlabel("t-SNE 1")
    ax.set_ylabel("t-SNE 2")
    ax.legend(fontsize=8)
    _save(fig, path, deterministic)


def density_plot(
    densities: Mapping[str, Density],
    path: PathLike,
    deterministic: bool = True,
) -> None:
    """Histogramme normalisé de la première dimension, KDE superposée."""
    fig = Figure(figsize=(6, 3.5))
    ax = fig.add_subplot()
    for g in sorted(densities, key=group_sort_key):
        d = densities[g]
        ax.stairs(d.density, d.edges, color=_color(g), alpha=0.5, label=g)
        if d.kde is not None:
            ax.plot(d.kde_grid, d.kde, color=_color(g))
    ax.set_xlabel("t-SNE 1")
    ax.set_ylabel("Densité")
    ax.legend(fontsize=8)
    _save(fig, path, deterministic)

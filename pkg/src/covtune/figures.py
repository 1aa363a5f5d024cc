"""Figure rendering for the report paths: per-cell MSE comparison bars from a
study summary, and score curves from a single selection.

Files are written next to the delimited output with an Agg backend, so the
renderer works headless.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .selection import SelectionResult  # noqa: E402
from .study import CELL_COLUMNS  # noqa: E402


def _cell_title(key) -> str:
    model, rho, alpha, n, p, estimator = key
    bits = [f"model {int(model)}", f"rho={rho:g}"]
    if not (isinstance(alpha, float) and math.isnan(alpha)):
        bits.append(f"alpha={alpha:g}")
    bits.append(f"n={int(n)}, p={int(p)}")
    return f"{estimator} | " + ", ".join(bits)


def _cell_slug(key) -> str:
    model, rho, alpha, n, p, estimator = key
    alpha_s = "na" if (isinstance(alpha, float) and math.isnan(alpha)) else f"{alpha:g}"
    return f"m{int(model)}_rho{rho:g}_a{alpha_s}_n{int(n)}_p{int(p)}_{estimator}".replace(".", "p")


def render_summary_figures(summary, out_dir, prefix: str = "mse") -> list[Path]:
    """One grouped bar chart per study cell: MSE by rule with SE error bars,
    Frobenius and operator norms side by side.  Returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for key, cell in summary.groupby(CELL_COLUMNS, dropna=False, sort=True):
        rules = cell["rule"].tolist()
        x = np.arange(len(rules))
        fig, axes = plt.subplots(1, 2, figsize=(max(7.0, 1.0 + 0.8 * len(rules)), 3.4))
        for ax, norm in zip(axes, ("frobenius", "operator")):
            mse = cell[f"mse_{norm}"].to_numpy(dtype=float)
            se = cell[f"se_{norm}"].to_numpy(dtype=float)
            ax.bar(x, mse, yerr=np.where(np.isfinite(se), se, 0.0), capsize=3,
                   color="#4878a8", edgecolor="black", linewidth=0.5)
            ax.set_xticks(x)
            ax.set_xticklabels(rules, rotation=60, ha="right", fontsize=8)
            ax.set_ylabel(f"MSE ({norm})")
            ax.margins(y=0.1)
        fig.suptitle(_cell_title(key), fontsize=10)
        fig.tight_layout(rect=(0, 0, 1, 0.94))
        path = out_dir / f"{prefix}_{_cell_slug(key)}.png"
        fig.savefig(path, dpi=130)
        plt.close(fig)
        paths.append(path)
    return paths


def render_score_curve(result: SelectionResult, path, title: str | None = None) -> Path:
    """Score versus tuning value for one selection, argmin marked."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.4, 3.4))
    ax.plot(result.lambdas, result.scores, marker="o", markersize=3, linewidth=1.2)
    ax.axvline(result.selected, color="#b04030", linestyle="--", linewidth=1.0,
               label=f"selected = {result.selected:g}")
    ax.set_xlabel("tuning value")
    ax.set_ylabel(f"score ({result.rule.norm}, squared)")
    ax.set_title(title or result.rule.name, fontsize=10)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path

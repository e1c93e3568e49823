"""Matplotlib renderings that accompany the JSONL reports.

Everything goes through the Agg backend and is written straight to disk;
nothing here is needed for the numeric outputs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .raster import Category  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "legend.fontsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
    # fixed metadata so re-rendering the same data gives the same bytes
    "svg.hashsalt": "mango",
}

CATEGORY_COLORS = {
    Category.STRONG.value: "#1b7837",
    Category.MID.value: "#7fbf7b",
    Category.WEAK.value: "#d9f0d3",
    Category.NEGATIVE.value: "#9e9e9e",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def render_selection(result, mask, path) -> Path:
    """Mask, chosen response map and per-date score bars for one region."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(9.0, 3.0))
        axes[0].imshow(mask.grid, cmap="Greens", interpolation="nearest")
        axes[0].set_title(f"{result.region_id} mask")
        if result.detection is not None:
            grid = np.ma.masked_invalid(result.detection.grid)
            im = axes[1].imshow(grid, cmap="magma", interpolation="nearest")
            fig.colorbar(im, ax=axes[1], fraction=0.046, pad=0.04)
            axes[1].set_title(f"{result.method.value.upper()} response {result.chosen_date}")
        else:
            axes[1].text(0.5, 0.5, "no response map\n(CloudMin)", ha="center", va="center")
            axes[1].set_title("response")
        for ax in axes[:2]:
            ax.set_xticks([])
            ax.set_yticks([])

        dates = [s.sensing_date.isoformat() for s in result.all_scores]
        chosen = [s.sensing_date == result.chosen_date for s in result.all_scores]
        if result.selection_rule.value == "ArgmaxJ":
            vals = [s.j_value if s.j_value is not None and np.isfinite(s.j_value) else 0.0 for s in result.all_scores]
            label = "Fisher ratio J"
        else:
            vals = [s.cloud_fraction or 0.0 for s in result.all_scores]
            label = "cloud fraction"
        colors = ["#d6604d" if c else "#92c5de" for c in chosen]
        axes[2].bar(range(len(vals)), vals, color=colors)
        for i, v in enumerate(vals):
            axes[2].text(i, v, f"{v:.2f}", ha="center", va="bottom", fontsize=6)
        axes[2].set_xticks(range(len(vals)))
        axes[2].set_xticklabels(dates, rotation=45, ha="right")
        axes[2].set_ylabel(label)
        axes[2].set_title(result.selection_rule.value)
        fig.tight_layout()
        return _save(fig, path)


def render_composition(summary: dict, path) -> Path:
    """Stacked category counts per split, plus the overall composition."""
    cats = [c.value for c in Category]
    groups = ["all"] + list(summary["by_split"])
    counts = {
        "all": summary["by_category"],
        **{k: v["by_category"] for k, v in summary["by_split"].items()},
    }
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        bottom = np.zeros(len(groups))
        for cat in cats:
            vals = np.array([counts[g][cat] for g in groups], dtype=float)
            ax.bar(groups, vals, bottom=bottom, label=cat, color=CATEGORY_COLORS[cat], edgecolor="k", linewidth=0.3)
            bottom += vals
        for i, tot in enumerate(bottom):
            ax.text(i, tot, f"{int(tot)}", ha="center", va="bottom", fontsize=7)
        ax.set_ylabel("regions")
        ax.legend(frameon=False, ncol=2)
        fig.tight_layout()
        return _save(fig, path)


def render_method_comparison(j_mf, j_mvi, path) -> Path:
    """Scatter of the chosen-candidate Fisher ratio, matched filter vs MVI."""
    j_mf = np.asarray(j_mf, dtype=float)
    j_mvi = np.asarray(j_mvi, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.4, 3.2))
        ax.scatter(j_mvi, j_mf, s=8, alpha=0.7)
        hi = float(np.nanmax(np.concatenate([j_mf, j_mvi, [1.0]])))
        ax.plot([0, hi], [0, hi], "k--", lw=0.6)
        ax.set_xlabel("J (MVI)")
        ax.set_ylabel("J (matched filter)")
        fig.tight_layout()
        return _save(fig, path)

"""Report figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

RC = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

METHOD_LABELS = {"naive": "naive walk enumeration", "masked": "masked adjacency (full graph)",
                 "grid": "grid attribution"}


def _save(fig, path) -> None:
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def phenotype_stats_figure(stats: pd.DataFrame, path) -> None:
    """Median case relevance per phenotype, one panel per survival group, significance stars."""
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 2, figsize=(8, 0.35 * max(4, stats["phenotype_id"].nunique()) + 1))
        for ax, group in zip(axes, ("short", "long")):
            sub = stats[stats["group"] == group].iloc[::-1]
            ax.barh(sub["name"], sub["median_relevance"], color="#4c72b0" if group == "short" else "#dd8452")
            for y, (v, s) in enumerate(zip(sub["median_relevance"], sub["stars"])):
                if isinstance(s, str) and s:
                    ax.text(v, y, f" {s}", va="center", fontsize=8)
            ax.axvline(0, color="k", lw=0.5)
            ax.set_title(f"{group} survival")
            ax.set_xlabel("median LRP relevance")
        fig.tight_layout()
        _save(fig, path)


def benchmark_figure(table: pd.DataFrame, path) -> None:
    """Wall-clock runtime against node count, mean with std error bars."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for method, sub in table[table["status"] == "ok"].groupby("method", sort=False):
            ax.errorbar(sub["n_nodes"], sub["mean_s"], yerr=sub["std_s"], marker="o", ms=3,
                        capsize=2, label=METHOD_LABELS.get(method, method))
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("number of nodes")
        ax.set_ylabel("runtime [s]")
        ax.legend(frameon=False)
        _save(fig, path)


def fold_metrics_figure(per_fold: pd.DataFrame, metric_name: str, path) -> None:
    """Per-fold member spread (mean, std over seeds) with the ensemble and baseline overlaid."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        x = np.arange(len(per_fold))
        ax.errorbar(x - 0.1, per_fold["member_mean"], yerr=per_fold["member_std"], fmt="o",
                    capsize=2, label="members (mean ± std over seeds)")
        ax.plot(x + 0.1, per_fold["ensemble"], "s", label="ensemble")
        if "baseline" in per_fold and per_fold["baseline"].notna().any():
            ax.plot(x, per_fold["baseline"], "_", ms=14, color="k", label="stage baseline")
        ax.set_xticks(x, [f"fold {i}" for i in per_fold["fold"]])
        ax.set_ylabel(metric_name)
        ax.axhline(0.5, color="0.7", lw=0.5)
        ax.legend(frameon=False, fontsize=7)
        _save(fig, path)

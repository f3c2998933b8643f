"""Figures for pipeline and estimator reports, written straight to files."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    # keep PNG bytes stable between runs
    "svg.hashsalt": "irredet",
}


def figure_size(width=5.0, ratio=None):
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    return width, width * (ratio or golden)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_error_histogram(report: dict, path) -> Path:
    """Pooled detection errors over all transforms, with the pruning threshold."""
    delta = report["summary"]["delta_D"]
    errs = np.array([e for p in report["transforms"] for e in p["errors"] if e is not None], dtype=np.float64)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figure_size())
        if errs.size:
            top = max(float(np.percentile(errs, 99)), 2.0 * delta, 1.0)
            ax.hist(np.clip(errs, 0, top), bins=40, range=(0, top), color="0.55", edgecolor="white")
        ax.axvline(delta, color="C3", lw=1.2, label=f"delta_D = {delta:.3g}")
        ax.set_xlabel("detection error [px]")
        ax.set_ylabel("points")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_costs(report: dict, path) -> Path:
    """Closed-form matching cost per transform, before and after pruning."""
    per = report["transforms"]
    k = np.arange(len(per))
    full = [p["cost"]["cost_full"] for p in per]
    pruned = [p["cost"]["cost_pruned"] for p in per]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figure_size())
        ax.bar(k - 0.2, full, width=0.4, color="0.6", label="all points")
        ax.bar(k + 0.2, pruned, width=0.4, color="C0", label="irredundant")
        ax.set_xlabel("transform")
        ax.set_ylabel("metric evaluations")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_repeatability(report: dict, path) -> Path:
    per = report["transforms"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figure_size())
        ax.plot([p["repeatability_original"] for p in per], "o-", color="0.5", ms=3, label="original")
        ax.plot([p["repeatability_pruned"] for p in per], "s-", color="C0", ms=3, label="pruned")
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("transform")
        ax.set_ylabel(f"repeatability @ {report['summary']['delta_D']:.3g} px")
        ax.legend(frameon=False, loc="lower right")
        return _save(fig, path)


def plot_roc(report: dict, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figure_size(4.0, 1.0))
        ax.plot([0, 1], [0, 1], ls=":", color="0.7", lw=0.8)
        for i, (name, e) in enumerate(sorted(report["estimators"].items())):
            if "roc" not in e:
                continue
            roc = np.array(e["roc"])
            auc = e.get("auc")
            label = name if auc is None else f"{name} (AUC {auc:.2f})"
            ax.plot(roc[:, 0], roc[:, 1], drawstyle="steps-post", color=f"C{i}", label=label)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.legend(frameon=False, loc="lower right")
        return _save(fig, path)


def render_report(report: dict, out_dir) -> list[Path]:
    """All figures that apply to ``report``'s kind."""
    out_dir = Path(out_dir)
    if report.get("kind") == "pipeline":
        return [plot_error_histogram(report, out_dir / "detection_errors.png"),
                plot_costs(report, out_dir / "matching_cost.png"),
                plot_repeatability(report, out_dir / "repeatability.png")]
    if report.get("kind") == "estimators":
        return [plot_roc(report, out_dir / "estimator_roc.png")]
    raise ValueError(f"unknown report kind {report.get('kind')!r}")

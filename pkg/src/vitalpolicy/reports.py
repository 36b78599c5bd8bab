"""Report rendering: fixed-layout text tables, delimited files, and figures.

All text and CSV output uses fixed float formatting so identical runs produce
byte-identical files; figures are rendered to PNG next to the delimited data.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .disagreement import DisagreementRegion
from .evaluation import EvalRun
from .labeler import ActionLabel, LabeledDataset, class_balance

_BAR_COLORS = ("#4878a8", "#e49444", "#5ba053")


def _fmt_pm(pair) -> str:
    return f"{pair[0]:.4f} ± {pair[1]:.4f}"


def render_evaluation_report(run: EvalRun) -> str:
    names = [b.name for b in run.backends]
    lines = ["Evaluation report", "=================", ""]
    first = run.backends[0].summary
    lines.append(f"patients (folds): {first.fold_count}")
    lines.append(f"held-out samples: {first.sample_count}")
    lines.append(f"backends: {', '.join(names)}")
    lines.append("")
    col = max(len(n) for n in names) + 4
    col = max(col, 20)

    def table(title, getter):
        lines.append(title)
        lines.append("-" * len(title))
        lines.append("knob".ljust(10) + "".join(n.ljust(col) for n in names))
        for k in run.knob_names:
            row = k.ljust(10)
            for b in run.backends:
                row += _fmt_pm(getter(b.summary)[k]).ljust(col)
            lines.append(row)
        lines.append("")

    table("Per-knob balanced accuracy (mean ± sd across folds)",
          lambda s: s.per_knob_balanced_accuracy)
    table("Per-knob macro-F1 (mean ± sd across folds)",
          lambda s: s.per_knob_macro_f1)

    lines.append("Overall metrics aggregated across actions (mean ± sd across folds)")
    lines.append("-" * 68)
    lines.append("metric".ljust(18) + "".join(n.ljust(col) for n in names))
    for label, attr in [("macro-F1", "overall_macro_f1"),
                        ("macro-precision", "overall_macro_precision"),
                        ("macro-recall", "overall_macro_recall")]:
        row = label.ljust(18)
        for b in run.backends:
            row += _fmt_pm(getattr(b.summary, attr)).ljust(col)
        lines.append(row)
    lines.append("")
    lines.append("Expected calibration error (pooled hard-label confidences)")
    lines.append("-" * 58)
    for b in run.backends:
        lines.append(f"{b.name.ljust(18)}{b.summary.ece:.6f}")
    lines.append("")
    return "\n".join(lines) + "\n"


def write_fold_metrics_csv(run: EvalRun, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["backend", "held_out", "knob", "n_test",
                         "balanced_accuracy", "macro_f1"])
        for b in run.backends:
            for fr in b.fold_reports:
                for k in run.knob_names:
                    writer.writerow([
                        b.name, fr.held_out, k, fr.n_test,
                        f"{fr.balanced_accuracy[k]:.12f}" if fr.n_test else "",
                        f"{fr.macro_f1[k]:.12f}" if fr.n_test else "",
                    ])
                if fr.overall_prf is not None:
                    p, r, f1 = fr.overall_prf
                    writer.writerow([b.name, fr.held_out, "__overall__", fr.n_test,
                                     "", f"{f1:.12f}"])


def write_evaluation_figures(run: EvalRun, fig_dir) -> list[str]:
    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    names = [b.name for b in run.backends]
    knobs = run.knob_names
    written = []

    def grouped_bars(fname, title, values, errors):
        fig, ax = plt.subplots(figsize=(7, 4))
        x = np.arange(len(knobs))
        width = 0.8 / len(names)
        for i, n in enumerate(names):
            ax.bar(x + i * width, values[i], width, yerr=errors[i], capsize=3,
                   label=n, color=_BAR_COLORS[i % len(_BAR_COLORS)])
        ax.set_xticks(x + width * (len(names) - 1) / 2)
        ax.set_xticklabels(knobs)
        ax.set_ylim(0.0, 1.05)
        ax.set_title(title)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = fig_dir / fname
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(str(path))

    bal = [[b.summary.per_knob_balanced_accuracy[k][0] for k in knobs] for b in run.backends]
    bal_e = [[b.summary.per_knob_balanced_accuracy[k][1] for k in knobs] for b in run.backends]
    grouped_bars("balanced_accuracy.png", "Per-knob balanced accuracy (mean ± sd)", bal, bal_e)

    mf1 = [[b.summary.per_knob_macro_f1[k][0] for k in knobs] for b in run.backends]
    mf1_e = [[b.summary.per_knob_macro_f1[k][1] for k in knobs] for b in run.backends]
    grouped_bars("macro_f1.png", "Per-knob macro-F1 (mean ± sd)", mf1, mf1_e)

    fig, ax = plt.subplots(figsize=(6, 4))
    metrics = ["macro-F1", "macro-precision", "macro-recall"]
    x = np.arange(len(metrics))
    width = 0.8 / len(names)
    for i, b in enumerate(run.backends):
        vals = [b.summary.overall_macro_f1[0], b.summary.overall_macro_precision[0],
                b.summary.overall_macro_recall[0]]
        errs = [b.summary.overall_macro_f1[1], b.summary.overall_macro_precision[1],
                b.summary.overall_macro_recall[1]]
        ax.bar(x + i * width, vals, width, yerr=errs, capsize=3, label=b.name,
               color=_BAR_COLORS[i % len(_BAR_COLORS)])
    ax.set_xticks(x + width * (len(names) - 1) / 2)
    ax.set_xticklabels(metrics)
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Overall metrics aggregated across actions")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = fig_dir / "overall_metrics.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(str(path))

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(names, [b.summary.ece for b in run.backends],
           color=[_BAR_COLORS[i % len(_BAR_COLORS)] for i in range(len(names))])
    ax.set_ylabel("ECE")
    ax.set_title("Expected calibration error by model")
    fig.tight_layout()
    path = fig_dir / "ece.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(str(path))
    return written


def render_disagreement_report(
    regions_by: dict[tuple[str, str], list[DisagreementRegion]],
    top_k: int = 3,
) -> str:
    lines = ["Disagreement regions", "====================", ""]
    lines.append("Per (model, knob): regions with the highest mean change-stage")
    lines.append("disagreement d(s) = |y_c - p_c|, from a depth-limited tree fit on")
    lines.append("held-out predictions pooled across folds.")
    lines.append("")
    for (model, knob), regions in sorted(regions_by.items()):
        lines.append(f"[{model}] knob {knob}")
        for i, region in enumerate(regions[:top_k], start=1):
            lines.append(f"  {i}. {region.render()}")
        lines.append("")
    return "\n".join(lines) + "\n"


def write_split_frequency_csv(models: list[str], rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature"] + models)
        for feature, counts in rows:
            writer.writerow([feature] + [counts[m] for m in models])


def write_class_balance_figure(dataset: LabeledDataset, path) -> None:
    counts = class_balance(dataset.samples)
    knobs = list(counts)
    fig, ax = plt.subplots(figsize=(7, 4))
    x = np.arange(len(knobs))
    for i, label in enumerate((ActionLabel.INCREASE, ActionLabel.DECREASE, ActionLabel.SAME)):
        vals = [counts[k][label] for k in knobs]
        ax.bar(x + (i - 1) * 0.25, vals, 0.25, label=label.value, color=_BAR_COLORS[i])
    ax.set_xticks(x)
    ax.set_xticklabels(knobs)
    ax.set_yscale("log")
    ax.set_ylabel("samples (log scale)")
    ax.set_title("Per-knob action label balance")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

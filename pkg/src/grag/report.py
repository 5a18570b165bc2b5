"""Evaluation report writers: JSONL records, a text table, and figures.

The machine-readable report is line-delimited JSON with typed records
(sample rows, per-pipeline summaries, ANOVA blocks). The human-readable
table mirrors the summary, and two PNG figures are rendered next to the
delimited output: per-pipeline metric means with sd error bars, and the
per-metric F statistics with p-values.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import EvalReport


def write_report_jsonl(report: EvalReport, path: str | Path, deterministic: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "record": "header",
            "pipelines": report.pipelines,
            "metrics": report.metrics,
        }
        if not deterministic:
            header["generated_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        fh.write(json.dumps(header) + "\n")
        for pipeline, row in zip(report.row_pipeline, report.rows):
            fh.write(json.dumps({
                "record": "sample",
                "pipeline": pipeline,
                "metric": row.metric,
                "query": row.query,
                "response": row.response,
                "passing": row.passing,
                "score": row.score,
                "feedback": row.feedback,
                "invalid_result": row.invalid_result,
                "invalid_reason": row.invalid_reason,
            }, ensure_ascii=False) + "\n")
        for s in report.summaries:
            fh.write(json.dumps({
                "record": "summary", "pipeline": s.pipeline, "metric": s.metric,
                "n": s.n, "mean": s.mean, "sd": s.sd,
            }) + "\n")
        for a in report.anova:
            rec = {"record": "anova", "metric": a.metric}
            if a.result is not None:
                rec.update({
                    "f_stat": a.result.f_stat,
                    "df_between": a.result.df_between,
                    "df_within": a.result.df_within,
                    "p_value": a.result.p_value,
                })
            else:
                rec["note"] = a.note
            fh.write(json.dumps(rec) + "\n")


def format_report_table(report: EvalReport) -> str:
    """Summary table plus an ANOVA block, ready to print."""
    lines = []
    header = f"{'pipeline':<10} {'metric':<16} {'n':>3} {'mean':>8} {'sd':>8}"
    lines.append(header)
    lines.append("-" * len(header))
    for s in report.summaries:
        lines.append(
            f"{s.pipeline:<10} {s.metric:<16} {s.n:>3} {s.mean:>8.4f} {s.sd:>8.4f}"
        )
    lines.append("")
    lines.append("one-way ANOVA across pipelines")
    for a in report.anova:
        if a.result is not None:
            r = a.result
            lines.append(
                f"  {a.metric:<16} F({r.df_between},{r.df_within}) = {r.f_stat:.4f}, "
                f"p = {r.p_value:.4f}"
            )
        else:
            lines.append(f"  {a.metric:<16} not computed ({a.note})")
    return "\n".join(lines) + "\n"


def render_report_figures(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Render the summary figures as PNG files; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    means = {(s.pipeline, s.metric): s for s in report.summaries}
    metrics = report.metrics
    pipelines = report.pipelines

    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(len(pipelines), 1)
    for pi, pipeline in enumerate(pipelines):
        xs = [mi + pi * width for mi in range(len(metrics))]
        ys = [means[(pipeline, m)].mean if (pipeline, m) in means else 0.0 for m in metrics]
        errs = [means[(pipeline, m)].sd if (pipeline, m) in means else 0.0 for m in metrics]
        ax.bar(xs, ys, width=width, yerr=errs, capsize=3, label=pipeline)
    ax.set_xticks([mi + width * (len(pipelines) - 1) / 2 for mi in range(len(metrics))])
    ax.set_xticklabels(metrics)
    ax.set_ylabel("mean score")
    ax.set_title("Pipeline scores (mean with sd)")
    ax.legend()
    fig.tight_layout()
    scores_path = out_dir / "report_scores.png"
    fig.savefig(scores_path)
    plt.close(fig)
    paths.append(scores_path)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    labels, fvals, plabels = [], [], []
    for a in report.anova:
        if a.result is None:
            continue
        labels.append(a.metric)
        fvals.append(a.result.f_stat)
        plabels.append(f"p={a.result.p_value:.3f}")
    if labels:
        bars = ax.bar(labels, fvals, color="#4878a8")
        for bar, plabel in zip(bars, plabels):
            ax.annotate(
                plabel, (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                ha="center", va="bottom", fontsize=8,
            )
    ax.set_ylabel("F statistic")
    ax.set_title("Cross-pipeline ANOVA")
    fig.tight_layout()
    anova_path = out_dir / "report_anova.png"
    fig.savefig(anova_path)
    plt.close(fig)
    paths.append(anova_path)
    return paths


def write_report(
    report: EvalReport, out_dir: str | Path, deterministic: bool = False,
    figures: bool = True,
) -> dict[str, Path]:
    """Write all report artifacts into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jsonl_path = out_dir / "report.jsonl"
    write_report_jsonl(report, jsonl_path, deterministic=deterministic)
    txt_path = out_dir / "report.txt"
    txt_path.write_text(format_report_table(report), encoding="utf-8")
    out = {"jsonl": jsonl_path, "txt": txt_path}
    if figures:
        for p in render_report_figures(report, out_dir):
            out[p.stem] = p
    return out

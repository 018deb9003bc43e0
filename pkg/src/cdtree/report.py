"""Evaluation report rendering: delimited records, aligned text, and figures.

The figures land next to the machine-readable output so a report directory is
self-contained: ``report.jsonl`` + ``report.txt`` + ``scores.png``, plus the
scaling-curve pair when score-vs-train-size data is exported.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .evalharness import EvalResult


def write_report(
    results: Sequence[EvalResult],
    out_dir: str | Path,
    scaling: Sequence[dict] | None = None,
) -> dict[str, Path]:
    """Write every report artifact and return the path of each one."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "jsonl": out / "report.jsonl",
        "text": out / "report.txt",
        "figure": out / "scores.png",
    }

    with open(paths["jsonl"], "w", encoding="utf-8") as handle:
        for result in results:
            record = {
                "character": result.character,
                "strategy": result.strategy,
                "mean": result.mean,
                "coverage": result.coverage,
                "pair_count": result.pair_count,
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")

    paths["text"].write_text(_aligned_table(results), encoding="utf-8")
    _score_figure(results, paths["figure"])

    if scaling:
        paths["scaling_jsonl"] = out / "scaling.jsonl"
        paths["scaling_figure"] = out / "scaling.png"
        with open(paths["scaling_jsonl"], "w", encoding="utf-8") as handle:
            for row in scaling:
                handle.write(json.dumps(row, ensure_ascii=False) + "\n")
        _scaling_figure(scaling, paths["scaling_figure"])
    return paths


def _aligned_table(results: Sequence[EvalResult]) -> str:
    headers = ("character", "strategy", "mean", "coverage", "pairs")
    rows = [
        (
            r.character,
            r.strategy,
            f"{r.mean:.2f}",
            f"{100 * r.coverage:.0f}%",
            str(r.pair_count),
        )
        for r in results
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * widths[i] for i in range(len(headers))),
    ]
    lines += ["  ".join(row[i].ljust(widths[i]) for i in range(len(headers))) for row in rows]
    return "\n".join(lines) + "\n"


def _score_figure(results: Sequence[EvalResult], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(results)), 3.2))
    labels = [f"{r.strategy}\n{r.character}" for r in results]
    means = [r.mean for r in results]
    ax.bar(range(len(results)), means, color="#4878a8")
    ax.set_xticks(range(len(results)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("mean NLI score")
    ax.set_ylim(0, 100)
    for i, mean in enumerate(means):
        ax.text(i, mean + 1, f"{mean:.1f}", ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _scaling_figure(scaling: Sequence[dict], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    by_strategy: dict[str, list[tuple[int, float]]] = {}
    for row in scaling:
        by_strategy.setdefault(row.get("strategy", "cdt"), []).append(
            (int(row["train_size"]), float(row["mean"]))
        )
    for strategy, points in sorted(by_strategy.items()):
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=strategy)
    ax.set_xlabel("training pairs")
    ax.set_ylabel("mean NLI score")
    ax.set_xscale("log", base=2)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

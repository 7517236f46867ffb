"""Figure rendering for report-producing commands.

Renders evaluation and augmentation summaries to image files with a
non-interactive backend, so reports can carry plots next to their
machine-readable output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def render_evaluation_figure(report: dict, path: str | Path) -> None:
    """Bar chart of F1 scores from an evaluation report.

    Per-instrument reports plot one bar per channel plus the overall
    score; agnostic reports plot the onset-only and onset+offset scores.
    """
    labels: list[str] = []
    values: list[float] = []
    if "onset" in report and "offset" in report:
        labels = ["onset", "onset+offset"]
        values = [report["onset"]["f1"], report["offset"]["f1"]]
    else:
        for name, result in sorted(report.get("per_instrument", {}).items()):
            labels.append(name)
            values.append(result["f1"])
        labels.append("overall")
        values.append(report["f1"])

    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(labels) + 2.0), 3.6))
    bars = ax.bar(range(len(values)), values, color="#4878cf")
    if labels:
        bars[-1].set_color("#333333")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("F1")
    ax.set_title(report.get("metric", "evaluation"))
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_merge_histogram(stats: dict, path: str | Path) -> None:
    """Histogram of external-merge counts from an augmentation run."""
    histogram: dict = stats.get("summary", {}).get("merge_histogram", {})
    if histogram:
        counts = {int(k): int(v) for k, v in histogram.items()}
        max_merges = max(counts)
        xs = list(range(max_merges + 1))
        ys = [counts.get(x, 0) for x in xs]
    else:
        xs, ys = [0], [0]

    fig, ax = plt.subplots(figsize=(4.8, 3.2))
    ax.bar(xs, ys, color="#4878cf")
    ax.set_xticks(xs)
    ax.set_xlabel("external merges")
    ax.set_ylabel("elements")
    ax.set_title("cross-segment stem merges")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

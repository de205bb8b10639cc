"""Aggregation of run directories into summary tables and figures.

``report`` pools the per-episode rows of each run (grouped by controller
label), emits the per-controller mean and standard deviation of the four
traffic metrics plus episode reward as JSON, an aligned text table, and a
delimited summary, and renders per-metric time-series figures (and
training curves when a training log is present) as PNG files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .csvio import read_csv, write_csv  # noqa: E402

SUMMARY_METRICS = [
    ("mean_reward", "episode reward"),
    ("mean_queue", "avg queue length (veh)"),
    ("mean_speed", "avg car speed (m/s)"),
    ("trip_delay_s", "avg trip delay (s)"),
    ("mean_intersection_delay", "avg intersection delay (s)"),
]

STEP_METRICS = ["avg_queue", "avg_speed", "avg_reward", "avg_intersection_delay"]


class ReportError(ValueError):
    pass


@dataclass
class RunData:
    path: Path
    label: str
    episode_rows: list[dict]
    step_rows: list[dict] | None
    step_fields: list[str]
    train_rows: list[dict] | None


def _require_columns(path: Path, rows: list[dict], columns: list[str]) -> None:
    if not rows:
        return
    for col in columns:
        if col not in rows[0]:
            raise ReportError(f"{path}: missing column {col!r}")


def load_run(run_dir) -> RunData:
    run_dir = Path(run_dir)
    episodes_path = run_dir / "episodes.csv"
    if not episodes_path.exists():
        raise ReportError(f"{episodes_path}: not found")
    _, episode_rows = read_csv(episodes_path)
    _require_columns(episodes_path, episode_rows,
                     [m for m, _ in SUMMARY_METRICS])
    label = run_dir.name
    summary_path = run_dir / "summary.json"
    if summary_path.exists():
        with open(summary_path) as fh:
            label = json.load(fh).get("controller", label)
    step_rows = None
    step_fields: list[str] = []
    for candidate in ("eval_metrics.csv", "metrics.csv"):
        p = run_dir / candidate
        if p.exists():
            step_fields, step_rows = read_csv(p)
            if step_rows:
                step_fields = list(step_rows[0].keys())
            break
    train_rows = None
    p = run_dir / "train_log.csv"
    if p.exists():
        _, train_rows = read_csv(p)
        _require_columns(p, train_rows, ["episode", "mean_episode_reward"])
    return RunData(path=run_dir, label=label, episode_rows=episode_rows,
                   step_rows=step_rows, step_fields=step_fields,
                   train_rows=train_rows)


def build_summary(runs: list[RunData]) -> dict:
    groups: dict[str, list[dict]] = {}
    for run in runs:
        groups.setdefault(run.label, []).extend(run.episode_rows)
    out: dict = {"controllers": {}}
    for label in sorted(groups):
        rows = groups[label]
        metrics = {}
        for key, _ in SUMMARY_METRICS:
            vals = [float(r[key]) for r in rows]
            mean = sum(vals) / len(vals)
            var = sum((v - mean) ** 2 for v in vals) / len(vals)
            metrics[key] = {"mean": mean, "std": var ** 0.5}
        out["controllers"][label] = {"episodes": len(rows), "metrics": metrics}
    return out


def render_table(summary: dict) -> str:
    labels = list(summary["controllers"])
    header = ["metric"] + labels
    lines = []
    rows = []
    for key, title in SUMMARY_METRICS:
        cells = [title]
        for label in labels:
            m = summary["controllers"][label]["metrics"][key]
            cells.append(f"{m['mean']:.3f} ± {m['std']:.3f}")
        rows.append(cells)
    widths = [max(len(r[c]) for r in [header] + rows) for c in range(len(header))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines.append(fmt.format(*header))
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append(fmt.format(*r))
    return "\n".join(lines) + "\n"


def summary_rows(summary: dict) -> list[dict]:
    rows = []
    for label in summary["controllers"]:
        entry = summary["controllers"][label]
        for key, _ in SUMMARY_METRICS:
            rows.append({
                "controller": label,
                "metric": key,
                "mean": entry["metrics"][key]["mean"],
                "std": entry["metrics"][key]["std"],
                "episodes": entry["episodes"],
            })
    return rows


def render_figures(runs: list[RunData], out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    for metric in STEP_METRICS:
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        plotted = False
        for run in runs:
            if not run.step_rows:
                continue
            steps = [int(float(r["step"])) for r in run.step_rows]
            mean_key = f"{metric}_mean" if f"{metric}_mean" in run.step_rows[0] else metric
            if mean_key not in run.step_rows[0]:
                continue
            means = [float(r[mean_key]) for r in run.step_rows]
            ax.plot(steps, means, label=run.label, linewidth=1.2)
            std_key = f"{metric}_std"
            if std_key in run.step_rows[0]:
                stds = [float(r[std_key]) for r in run.step_rows]
                lo = [m - s for m, s in zip(means, stds)]
                hi = [m + s for m, s in zip(means, stds)]
                ax.fill_between(steps, lo, hi, alpha=0.2)
            plotted = True
        if not plotted:
            plt.close(fig)
            continue
        ax.set_xlabel("step")
        ax.set_ylabel(metric.replace("_", " "))
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"fig_{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    if any(run.train_rows for run in runs):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for run in runs:
            if not run.train_rows:
                continue
            eps = [int(float(r["episode"])) for r in run.train_rows]
            rew = [float(r["mean_episode_reward"]) for r in run.train_rows]
            ax.plot(eps, rew, label=run.label, linewidth=1.2)
        ax.set_xlabel("episode")
        ax.set_ylabel("mean episode reward")
        ax.legend()
        fig.tight_layout()
        path = out_dir / "fig_training_reward.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def report(run_dirs: list, out_dir) -> dict:
    """Build the full report; returns the summary dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = [load_run(d) for d in run_dirs]
    summary = build_summary(runs)
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    (out_dir / "summary.txt").write_text(render_table(summary))
    write_csv(out_dir / "summary.csv",
              ["controller", "metric", "mean", "std", "episodes"],
              summary_rows(summary))
    render_figures(runs, out_dir)
    return summary

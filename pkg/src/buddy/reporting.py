"""Delimited outputs and the figures rendered alongside them.

Every report path writes a CSV (comment-prefixed provenance line, then a
header row) and, next to it, a PNG figure with the same stem. Rendering is
headless and deterministic so reruns produce identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class ReportError(ValueError):
    pass


def write_csv(path: str | Path, rows: list[dict], provenance: dict | None = None,
              columns: list[str] | None = None):
    if not rows:
        raise ReportError("refusing to write an empty table")
    cols = columns or list(rows[0].keys())
    lines = []
    if provenance is not None:
        lines.append("# provenance: " + json.dumps(provenance, sort_keys=True))
    lines.append(",".join(cols))
    for row in rows:
        lines.append(",".join(_cell(row.get(c, "")) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_csv(path: str | Path) -> tuple[list[dict], dict | None]:
    """Inverse of write_csv; numeric cells come back as floats."""
    lines = Path(path).read_text().splitlines()
    provenance = None
    idx = 0
    while idx < len(lines) and lines[idx].startswith("#"):
        if lines[idx].startswith("# provenance: "):
            provenance = json.loads(lines[idx][len("# provenance: "):])
        idx += 1
    if idx >= len(lines):
        raise ReportError(f"{path}: no header row")
    cols = lines[idx].split(",")
    rows = []
    for line in lines[idx + 1:]:
        if not line.strip():
            continue
        cells = line.split(",")
        row = {}
        for c, cell in zip(cols, cells):
            try:
                row[c] = float(cell)
            except ValueError:
                row[c] = cell
        rows.append(row)
    return rows, provenance


def _save(fig, path: Path):
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def figure_path(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".png")


def render_ablation_figure(rows: list[dict], path: str | Path):
    """Bar chart of per-config mean MSE with per-seed points and stderr bars."""
    configs = []
    for r in rows:
        if r["config"] not in configs:
            configs.append(r["config"])
    means, errs = [], []
    for c in configs:
        vals = [r["mse"] for r in rows if r["config"] == c]
        means.append(np.mean(vals))
        errs.append(np.std(vals) / max(1, np.sqrt(len(vals))))
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.arange(len(configs))
    ax.bar(x, means, yerr=errs, capsize=4, color="#4878a8", alpha=0.85)
    for i, c in enumerate(configs):
        vals = [r["mse"] for r in rows if r["config"] == c]
        ax.plot([i] * len(vals), vals, "k.", ms=5)
    ax.set_xticks(x)
    ax.set_xticklabels(configs)
    ax.set_ylabel("closed-loop prediction MSE (m$^2$)")
    ax.set_xlabel("edge-selection variant")
    ax.set_title("Future-pose prediction vs. graph sparsity")
    fig.tight_layout()
    _save(fig, Path(path))


def render_training_figure(rows: list[dict], path: str | Path):
    """Learning curves: return, consistency reward, and episode completion."""
    it = [r["iteration"] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    axes[0].plot(it, [r["mean_return"] for r in rows], color="#35618f")
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("mean return")
    axes[1].plot(it, [r["mean_r_ic"] for r in rows], color="#8f3561")
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("mean consistency reward")
    axes[2].plot(it, [1.0 - r["termination_rate"] for r in rows], color="#4f8f35")
    axes[2].set_xlabel("iteration")
    axes[2].set_ylabel("episode completion rate")
    axes[2].set_ylim(-0.05, 1.05)
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, Path(path))


def render_loss_figure(history: list[dict], path: str | Path, keys: tuple[str, ...] = ("loss",)):
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [h["epoch"] for h in history]
    for key in keys:
        if any(key in h for h in history):
            ax.plot(epochs, [h.get(key, np.nan) for h in history], label=key)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, Path(path))


def render_reward_figure(rows: list[dict], path: str | Path):
    """Per-step reward breakdown of one logged episode."""
    steps = [r["step"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    for key, color in (("r_ic", "#35618f"), ("r_total", "#8f3561")):
        ax.plot(steps, [r[key] for r in rows], label=key, color=color)
    for key in ("d_l", "d_cp", "d_ed"):
        ax.plot(steps, [r[key] for r in rows], label=key, alpha=0.5, lw=0.9)
    ax.set_xlabel("control step")
    ax.legend(ncol=2, fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, Path(path))

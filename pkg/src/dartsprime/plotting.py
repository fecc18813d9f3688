"""SVG figures from a written search history directory."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

from dartsprime.search import read_history_csv, read_snapshot  # noqa: E402

_RC = {"svg.hashsalt": "dartsprime", "svg.fonttype": "path"}


@dataclass
class PlotSummary:
    alpha_paths: dict = field(default_factory=dict)
    timeline_path: Path = None
    subplots: dict = field(default_factory=dict)  # cell type -> number of edge panels
    lines_per_subplot: int = 0
    fire_markers: int = 0


def _save(fig: Figure, path: Path) -> Path:
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def _load_snapshots(directory: Path) -> list:
    paths = sorted(directory.glob("alpha_epoch_*.json"))
    if not paths:
        raise ValueError(f"{directory}: no alpha snapshots found")
    try:
        return [read_snapshot(p) for p in paths]
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{directory}: malformed alpha snapshot: {exc}") from exc


def plot_alpha_grid(snapshots: list, cell_type: str, path: Path, num_inputs: int) -> int:
    """One panel per edge: rows are destination states, columns are sources."""
    ops = snapshots[0]["ops"]
    shown = [p for p, name in enumerate(ops) if name != "none"]
    first = snapshots[0]["activated"][cell_type]
    num_edges = first.shape[0]
    num_states = 0
    while sum(num_inputs + i for i in range(num_states + 1)) <= num_edges:
        num_states += 1
    if sum(num_inputs + i for i in range(num_states)) != num_edges:
        raise ValueError(f"{num_edges} edges do not fit a cell with {num_inputs} inputs")
    cols = num_inputs + num_states - 1
    epochs = [s["epoch"] for s in snapshots]
    fig = Figure(figsize=(2.2 * cols, 1.8 * num_states))
    axes = fig.subplots(num_states, cols, squeeze=False, sharex=True, sharey=True)
    row = 0
    for i in range(num_states):
        for j in range(cols):
            ax = axes[i][j]
            if j >= num_inputs + i:
                ax.set_axis_off()
                continue
            for p in shown:
                ax.plot(epochs, [s["activated"][cell_type][row, p] for s in snapshots], label=ops[p])
            ax.set_title(f"{j} -> state {i}", fontsize=7)
            row += 1
    axes[0][0].legend(fontsize=5, loc="upper left")
    fig.suptitle(f"{cell_type} cell: activated weights per epoch")
    _save(fig, path)
    return num_edges


def plot_timeline(rows: list, path: Path) -> int:
    steps = [r["step"] for r in rows]
    fig = Figure(figsize=(8, 3))
    ax = fig.subplots()
    ax.plot(steps, [r["trace"] for r in rows], lw=0.5, alpha=0.5, label="trace")
    ax.plot(steps, [r["fimt"] for r in rows], lw=1.0, label="moving average")
    if any(r["h"] is not None for r in rows):
        ax.plot(steps, [r["h"] for r in rows], lw=1.0, label="threshold")
    fires = [r for r in rows if r["fired"]]
    ax.plot([r["step"] for r in fires], [r["fimt"] for r in fires], linestyle="none", marker="|",
            color="k", label="architecture step")
    ax.set_yscale("log")
    ax.set_xlabel("weight step")
    ax.legend(fontsize=6)
    _save(fig, path)
    return len(fires)


def plot_history(directory, out_dir=None) -> PlotSummary:
    """Write ``alpha_<cell>.svg`` per cell type and ``fimt_timeline.svg``."""
    directory = Path(directory)
    out = Path(out_dir) if out_dir else directory
    out.mkdir(parents=True, exist_ok=True)
    csv_path = directory / "history.csv" if directory.is_dir() else directory
    if directory.is_file():
        directory = directory.parent
    try:
        rows = read_history_csv(csv_path)
    except (OSError, KeyError, ValueError) as exc:
        raise ValueError(f"malformed history {csv_path}: {exc}") from exc
    snaps = _load_snapshots(directory)
    num_inputs = snaps[0].get("num_inputs", 2)
    summary = PlotSummary()
    for cell_type in snaps[0]["activated"]:
        path = out / f"alpha_{cell_type}.svg"
        summary.subplots[cell_type] = plot_alpha_grid(snaps, cell_type, path, num_inputs)
        summary.alpha_paths[cell_type] = path
    summary.lines_per_subplot = sum(name != "none" for name in snaps[0]["ops"])
    summary.timeline_path = out / "fimt_timeline.svg"
    summary.fire_markers = plot_timeline(rows, summary.timeline_path)
    return summary

"""Figure rendering for run outputs.

Reads the delimited files a run wrote (summary.json, trajectory.csv,
heatmap.csv) and renders PNG figures next to them: one exploration heatmap per
tuned region and process, and one energy-over-steps convergence chart. This is
the only module that touches matplotlib; the core run path never imports it.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_") or "region"


def _read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def render_run(out_dir: str | Path) -> list[Path]:
    """Render all figures for one run directory; returns the files written."""
    out_dir = Path(out_dir)
    with open(out_dir / "summary.json", encoding="utf-8") as fh:
        summary = json.load(fh)
    heat_rows = _read_csv(out_dir / "heatmap.csv")
    traj_rows = _read_csv(out_dir / "trajectory.csv")

    written: list[Path] = []
    core_levels = summary["grid"]["core_ghz"]
    uncore_levels = summary["grid"]["uncore_ghz"]

    groups: dict[tuple[str, str], list[dict[str, str]]] = {}
    for row in heat_rows:
        groups.setdefault((row["process"], row["rts"]), []).append(row)

    for (process, rts), rows in sorted(groups.items()):
        path = out_dir / f"heatmap-p{process}-{_slug(rts)}.png"
        _render_heatmap(path, rows, core_levels, uncore_levels, process, rts)
        written.append(path)

    if any(row["step"] not in ("", "0") for row in traj_rows):
        path = out_dir / "convergence.png"
        _render_convergence(path, traj_rows)
        written.append(path)
    return written


def _render_heatmap(
    path: Path,
    rows: list[dict[str, str]],
    core_levels: list[float],
    uncore_levels: list[float],
    process: str,
    rts: str,
) -> None:
    visits = np.zeros((len(core_levels), len(uncore_levels)))
    energy: dict[tuple[int, int], float] = {}
    for row in rows:
        c, u = int(row["core_idx"]), int(row["uncore_idx"])
        visits[c, u] = int(row["visits"])
        if row["last_energy_j"]:
            energy[(c, u)] = float(row["last_energy_j"])

    fig, ax = plt.subplots(figsize=(0.55 * len(uncore_levels) + 2, 0.45 * len(core_levels) + 2))
    masked = np.ma.masked_equal(visits, 0)
    im = ax.imshow(masked, origin="lower", cmap="viridis", aspect="auto")
    for (c, u), joules in energy.items():
        ax.text(u, c, f"{joules:.0f}", ha="center", va="center", fontsize=6,
                color="white" if visits[c, u] else "gray")
    ax.set_xticks(range(len(uncore_levels)), [f"{v:g}" for v in uncore_levels], fontsize=6, rotation=90)
    ax.set_yticks(range(len(core_levels)), [f"{v:g}" for v in core_levels], fontsize=6)
    ax.set_xlabel("uncore GHz")
    ax.set_ylabel("core GHz")
    ax.set_title(f"visits and last energy (J), process {process}, {rts}", fontsize=9)
    fig.colorbar(im, ax=ax, label="visits")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _render_convergence(path: Path, traj_rows: list[dict[str, str]]) -> None:
    series: dict[tuple[str, str], tuple[list[int], list[float]]] = {}
    for row in traj_rows:
        if row["step"] == "":
            continue
        key = (row["process"], row["rts"])
        xs, ys = series.setdefault(key, ([], []))
        xs.append(int(row["step"]))
        ys.append(float(row["energy_j"]))

    fig, ax = plt.subplots(figsize=(8, 4.5))
    for (process, rts), (xs, ys) in sorted(series.items()):
        ax.plot(xs, ys, linewidth=0.9, label=f"p{process} {rts}")
    ax.set_xlabel("tuner step")
    ax.set_ylabel("energy per invocation (J)")
    ax.set_title("measured energy over tuner steps")
    if len(series) <= 8:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

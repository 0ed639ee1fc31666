"""Figures and plain data files for reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .report import ExperimentReport  # noqa: E402


def write_series_data(report: ExperimentReport, path: str | Path, dt: float = 0.02) -> Path:
    path = Path(path)
    t = (np.arange(len(report.cot_series)) + 1) * dt
    header = f"protocol={report.protocol_id} morphology={report.morphology} seed={report.seed}\ntime cot"
    np.savetxt(path, np.column_stack([t, report.cot_series]), header=header, fmt="%.6f")
    return path


def plot_cot_series(reports, path: str | Path, dt: float = 0.02) -> Path:
    """Instantaneous CoT over time, one line per report, turning points marked."""
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for rep in reports:
        t = (np.arange(len(rep.cot_series)) + 1) * dt
        ax.plot(t, rep.cot_series, lw=0.8, label=rep.morphology)
        for tt in rep.events.get("turn_times", []):
            ax.axvline(tt, color="grey", lw=0.5, ls="--")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("instantaneous CoT")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def cot_vs_speed_table(reports) -> list[tuple[str, str, float, float]]:
    rows = []
    for rep in reports:
        if rep.protocol == "straight" and rep.aggregate_cot is not None:
            rows.append((rep.morphology, rep.params["terrain"], rep.params["speed"], rep.aggregate_cot))
    return sorted(rows)


def write_cot_vs_speed(reports, path: str | Path) -> Path:
    path = Path(path)
    lines = ["# morphology terrain speed cot"]
    lines += [f"{m} {t} {v:.3f} {c:.6f}" for m, t, v, c in cot_vs_speed_table(reports)]
    path.write_text("\n".join(lines) + "\n")
    return path


def plot_cot_vs_speed(reports, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    groups: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for m, t, v, c in cot_vs_speed_table(reports):
        groups.setdefault((m, t), []).append((v, c))
    for (m, t), pts in sorted(groups.items()):
        v, c = zip(*pts)
        ax.plot(v, c, marker="o", label=f"{m} / {t}")
    ax.set_xlabel("commanded speed [m/s]")
    ax.set_ylabel("CoT")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)

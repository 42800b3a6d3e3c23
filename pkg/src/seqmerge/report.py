"""File emitters for CLI reports: canonical JSON, CSV, and figures.

JSON is written with sorted keys and a trailing newline so identical
inputs produce identical bytes.  Figures render through the Agg backend;
every report directory pairs the delimited output with a PNG of the same
numbers.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_TRACE_COLORS = ("tab:orange", "tab:green", "tab:red")


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def bench_figure(path: Path, rows: Sequence[dict]) -> None:
    """Speed-up and output drift against the merge budget."""
    xs = [row["r"] if row["r"] is not None else -1 for row in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(xs, [row["speedup"] for row in rows], "o-", color="tab:blue")
    ax1.axhline(1.0, color="gray", lw=0.8, ls=":")
    ax1.set_xlabel("merged pairs per layer r")
    ax1.set_ylabel("FLOP speed-up")
    ax1.grid(alpha=0.3)
    ax2.plot(xs, [row["output_delta_L2"] for row in rows], "s-", color="tab:red")
    ax2.set_xlabel("merged pairs per layer r")
    ax2.set_ylabel("output delta (L2)")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def analyze_figure(
    path: Path,
    names: Sequence[str],
    series: np.ndarray,
    reports: Sequence[dict],
) -> None:
    """Amplitude spectra, redundancy curves, and entropy bars per variate."""
    fig, (ax1, ax2, ax3) = plt.subplots(1, 3, figsize=(13, 3.6))
    for idx, name in enumerate(names):
        col = series[:, idx]
        amp = np.abs(np.fft.rfft(col))[1:]
        ax1.semilogy(np.arange(1, len(amp) + 1), np.maximum(amp, 1e-12), label=name)
        red = reports[idx]["redundancy"]
        ax2.plot([p[0] for p in red], [p[1] for p in red], "o-", label=name)
    ax1.set_xlabel("frequency bin")
    ax1.set_ylabel("amplitude")
    ax1.legend(fontsize=7)
    ax1.grid(alpha=0.3)
    ax2.set_xlabel("similarity threshold")
    ax2.set_ylabel("candidate fraction")
    ax2.set_ylim(-0.05, 1.05)
    ax2.grid(alpha=0.3)
    pos = np.arange(len(names))
    ax3.bar(pos - 0.2, [r["entropy"] for r in reports], width=0.4, label="raw")
    ax3.bar(
        pos + 0.2,
        [r["entropy_lowpassed"] for r in reports],
        width=0.4,
        label="low-passed",
    )
    ax3.set_xticks(pos, names, rotation=30, fontsize=7)
    ax3.set_ylabel("spectral entropy (nats)")
    ax3.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def trace_figure(
    path: Path,
    series_col: np.ndarray,
    position_cluster: Sequence[int],
    samples_per_position: int,
) -> None:
    """First variate with the three largest merge clusters highlighted.

    position_cluster maps token positions to surviving token indices
    (-1 for pruned positions); each token position covers
    samples_per_position consecutive samples.
    """
    counts: dict[int, int] = {}
    for c in position_cluster:
        if c >= 0:
            counts[c] = counts.get(c, 0) + 1
    top = [c for c, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:3]]
    fig, ax = plt.subplots(figsize=(9, 3))
    ax.plot(series_col, color="0.55", lw=0.9, zorder=1)
    for rank, cluster in enumerate(top):
        xs: list[int] = []
        for pos, c in enumerate(position_cluster):
            if c == cluster:
                lo = pos * samples_per_position
                xs.extend(range(lo, min(lo + samples_per_position, len(series_col))))
        ax.scatter(
            xs,
            series_col[xs],
            s=8,
            color=_TRACE_COLORS[rank],
            zorder=2,
            label=f"cluster {cluster} ({len(xs)} samples)",
        )
    ax.set_xlabel("sample")
    ax.set_ylabel("value")
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)

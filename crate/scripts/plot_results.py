#!/usr/bin/env python3
"""Plot the CSV/JSON outputs of a traceprobe run directory.

Usage: plot_results.py <run_dir> [more_run_dirs...]

Renders whatever it finds: learning curves (curve*.csv), Hutchinson scans
(hutchinson_scan.csv), scan summaries (scan_summary.csv), and deviation
histograms (stats.json) with the matching Gaussian overlaid. Figures are
written next to the inputs as PNG.
"""
import csv
import json
import math
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def plot_curves(run_dir):
    curves = sorted(run_dir.glob("curve*.csv"))
    if not curves:
        return
    fig, (ax_std, ax_mean) = plt.subplots(2, 1, figsize=(7, 7), sharex=True)
    for path in curves:
        rows = read_csv(path)
        label = path.stem.replace("curve_", "").replace("curve", "default")
        t = [float(r["t"]) for r in rows]
        ax_std.plot(t, [float(r["std_d"]) for r in rows], marker="o", label=label)
        ax_mean.plot(t, [float(r["mean_d"]) for r in rows], marker="o", label=label)
    ax_std.set_yscale("log")
    ax_std.set_ylabel("std of d (held-out)")
    ax_std.legend(fontsize=8)
    ax_mean.set_ylabel("mean of d (bias)")
    ax_mean.set_xlabel("training step t")
    ax_mean.axhline(0.0, color="gray", lw=0.5)
    fig.tight_layout()
    out = run_dir / "curves.png"
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


def plot_hutchinson(run_dir):
    path = run_dir / "hutchinson_scan.csv"
    if not path.exists():
        return
    rows = read_csv(path)
    n_z = [float(r["N_z"]) for r in rows]
    err = [float(r["mean_abs_error"]) for r in rows]
    bar = [float(r["std_error_of_that"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.errorbar(n_z, err, yerr=bar, marker="o")
    ref = err[0] * math.sqrt(n_z[0])
    ax.plot(n_z, [ref / math.sqrt(x) for x in n_z], "--", color="gray",
            label="1/sqrt(N_z)")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("number of noise vectors N_z")
    ax.set_ylabel("mean |error|")
    ax.legend()
    fig.tight_layout()
    out = run_dir / "hutchinson_scan.png"
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


def plot_scan_summary(run_dir):
    path = run_dir / "scan_summary.csv"
    if not path.exists():
        return
    rows = read_csv(path)
    param = list(rows[0].keys())[0]
    x = [float(r[param]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(x, [float(r["final_std_d"]) for r in rows], marker="o", label="std of d")
    ax.plot(x, [abs(float(r["final_mean_d"])) for r in rows], marker="s",
            label="|mean of d|")
    if min(x) > 0:
        ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(param)
    ax.set_ylabel("final held-out deviation")
    ax.legend()
    fig.tight_layout()
    out = run_dir / "scan_summary.png"
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


def plot_histogram(run_dir):
    path = run_dir / "stats.json"
    if not path.exists():
        return
    stats = json.loads(path.read_text())
    edges = stats["bin_edges"]
    counts = stats["bin_counts"]
    if len(edges) < 2:
        return
    widths = [b - a for a, b in zip(edges, edges[1:])]
    centers = [(a + b) / 2 for a, b in zip(edges, edges[1:])]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.bar(centers, counts, width=widths, alpha=0.6, label="d_i")
    mu, sigma, n = stats["mean"], stats["std"], stats["count"]
    if sigma > 0:
        xs = [edges[0] + (edges[-1] - edges[0]) * k / 400 for k in range(401)]
        scale = n * (sum(widths) / len(widths))
        ys = [scale * math.exp(-((x - mu) ** 2) / (2 * sigma**2))
              / (sigma * math.sqrt(2 * math.pi)) for x in xs]
        ax.plot(xs, ys, color="tab:blue", label="normal fit")
    ax.set_xlabel("deviation d")
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    out = run_dir / "histogram.png"
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


def main():
    if len(sys.argv) < 2:
        print(__doc__)
        return 1
    for arg in sys.argv[1:]:
        run_dir = Path(arg)
        if not run_dir.is_dir():
            print(f"skipping {run_dir}: not a directory")
            continue
        plot_curves(run_dir)
        plot_hutchinson(run_dir)
        plot_scan_summary(run_dir)
        plot_histogram(run_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Plot learning curves written by `mxz curve` or the acceptance suite.

usage: python3 scripts/plot_curve.py curve.csv [more.csv ...] out.png
"""

import argparse
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    games = [int(r["games"]) for r in rows]
    win = [float(r["win_pct"]) for r in rows]
    lo = [float(r["wilson_lo"]) for r in rows]
    hi = [float(r["wilson_hi"]) for r in rows]
    return games, win, lo, hi


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv", nargs="+", help="curve CSV files, then the output image")
    args = ap.parse_args()
    if len(args.csv) < 2:
        ap.error("need at least one CSV and an output path")
    *inputs, out = args.csv

    fig, ax = plt.subplots(figsize=(6, 4))
    for path in inputs:
        games, win, lo, hi = load(path)
        ax.plot(games, win, marker="o", label=path.rsplit("/", 1)[-1].removesuffix(".csv"))
        ax.fill_between(games, lo, hi, alpha=0.2)
    ax.set_xlabel("self-play games")
    ax.set_ylabel("win % vs baseline (95% Wilson)")
    ax.set_ylim(0, 100)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=120)


if __name__ == "__main__":
    main()

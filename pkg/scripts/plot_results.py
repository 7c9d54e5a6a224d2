#!/usr/bin/env python3
"""Plot trajectory or training-history CSVs produced by the benchmarks.

Requires matplotlib, which is not a package dependency; install it
separately if you want figures.
"""
import argparse
import csv
from pathlib import Path

import matplotlib.pyplot as plt


def _read_csv(path: Path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    cols = {name: [float(r[i]) for r in rows[1:]] for i, name in enumerate(header)}
    return header, cols


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csvs", nargs="+", type=Path)
    ap.add_argument("--out", type=Path, help="save figure instead of showing")
    ap.add_argument("--logy", action="store_true")
    args = ap.parse_args()

    fig, ax = plt.subplots()
    for path in args.csvs:
        header, cols = _read_csv(path)
        x = cols[header[0]]
        for name in header[1:]:
            ax.plot(x, cols[name], label=f"{path.stem}:{name}")
    ax.set_xlabel(header[0])
    if args.logy:
        ax.set_yscale("log")
    ax.legend(fontsize="small")
    fig.tight_layout()
    if args.out:
        fig.savefig(args.out, dpi=150)
        print("wrote", args.out)
    else:
        plt.show()


if __name__ == "__main__":
    main()

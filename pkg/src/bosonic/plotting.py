"""Render a conjecture-scan CSV to PNG.

    python -m bosonic.plotting scan.csv scan.png
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 9,
    "lines.linewidth": 1.2,
    "figure.figsize": (7.0, 3.0),
    "savefig.dpi": 150,
}


def read_scan(path) -> dict:
    """Columns of a scan CSV as float arrays keyed by header name."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    need = {"r", "x_min", "f", "inv_f"}
    missing = need - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    return {k: np.array([float(row[k]) for row in rows]) for k in rows[0]}


def plot_scan(data: dict, out_path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    r, inv_f, x_min = data["r"], data["inv_f"], data["x_min"]
    slope, intercept = np.polyfit(r, inv_f, 1)
    with plt.rc_context(STYLE):
        fig, (left, right) = plt.subplots(1, 2, constrained_layout=True)
        left.plot(r, inv_f, "o", ms=2.5, label="1/f(r)")
        left.plot(r, slope * r + intercept, "-", color="0.3",
                  label=f"fit {slope:.3f} r + {intercept:.3f}")
        left.set_xlabel("r")
        left.set_ylabel("1/f(r)")
        left.legend(frameon=False)
        right.plot(r, x_min, ".", ms=3)
        right.set_xlabel("r")
        right.set_ylabel("minimizing shift x")
        fig.savefig(out_path)
        plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m bosonic.plotting")
    parser.add_argument("csv")
    parser.add_argument("png")
    args = parser.parse_args(argv)
    try:
        data = read_scan(args.csv)
    except (OSError, ValueError) as exc:
        print(f"plotting: {exc}", file=sys.stderr)
        return 1
    plot_scan(data, args.png)
    return 0


if __name__ == "__main__":
    sys.exit(main())

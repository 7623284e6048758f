"""Plot the diagnostics emitted by a simulate/tree run.

Reads diag.csv (and events.csv when present) from a run directory and
renders a two-panel figure: energy and Sobolev norms on top, the scaled
sup amplitude below with located threshold crossings marked.  Requires
matplotlib, which the package itself does not depend on:

    pip install matplotlib
    python docs/plot_diagnostics.py out/ --save cascade.png
"""

import argparse
import csv
import os

import matplotlib.pyplot as plt


def read_csv_columns(path):
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    cols = {name: [float(r[i]) for r in data] for i, name in enumerate(header) if name != "argmax_j"}
    if "argmax_j" in header:
        i = header.index("argmax_j")
        cols["argmax_j"] = [int(r[i]) for r in data]
    return cols


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run_dir", help="directory containing diag.csv")
    ap.add_argument("--save", metavar="PNG", help="write the figure instead of showing it")
    ap.add_argument("--log-norms", action="store_true", help="log scale on the norm panel")
    args = ap.parse_args()

    diag = read_csv_columns(os.path.join(args.run_dir, "diag.csv"))
    t = diag["t"]

    events = []
    events_path = os.path.join(args.run_dir, "events.csv")
    if os.path.exists(events_path):
        with open(events_path, encoding="utf-8") as fh:
            rows = list(csv.reader(fh))[1:]
        events = [(int(j), float(tj)) for j, tj in rows]

    fig, (ax_norm, ax_sup) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))

    ax_norm.plot(t, diag["energy"], label="energy", lw=1.2)
    for name in diag:
        if name.startswith("h"):
            ax_norm.plot(t, diag[name], label=name, lw=1.0)
    if args.log_norms:
        ax_norm.set_yscale("log")
    ax_norm.set_ylabel("energy / norms")
    ax_norm.legend(loc="best", fontsize=8)

    ax_sup.plot(t, diag["sup_scaled"], color="tab:red", lw=1.0, label="sup_j lam^j u_j")
    ax_sup.set_yscale("symlog", linthresh=1e-6)
    for j, tj in events:
        ax_sup.axvline(tj, color="grey", lw=0.6, alpha=0.7)
        ax_sup.annotate(f"j={j}", (tj, ax_sup.get_ylim()[1]), fontsize=7,
                        ha="center", va="top", rotation=90)
    ax_sup.set_xlabel("t")
    ax_sup.set_ylabel("scaled sup")
    ax_sup.legend(loc="best", fontsize=8)

    fig.tight_layout()
    if args.save:
        fig.savefig(args.save, dpi=150)
        print(f"wrote {args.save}")
    else:
        plt.show()


if __name__ == "__main__":
    main()

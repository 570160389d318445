"""Plot CSV outputs of the command-line tool (needs matplotlib).

    python scripts/plot_results.py results/stitched.csv -o stitched.png
    python scripts/plot_results.py results/chain_bp.csv -o chain.png
"""

import argparse

import numpy as np


def load(path):
    with open(path, encoding="utf-8") as fh:
        lines = [l for l in fh if not l.startswith("#")]
    names = lines[0].strip().split(",")
    data = np.genfromtxt(lines[1:], delimiter=",")
    return {n: data[:, k] for k, n in enumerate(names)}


def main():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("csv")
    p.add_argument("-o", "--output", default="plot.png")
    args = p.parse_args()
    d = load(args.csv)
    bound = d.get("total_error", d.get("bp_error_estimate"))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(d["T"], d["true_error"], "o-", ms=3, label="|E - exact|")
    ax.loglog(d["T"], bound, "--", label="error estimate")
    ax.set_xlabel("T")
    ax.set_ylabel("energy error per bond")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)


if __name__ == "__main__":
    main()

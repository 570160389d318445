"""Cumulant norms of the critical-chain message at several temperatures.

    python scripts/cumulant_norms.py --l 8 --beta 0.5 1 2 > norms.csv
"""

import argparse
import sys

from cgbp.chain import BpConfig, run_chain_bp
from cgbp.models import tfim_chain


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--l", type=int, default=8)
    p.add_argument("--B", type=float, default=1.0)
    p.add_argument("--beta", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    args = p.parse_args()
    h = tfim_chain(args.B).template
    out = sys.stdout
    out.write("beta,j,norm\n")
    for beta in args.beta:
        res = run_chain_bp(h, BpConfig(args.l, beta))
        for j, n in enumerate(res.cumulants.norms, start=1):
            out.write(f"{beta!r},{j},{n!r}\n")


if __name__ == "__main__":
    main()

"""Chain BP error against the exact free-fermion energy for several window sizes.

    python scripts/window_scan.py --l 4 6 8 --t-min 0.3 --t-max 10 --points 20 > scan.csv
"""

import argparse
import sys

import numpy as np

from cgbp.chain import BpConfig, run_chain_bp
from cgbp.models import tfim_chain
from cgbp.oracle import jw_energy_density


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--l", type=int, nargs="+", default=[4, 6, 8])
    p.add_argument("--B", type=float, default=1.0)
    p.add_argument("--t-min", type=float, default=0.3)
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--points", type=int, default=20)
    args = p.parse_args()
    h = tfim_chain(args.B).template
    T = np.geomspace(args.t_max, args.t_min, args.points)
    exact = [jw_energy_density(args.B, t) for t in T]
    sys.stdout.write("l,T,energy,bp_error_estimate,true_error\n")
    for l in args.l:
        warm = None
        for t, e in zip(T, exact):
            warm = run_chain_bp(h, BpConfig(l, 1 / t), warm)
            en = warm.observables["energy"]
            sys.stdout.write(f"{l},{t!r},{en!r},{warm.error_estimate!r},{abs(en - e)!r}\n")
            sys.stdout.flush()


if __name__ == "__main__":
    main()

"""Spectral gap with estimated (upper-bound) modified and standard log-Sobolev
constants of Glauber and flip dynamics, next to the 1/n scale."""

import argparse
import csv
import sys

from specind import (
    FlipParameters,
    RngStream,
    coloring,
    enumerate_gibbs,
    flip_kernel,
    functional_report,
    glauber_kernel,
    parse_graph_name,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--graphs", nargs="+", default=["path3", "path4", "path5", "cycle5"])
    ap.add_argument("--q", type=int, default=5)
    ap.add_argument("--pool", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["graph", "chain", "n", "inv_n", "gap", "mlsi_upper", "lsi_upper",
                "4kappa<=rho", "rho<=2lambda"])
    for i, name in enumerate(args.graphs):
        d = enumerate_gibbs(coloring(parse_graph_name(name), args.q))
        kernels = {"glauber": glauber_kernel(d), "flip": flip_kernel(d, FlipParameters.vigoda())}
        for j, (chain, T) in enumerate(kernels.items()):
            rng = RngStream(args.seed).child(i, j).generator()
            f = rng.random(d.N)
            r = functional_report(T, f, rng, pool=args.pool)
            w.writerow([name, chain, d.n, 1 / d.n, r.spectral_gap, r.mlsi_upper, r.lsi_upper,
                        r.ordering_flags["4kappa<=rho"], r.ordering_flags["rho<=2lambda"]])


if __name__ == "__main__":
    main()

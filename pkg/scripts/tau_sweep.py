"""Outer iteration count and errors of the splitting as a function of tau.

    python scripts/tau_sweep.py --level 3 --taus 0.01 0.05 0.1 0.25 0.5 0.75 1.0
"""

import argparse

from implicit_ns.cli import solve_level
from implicit_ns.constitutive import ConstitutiveModel
from implicit_ns.manufactured import ManufacturedCase
from implicit_ns.solvers import OuterNonConvergence, SolverConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--case", type=int, default=1)
    ap.add_argument("--level", type=int, default=3)
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--taus", type=float, nargs="+", default=[0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0])
    args = ap.parse_args()
    case = ManufacturedCase(args.case, ConstitutiveModel(args.alpha, args.gamma))
    print(f"{'tau':>6} {'iters':>6} {'err_T':>12} {'err_u':>12} {'err_p':>12} {'tail rate':>9}")
    for tau in args.taus:
        try:
            _, _, trace, err = solve_level(case, args.level, SolverConfig(tau=tau, max_outer=2000))
        except OuterNonConvergence as exc:
            print(f"{tau:6.3f} {'-':>6}  {exc}")
            continue
        m = trace.metrics
        rate = m[-1] / m[-2] if len(m) > 1 else float("nan")
        print(f"{tau:6.3f} {trace.iterations:6d} {err.err_T:12.5e} {err.err_u:12.5e} {err.err_p:12.5e} {rate:9.3f}")


if __name__ == "__main__":
    main()

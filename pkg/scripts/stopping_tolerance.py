"""Effect of the outer tolerance on the stress error for a small pseudo-time step.

    python scripts/stopping_tolerance.py --level 5 --tau 0.01
"""

import argparse

from implicit_ns.cli import solve_level
from implicit_ns.constitutive import ConstitutiveModel
from implicit_ns.manufactured import ManufacturedCase
from implicit_ns.solvers import SolverConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--level", type=int, default=5)
    ap.add_argument("--tau", type=float, default=0.01)
    ap.add_argument("--tols", type=float, nargs="+", default=[1e-5, 1e-6, 1e-7])
    args = ap.parse_args()
    case = ManufacturedCase(1, ConstitutiveModel(1.0, 1.0))
    prev = None
    for tol in args.tols:
        _, _, trace, err = solve_level(case, args.level, SolverConfig(tau=args.tau, tol_outer=tol, max_outer=5000))
        gain = "" if prev is None else f"  err_T gain x{prev / err.err_T:.3f}"
        print(f"tol {tol:.0e}: {trace.iterations:5d} its, err_T {err.err_T:.5e}, err_u {err.err_u:.5e}, err_p {err.err_p:.5e}{gain}", flush=True)
        prev = err.err_T


if __name__ == "__main__":
    main()

"""Re-run the published convergence tables and write one CSV per table.

    python scripts/reproduce_tables.py --out results [--max-level 5] [--only table5 table9]
"""

import argparse
from pathlib import Path

from implicit_ns.cli import StudyConfig, emit, run_study

TABLES = {
    "table1": dict(case=1, algorithm="lions-mercier", alpha=1.0, gamma=0.0, tau=0.01),
    "table2": dict(case=1, algorithm="lions-mercier", alpha=1.0, gamma=1.0, tau=0.01),
    "table3": dict(case=1, algorithm="lions-mercier", alpha=1.0, gamma=1.0, tau=0.05),
    "table4": dict(case=1, algorithm="lions-mercier", alpha=1.0, gamma=1.0, tau=0.1),
    "table5": dict(case=1, algorithm="lions-mercier", alpha=1.0, gamma=1.0, tau=0.5),
    "table6": dict(case=2, algorithm="lions-mercier", alpha=1.0, gamma=0.0, tau=0.5),
    "table7": dict(case=2, algorithm="lions-mercier", alpha=1.0, gamma=1.0, tau=0.01),
    "table8": dict(case=2, algorithm="lions-mercier", alpha=1.0, gamma=1.0, tau=0.5),
    "table9": dict(case=1, algorithm="fixed-point", alpha=1.0, gamma=1.0),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--min-level", type=int, default=2)
    ap.add_argument("--max-level", type=int, default=5)
    ap.add_argument("--only", nargs="*", choices=sorted(TABLES))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.only or TABLES:
        cfg = StudyConfig(levels=(args.min_level, args.max_level), **TABLES[name])
        table = run_study(cfg)
        (out / f"{name}.csv").write_bytes(emit(table, "csv"))
        print(f"== {name}: {TABLES[name]}")
        print(emit(table, "text").decode(), flush=True)


if __name__ == "__main__":
    main()

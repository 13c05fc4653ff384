"""Convergence studies from the command line.

    python -m implicit_ns --case 1 --algorithm lions-mercier --alpha 1 --gamma 1 \\
        --tau 0.5 --levels 2..5 --format text

Settings may also come from a ``key = value`` file given with ``--config``;
flags on the command line win over the file.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import Discretization
from .basis import Space, evaluate, reference_nodes
from .constitutive import ConstitutiveModel, frobenius_norm
from .manufactured import CaseId, ManufacturedCase
from .mesh import MeshSpec, QuadMesh, build_mesh
from .norms import compute_errors, convergence_rate
from .solvers import Algorithm, FlowState, OuterNonConvergence, SolverConfig, run
from .spaces import build_spaces, interpolate_dirichlet

logger = logging.getLogger(__name__)

MAX_LEVEL = 7
CSV_HEADER = ("n", "h", "err_T", "err_u", "err_p", "iters", "seconds")


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    case: int
    algorithm: Algorithm
    alpha: float = 1.0
    gamma: float = 1.0
    tau: float = 0.5
    levels: tuple[int, int] = (2, 5)
    tol_outer: float = 1e-5
    tol_newton: float = 1e-6
    out: Path | None = None
    format: str = "csv"
    export_fields: Path | None = None

    def __post_init__(self):
        if self.case not in (1, 2):
            raise ConfigError(f"case must be 1 or 2, got {self.case}")
        try:
            self.algorithm = Algorithm(self.algorithm)
        except ValueError:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}") from None
        lo, hi = self.levels
        if lo > hi:
            raise ConfigError(f"empty level range {lo}..{hi}")
        if lo < 1 or hi > MAX_LEVEL:
            raise ConfigError(f"levels must lie in 1..{MAX_LEVEL}, got {lo}..{hi}")
        if self.alpha <= 0 or self.gamma < 0:
            raise ConfigError("need alpha > 0 and gamma >= 0")
        if self.algorithm is Algorithm.LIONS_MERCIER and self.tau <= 0:
            raise ConfigError("tau must be positive for lions-mercier")
        if self.tol_outer <= 0 or self.tol_newton <= 0:
            raise ConfigError("tolerances must be positive")
        if self.format not in ("csv", "text"):
            raise ConfigError(f"unknown format {self.format!r}")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            algorithm=self.algorithm, tau=self.tau, tol_outer=self.tol_outer, tol_newton=self.tol_newton
        )


@dataclass(frozen=True)
class StudyRow:
    n: int
    h: float
    err_T: float
    err_u: float
    err_p: float
    iters: int
    seconds: float

    @property
    def failed(self) -> bool:
        return self.iters < 0


@dataclass
class ConvergenceTable:
    rows: list[StudyRow] = field(default_factory=list)

    def append(self, row: StudyRow):
        if self.rows and not row.h < self.rows[-1].h:
            raise ValueError("rows must be added with strictly decreasing h")
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)


# ---------------------------------------------------------------------------- configuration


def _parse_levels(text: str) -> tuple[int, int]:
    parts = str(text).split("..")
    try:
        if len(parts) == 1:
            n = int(parts[0])
            return n, n
        if len(parts) == 2:
            return int(parts[0]), int(parts[1])
    except ValueError:
        pass
    raise ConfigError(f"malformed level range {text!r}; expected A..B")


_CONVERTERS = {
    "case": int,
    "algorithm": str,
    "alpha": float,
    "gamma": float,
    "tau": float,
    "levels": _parse_levels,
    "tol_outer": float,
    "tol_newton": float,
    "out": Path,
    "format": str,
    "export_fields": Path,
}


def _convert(key: str, value):
    try:
        return _CONVERTERS[key](value)
    except ConfigError:
        raise
    except (TypeError, ValueError):
        raise ConfigError(f"malformed value for {key}: {value!r}") from None


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines. Dashes in keys are accepted as underscores."""
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, value)
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="implicit-ns", description="Manufactured-solution convergence study.")
    p.add_argument("--case", type=int)
    p.add_argument("--algorithm", choices=[a.value for a in Algorithm])
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--levels", help="inclusive range A..B")
    p.add_argument("--tol-outer", type=float)
    p.add_argument("--tol-newton", type=float)
    p.add_argument("--out", help="write the table here instead of stdout")
    p.add_argument("--format", choices=["csv", "text"])
    p.add_argument("--export-fields", metavar="DIR", help="write one VTK file per level into DIR")
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_config(args=None, file=None) -> StudyConfig:
    """Build a StudyConfig from CLI tokens and an optional settings file."""
    ns = build_parser().parse_args(args)
    path = file if file is not None else ns.config
    values = read_config_file(path) if path is not None else {}
    for key in _CONVERTERS:
        v = getattr(ns, key)
        if v is not None:
            values[key] = _convert(key, v)
    missing = [k for k in ("case", "algorithm") if k not in values]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")
    return StudyConfig(**values)


# ---------------------------------------------------------------------------- study


def setup_level(case: ManufacturedCase, level: int) -> Discretization:
    mesh = build_mesh(MeshSpec(case.domain, level))
    spaces = build_spaces(mesh)
    return Discretization(mesh, spaces, case.model, interpolate_dirichlet(mesh, spaces, case.u))


def solve_level(case: ManufacturedCase, level: int, solver: SolverConfig):
    """Discretize, solve and measure one level. Returns (disc, state, trace, errors)."""
    disc = setup_level(case, level)
    state, trace = run(disc, case, solver)
    return disc, state, trace, compute_errors(disc, state, case)


def run_study(config: StudyConfig, sink=None) -> ConvergenceTable:
    """Solve every level in ``config.levels``; ``sink(row)`` sees each row as soon as it exists.

    A level whose solve fails is logged and recorded with NaN errors and
    ``iters = -1``; the remaining levels still run.
    """
    model = ConstitutiveModel(alpha=config.alpha, gamma=config.gamma)
    case = ManufacturedCase(CaseId(config.case), model)
    solver = config.solver_config()
    table = ConvergenceTable()
    lo, hi = config.levels
    for n in range(lo, hi + 1):
        t0 = time.perf_counter()
        h = math.sqrt(2.0) / 2**n
        try:
            disc, state, trace, err = solve_level(case, n, solver)
        except (OuterNonConvergence, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
            logger.error("level %d failed: %s", n, exc)
            row = StudyRow(n, h, math.nan, math.nan, math.nan, -1, time.perf_counter() - t0)
        else:
            row = StudyRow(n, h, *err.as_tuple(), trace.iterations, time.perf_counter() - t0)
            if config.export_fields is not None:
                directory = Path(config.export_fields)
                directory.mkdir(parents=True, exist_ok=True)
                export_fields(state, disc, directory / f"case{config.case}_level{n}.vtk")
        table.append(row)
        if sink is not None:
            sink(row)
    return table


# ---------------------------------------------------------------------------- output


def _csv_line(row: StudyRow) -> str:
    return (
        f"{row.n},{row.h:.5e},{row.err_T:.5e},{row.err_u:.5e},{row.err_p:.5e},"
        f"{row.iters},{row.seconds:.5e}\n"
    )


def emit(table: ConvergenceTable, format: str = "csv") -> bytes:
    if format == "csv":
        return (",".join(CSV_HEADER) + "\n" + "".join(_csv_line(r) for r in table.rows)).encode()
    if format != "text":
        raise ValueError(f"unknown format {format!r}")
    head = f"{'n':>3} {'h':>11} {'err_T':>12} {'rate':>5} {'err_u':>12} {'rate':>5} {'err_p':>12} {'rate':>5} {'iter':>5} {'sec':>8}"
    lines = [head]
    prev = None
    for r in table.rows:
        cells = [f"{r.n:>3}", f"{r.h:11.5e}"]
        for name in ("err_T", "err_u", "err_p"):
            v = getattr(r, name)
            rate = "-"
            if prev is not None and v > 0 and getattr(prev, name) > 0:
                rate = f"{convergence_rate([getattr(prev, name), v])[0]:.2f}"
            cells += [f"{v:12.5e}", f"{rate:>5}"]
        cells += [f"{r.iters:>5}", f"{r.seconds:8.2f}"]
        lines.append(" ".join(cells))
        prev = r
    return ("\n".join(lines) + "\n").encode()


def parse_csv(data: bytes | str) -> ConvergenceTable:
    text = data.decode() if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != CSV_HEADER:
        raise ValueError(f"unexpected header {header}")
    table = ConvergenceTable()
    for rec in reader:
        if rec:
            n, h, eT, eu, ep, it, sec = rec
            table.append(StudyRow(int(n), float(h), float(eT), float(eu), float(ep), int(it), float(sec)))
    return table


_SUBQUADS = np.array([[j * 3 + i, j * 3 + i + 1, (j + 1) * 3 + i + 1, (j + 1) * 3 + i] for j in range(2) for i in range(2)])


def export_fields(state: FlowState, disc: Discretization, path) -> Path:
    """Legacy VTK (ASCII 3.0) unstructured grid on the once-refined element grids.

    Every element contributes its own 9 Q2 nodes (stress is discontinuous, so
    points are not shared) and 4 quadrilateral cells.
    """
    mesh: QuadMesh = disc.mesh
    spaces = disc.spaces
    ne = mesh.n_elements
    ref = reference_nodes(Space.Q2)
    pts = (mesh.origins[:, None, :] + (mesh.side / 2) * (ref[None] + 1)).reshape(-1, 2)

    nodes = spaces.velocity_node_map
    nv = spaces.n_vnodes
    vel = np.stack([state.u[nodes], state.u[nodes + nv]], axis=-1).reshape(-1, 2)
    q1_at_nodes, _ = evaluate(Space.Q1, ref)
    pres = np.einsum("qa,ea->eq", q1_at_nodes, state.p[spaces.pressure_map]).ravel()
    T = state.T.reshape(ne, 3, 9).transpose(0, 2, 1).reshape(-1, 3)
    cells = (_SUBQUADS[None] + 9 * np.arange(ne)[:, None, None]).reshape(-1, 4)

    out = io.StringIO()
    out.write("# vtk DataFile Version 3.0\nimplicit_ns fields\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {len(pts)} double\n")
    np.savetxt(out, np.column_stack([pts, np.zeros(len(pts))]), fmt="%.10e")
    out.write(f"CELLS {len(cells)} {5 * len(cells)}\n")
    np.savetxt(out, np.column_stack([np.full(len(cells), 4), cells]), fmt="%d")
    out.write(f"CELL_TYPES {len(cells)}\n")
    np.savetxt(out, np.full(len(cells), 9), fmt="%d")
    out.write(f"POINT_DATA {len(pts)}\n")
    out.write("VECTORS velocity double\n")
    np.savetxt(out, np.column_stack([vel, np.zeros(len(vel))]), fmt="%.10e")
    scalars = {"pressure": pres, "T11": T[:, 0], "T12": T[:, 1], "T22": T[:, 2], "T_norm": frobenius_norm(T)}
    for name, vals in scalars.items():
        out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        np.savetxt(out, vals, fmt="%.10e")
    path = Path(path)
    path.write_text(out.getvalue(), encoding="ascii")
    return path


# ---------------------------------------------------------------------------- entry point


def main(argv=None) -> int:
    try:
        config = parse_config(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    verbose = build_parser().parse_args(argv).verbose
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    stream = open(config.out, "wb") if config.out is not None else sys.stdout.buffer
    try:
        if config.format == "csv":
            stream.write(emit(ConvergenceTable(), "csv"))
            stream.flush()

            def sink(row):
                stream.write(_csv_line(row).encode())
                stream.flush()

            table = run_study(config, sink)
        else:
            table = run_study(config, lambda r: logger.info("level %d done (%d iterations)", r.n, r.iters))
            stream.write(emit(table, "text"))
    finally:
        if stream is not sys.stdout.buffer:
            stream.close()
        else:
            stream.flush()
    return 1 if any(r.failed for r in table.rows) else 0


if __name__ == "__main__":
    sys.exit(main())

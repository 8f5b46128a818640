"""Command line front end: ``run``, ``converge`` and ``check``.

Exit codes: 0 success, 1 usage or configuration error, 2 solver failure,
3 failed check.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import check_suite, convergence_table, fmt, mass, total_variation
from .grid import DomainTooSmallError, SolverState, initial_state, make_grid, primitive
from .model import PRESETS, ConfigurationError, ProblemSpec, load_problem, preset
from .scheme import CflPolicy, NumericalFailure, advance

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_CHECK = 3

log = logging.getLogger("aggregation1d")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    problem: str
    dx: float
    t_end: float
    mu: float = 0.1
    epsilon: float = 0.05
    snapshot_times: tuple[float, ...] = ()
    out: Path = Path("out")
    is_config: bool = field(default=False)

    def __post_init__(self):
        if not self.dx > 0:
            raise UsageError(f"--dx must be positive, got {self.dx}")
        if not self.t_end >= 0:
            raise UsageError(f"--t-end must be nonnegative, got {self.t_end}")
        if not self.mu > 0:
            raise UsageError(f"--mu must be positive, got {self.mu}")
        if not 0 <= self.epsilon < 1:
            raise UsageError(f"--epsilon must lie in [0, 1), got {self.epsilon}")
        ts = self.snapshot_times
        if list(ts) != sorted(ts) or (ts and (ts[0] < 0 or ts[-1] > self.t_end + 1e-12)):
            raise UsageError("--snapshots must be sorted and lie in [0, t-end]")

    def load(self) -> ProblemSpec:
        return load_problem(self.problem) if self.is_config else preset(self.problem)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers: {text!r}") from exc


def time_label(t: float) -> str:
    return f"{t:g}"


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])


def _snapshot_files(out: Path, state: SolverState, grid) -> dict:
    label = time_label(state.t)
    U = state.U
    write_csv(out / f"u_t{label}.csv", ("x_center", "u"), zip(grid.centers, U))
    write_csv(out / f"v_t{label}.csv", ("x_node", "v"), zip(grid.nodes, state.V))
    return {"t": state.t, "mass": mass(U, grid), "tv_v": total_variation(state.V), "min_u": float(U.min()),
            "max_u": float(U.max())}


def cmd_run(cfg: RunConfig, inject_negative: bool = False) -> int:
    spec = cfg.load()
    times = sorted(set(cfg.snapshot_times) | {cfg.t_end})
    grid = make_grid(spec, cfg.dx, cfg.t_end, cfg.mu)
    policy = CflPolicy.for_problem(spec, cfg.epsilon)
    cfg.out.mkdir(parents=True, exist_ok=True)
    state = _initial(spec, grid, inject_negative)
    rows = []
    for t in times:
        state = advance(state, t, grid, spec, policy)
        if state.U is None:
            state = SolverState(state.V, state.t, state.n, np.diff(state.V) / grid.dx)
        rows.append(_snapshot_files(cfg.out, state, grid))
    keys = ("t", "mass", "tv_v", "min_u", "max_u")
    write_csv(cfg.out / "summary.csv", keys, ([float(r[k]) for k in keys] for r in rows))
    log.info("wrote %d snapshots to %s", len(rows), cfg.out)
    return EXIT_OK


def _initial(spec, grid, inject_negative):
    state = initial_state(spec, grid)
    if not inject_negative:
        return state
    U = state.U.copy()
    j = int(np.argmax(U))
    U[j] = -abs(U[j])
    return SolverState(primitive(U, grid), 0.0, 0, U)


def cmd_converge(spec: ProblemSpec, dx_list, ref_dx, times, out: Path, mu=0.1, epsilon=0.05) -> int:
    if not dx_list:
        raise UsageError("--dx-list is empty")
    if not ref_dx > 0 or any(d <= 0 for d in dx_list):
        raise UsageError("grid spacings must be positive")
    policy = CflPolicy.for_problem(spec, epsilon)
    table = convergence_table(spec, dx_list, ref_dx, times, mu=mu, policy=policy)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "errors.csv")
    sys.stdout.write(table.to_csv())
    return EXIT_OK


def cmd_check(spec: ProblemSpec, dx, t_end, seed, out: Path, mu=0.1, epsilon=0.05, inject_negative=False) -> int:
    grid = make_grid(spec, dx, t_end, mu)
    policy = CflPolicy.for_problem(spec, epsilon)
    results = check_suite(spec, grid, t_end, seed, policy, _initial(spec, grid, inject_negative))
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "checks.csv", ("check", "passed", "value", "tolerance"),
              ((r.name, int(r.passed), float(r.value), float(r.tolerance)) for r in results))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} value={fmt(r.value)} tol={fmt(r.tolerance)}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aggregation1d", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dx_required=True):
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--example", choices=PRESETS)
        src.add_argument("--config", type=Path, help="TOML problem description")
        if dx_required:
            sp.add_argument("--dx", type=float, required=True)
        sp.add_argument("--mu", type=float, default=0.1, help="dt / dx^2 (default 0.1)")
        sp.add_argument("--epsilon", type=float, default=0.05, help="CFL safety margin (default 0.05)")
        sp.add_argument("--out", type=Path, default=Path("out"))

    run = sub.add_parser("run", help="march a problem and write CSV snapshots")
    common(run)
    run.add_argument("--t-end", type=float, required=True)
    run.add_argument("--snapshots", type=_floats, default=())
    run.add_argument("--inject-negative", action="store_true", help=argparse.SUPPRESS)

    conv = sub.add_parser("converge", help="error table against a fine reference run")
    common(conv, dx_required=False)
    conv.add_argument("--dx-list", type=_floats, required=True)
    conv.add_argument("--ref-dx", type=float, required=True)
    conv.add_argument("--times", type=_floats, default=(0.1, 0.25))

    chk = sub.add_parser("check", help="run the invariant check suite")
    common(chk)
    chk.add_argument("--t-end", type=float, required=True)
    chk.add_argument("--seed", type=int, default=0)
    chk.add_argument("--inject-negative", action="store_true",
                     help="flip the sign of the largest initial cell average (fault injection)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    problem = str(args.config) if args.config else args.example
    is_config = args.config is not None
    try:
        if args.command == "run":
            cfg = RunConfig(problem, args.dx, args.t_end, args.mu, args.epsilon, tuple(args.snapshots), args.out,
                            is_config)
            return cmd_run(cfg, args.inject_negative)
        spec = load_problem(problem) if is_config else preset(problem)
        if args.command == "converge":
            return cmd_converge(spec, list(args.dx_list), args.ref_dx, list(args.times), args.out, args.mu,
                                args.epsilon)
        if not args.dx > 0 or not args.t_end >= 0:
            raise UsageError("--dx must be positive and --t-end nonnegative")
        return cmd_check(spec, args.dx, args.t_end, args.seed, args.out, args.mu, args.epsilon, args.inject_negative)
    except (UsageError, ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, DomainTooSmallError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance criteria, one test per criterion, at their stated tolerances.

Each test records a PASS/FAIL line that is repeated in the terminal summary.
Criterion 5 needs a reference run at dx = 0.0002 and is marked slow; run it
with ``pytest -m slow``.
"""

import numpy as np
import pytest

from aggregation1d import detect_jumps, make_grid, preset, support_intervals
from aggregation1d.diagnostics import (
    cfl_audit,
    convergence_table,
    entropy_run,
    equivalence_run,
    run_invariants,
    snapshots,
)

NAMES = ("ex1", "ex2", "ex3", "ex4", "ex5", "ex6")
INVARIANTS = ("monotonicity", "range_low", "range_high", "tv_identity", "mass", "l1_time_increment")


def test_criterion_1_scheme_equivalence(report):
    spec = preset("ex1")
    step, total = equivalence_run(spec, make_grid(spec, 0.01, 0.25), 0.25)
    ok = step <= 1e-12 and total <= 1e-9
    report(1, ok, f"max step deviation {step:.3g} / max|U| (<= 1e-12), cumulative {total:.3g} (<= 1e-9)")
    assert ok


def test_criterion_2_invariants(report):
    failed = []
    for name in NAMES:
        spec = preset(name)
        checks = run_invariants(spec, make_grid(spec, 0.004, 0.25), 0.25).checks()
        failed += [f"{name}:{k}={checks[k][1]:.3g}" for k in INVARIANTS if not checks[k][0]]
    report(2, not failed, "invariants hold on ex1-ex6 at dx=0.004" if not failed else ", ".join(failed))
    assert not failed


def test_criterion_3_entropy_inequality(report):
    spec = preset("ex1")
    worst, excess = entropy_run(spec, make_grid(spec, 0.01, 0.25), 0.25, n_samples=50, n_k=16)
    ok = excess <= 0.0
    report(3, ok, f"max residual {worst:.3g}, excess over round-off allowance {excess:.3g}")
    assert ok


def test_criterion_4_convergence_rates(report):
    table = convergence_table(preset("ex1"), [0.02, 0.01, 0.005, 0.0025], 0.000625, (0.1, 0.25))
    rates = table.all_rates()
    low, high, mean = min(rates), max(rates), float(np.mean(rates))
    ok = low >= 0.6 and high <= 1.6 and mean >= 0.8
    report(4, ok, f"rates in [{low:.3f}, {high:.3f}] (need [0.6, 1.6]), mean {mean:.3f} (need >= 0.8)")
    print(table.to_csv())
    assert ok


@pytest.mark.slow
def test_criterion_5_table_spot_check(report):
    tab = convergence_table(preset("ex1"), [0.001], 0.0002, (0.1, 0.25))
    e_v1, e_u2 = tab.e_v[0][0], tab.e_u[0][1]
    ok = abs(e_u2 - 0.032) <= 0.25 * 0.032 and abs(e_v1 - 0.008) <= 0.25 * 0.008
    report(5, ok, f"e_u(t2) = {e_u2:.4g} (0.032 +- 25%), e_v(t1) = {e_v1:.4g} (0.008 +- 25%)")
    assert ok


def test_criterion_6_stationary_aggregate(report):
    spec = preset("ex1")
    grid = make_grid(spec, 0.001, 0.5)
    early, late = snapshots(spec, grid, (0.45, 0.5))
    change = grid.dx * float(np.abs(late.U - early.U).sum())
    pieces = support_intervals(late.U, grid)
    ok = change <= 1e-2 * spec.c0 and len(pieces) == 1
    report(6, ok, f"L1 change 0.45->0.5 {change:.3g} (<= {1e-2 * spec.c0:g}), {len(pieces)} support interval(s)")
    assert ok


def test_criterion_7_admissible_jump(report):
    spec = preset("ex3")
    grid = make_grid(spec, 0.001, 0.5)
    (state,) = snapshots(spec, grid, (0.5,))
    jumps = detect_jumps(state.U, grid, spec)

    def near(u, target):
        return abs(u - target) <= 0.05 * target

    hits = [j for j in jumps if j.flat and near(min(j.u_minus, j.u_plus), 5) and near(max(j.u_minus, j.u_plus), 10)]
    ok = bool(hits)
    found = ", ".join(f"{j.u_minus:.3g}->{j.u_plus:.3g}@{j.x:.3f}" for j in jumps) or "none"
    # informational: what a lower relative threshold sees
    low = ", ".join(f"{j.u_minus:.3g}->{j.u_plus:.3g} flat={j.flat}" for j in detect_jumps(state.U, grid, spec, 0.2))
    report(7, ok, f"max U {state.U.max():.3g}; jumps flagged: {found} (threshold 0.2 finds: {low or 'none'})")
    assert ok


def test_criterion_8_two_peaks(report):
    spec = preset("ex6")
    grid = make_grid(spec, 0.002, 0.5)
    (state,) = snapshots(spec, grid, (0.5,))
    pieces = support_intervals(state.U, grid)
    ok = len(pieces) == 2 and all(abs(m - 1.0) <= 0.05 for *_, m in pieces)
    desc = ", ".join(f"[{a:.3f}, {b:.3f}] mass {m:.4f}" for a, b, m in pieces)
    report(8, ok, f"{len(pieces)} support interval(s): {desc}")
    assert ok


def test_criterion_9_cfl_audit(report):
    worst = 0.0
    for name in NAMES:
        spec = preset(name)
        number, limit = cfl_audit(spec, make_grid(spec, 0.004, 0.25))
        assert limit == pytest.approx(0.95)
        worst = max(worst, number)
    ok = worst <= 0.95
    report(9, ok, f"largest 2 lam max|Phi'| + 4 mu a_max = {worst:.4f} (<= 0.95)")
    assert ok

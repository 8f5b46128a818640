"""Invariant monitors, error norms, convergence tables and jump checks."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, SolverState, initial_state, make_grid
from .model import ConfigurationError, ProblemSpec
from .scheme import CflPolicy, advance, u_step, validate_cfl

WORKERS_ENV = "AGG1D_WORKERS"


def mass(U, grid: GridSpec) -> float:
    return float(grid.dx * np.sum(U))


def total_variation(W) -> float:
    return float(np.sum(np.abs(np.diff(np.asarray(W, dtype=float)))))


# --- discrete cell entropy inequality ----------------------------------------


def _mean_slopes(V, spec):
    """Mean slopes of Phi_+ and Phi_- over each cell, zero on flat cells.

    Below a spacing of 1e-6 (1 + C0) the difference quotient is dominated by
    round-off, so the limit max(0, Phi') or min(0, Phi') at the midpoint is
    used instead.
    """
    from .model import phi_minus, phi_plus

    dV = np.diff(V)
    tiny = np.abs(dV) <= 1e-6 * (1.0 + spec.c0)
    safe = np.where(tiny, 1.0, dV)
    P = np.diff(phi_plus(spec.flux, V)) / safe
    M = np.diff(phi_minus(spec.flux, V)) / safe
    if tiny.any():
        d = spec.flux.phi_prime(np.clip(0.5 * (V[1:] + V[:-1]), 0.0, spec.c0))
        P = np.where(tiny, np.maximum(d, 0.0), P)
        M = np.where(tiny, np.minimum(d, 0.0), M)
    flat = dV == 0
    P[flat] = 0.0
    M[flat] = 0.0
    return P, M


def entropy_residuals(U, U_next, V, spec: ProblemSpec, grid: GridSpec, dt: float, k_values) -> np.ndarray:
    """Left-hand side of the cell entropy inequality for every (k, cell).

    With P, M the mean slopes of Phi_+ and Phi_- over a cell and the
    numerical entropy flux at node j

        Gt_j = |U_{j-1}-k| P_{j-1} + |U_j-k| M_j - (|A(U_j)-A(k)| - |A(U_{j-1})-A(k)|)/dx,

    the residual of cell c is

        |U'_c-k| - |U_c-k| + lam (Gt_{c+1} - Gt_c)
            + sgn(U'_c-k) lam k [(P_c - P_{c-1}) + (M_{c+1} - M_c)],

    which the scheme keeps <= 0 under the CFL condition.
    """
    U = np.asarray(U, dtype=float)
    U_next = np.asarray(U_next, dtype=float)
    lam = dt / grid.dx
    P, M = _mean_slopes(np.asarray(V, dtype=float), spec)
    Ue = np.concatenate([[0.0], U, [0.0]])
    Pe = np.concatenate([[0.0], P, [0.0]])
    Me = np.concatenate([[0.0], M, [0.0]])
    AU = spec.diffusion.A(Ue)
    k = np.asarray(k_values, dtype=float)[:, None]
    Ak = spec.diffusion.A(k)
    # node j = 0..J sits between extended cells j and j+1
    Gt = (
        np.abs(Ue[:-1] - k) * Pe[:-1]
        + np.abs(Ue[1:] - k) * Me[1:]
        - (np.abs(AU[1:] - Ak) - np.abs(AU[:-1] - Ak)) / grid.dx
    )
    dP = Pe[1:-1] - Pe[:-2]
    dM = Me[2:] - Me[1:-1]
    return (
        np.abs(U_next - k)
        - np.abs(U - k)
        + lam * (Gt[:, 1:] - Gt[:, :-1])
        + np.sign(U_next - k) * lam * k * (dP + dM)
    )


def entropy_tolerance(k_values, U) -> np.ndarray:
    k = np.abs(np.asarray(k_values, dtype=float))
    return 1e-12 + 1e-12 * (1.0 + k + np.max(np.abs(U)))


def entropy_residual(U, U_next, V, spec, grid, policy=None, k_samples=(0.0,), dt=None) -> float:
    """Max over cells and k of the cell entropy residual (should be <= ~0).

    Raises ValueError if U_next is not one u-scheme step from (U, V).
    """
    dt = validate_cfl(grid, spec, policy).dt if dt is None else dt
    expected = u_step(U, V, grid, spec, dt=dt)
    scale = max(1.0, float(np.max(np.abs(U))))
    if np.max(np.abs(expected - np.asarray(U_next))) > 1e-9 * scale:
        raise ValueError("U_next is not one scheme step from U")
    return float(np.max(entropy_residuals(U, U_next, V, spec, grid, dt, k_samples)))


# --- jumps -------------------------------------------------------------------


@dataclass(frozen=True)
class JumpRecord:
    x: float
    u_minus: float
    u_plus: float
    flat: bool
    admissible: bool


def detect_jumps(U, grid: GridSpec, spec: ProblemSpec, threshold: float = 0.5) -> list[JumpRecord]:
    """Flag interfaces with |U[j+1]-U[j]| > threshold * max(1, max|U|).

    A flagged jump is reported flat (and therefore admissible) when ``a``
    vanishes at 21 samples of the open interval between the one-sided values.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    U = np.asarray(U, dtype=float)
    scale = threshold * max(1.0, float(np.max(np.abs(U))))
    out = []
    for j in np.flatnonzero(np.abs(np.diff(U)) > scale):
        um, up = float(U[j]), float(U[j + 1])
        lo, hi = min(um, up), max(um, up)
        s = np.linspace(lo, hi, 23)[1:-1]
        flat = bool(np.all(spec.diffusion.a(s) <= 1e-12))
        out.append(JumpRecord(float(grid.node_x(j + 1)), um, up, flat, flat))
    return out


def support_intervals(U, grid: GridSpec, floor: float = 1e-6) -> list[tuple[float, float, float]]:
    """Maximal runs of cells with U > floor, as (x_left, x_right, mass)."""
    U = np.asarray(U, dtype=float)
    on = np.concatenate([[False], U > floor, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(on))
    return [
        (float(grid.node_x(a)), float(grid.node_x(b)), float(grid.dx * U[a:b].sum()))
        for a, b in zip(edges[::2], edges[1::2])
    ]


# --- errors and convergence -----------------------------------------------------


def _nesting(coarse: GridSpec, fine: GridSpec) -> tuple[int, int]:
    r = coarse.dx / fine.dx
    o = (coarse.x_min - fine.x_min) / fine.dx
    if abs(r - round(r)) > 1e-9 * r or round(r) < 1 or abs(o - round(o)) > 1e-6:
        raise ConfigurationError(f"grids dx={coarse.dx} and dx={fine.dx} are not nested")
    return int(round(r)), int(round(o))


def _order(a, ga, b, gb):
    return (a, ga, b, gb) if ga.dx >= gb.dx * (1 - 1e-12) else (b, gb, a, ga)


def restrict_u(U_fine, fine: GridSpec, coarse: GridSpec) -> np.ndarray:
    """Average fine cells over each coarse cell; u = 0 outside the fine window."""
    r, o = _nesting(coarse, fine)
    ext = np.zeros(coarse.J * r)
    lo = max(0, -o)
    hi = min(coarse.J * r, fine.J - o)
    if hi > lo:
        ext[lo:hi] = np.asarray(U_fine)[o + lo : o + hi]
    return ext.reshape(coarse.J, r).mean(axis=1)


def sample_v(V_fine, fine: GridSpec, coarse: GridSpec) -> np.ndarray:
    """Fine V at the coarse nodes; constant extension outside the fine window."""
    r, o = _nesting(coarse, fine)
    idx = o + r * np.arange(coarse.J + 1)
    V_fine = np.asarray(V_fine)
    return V_fine[np.clip(idx, 0, fine.J)]


def l1_error_u(U_a, U_b, grids: tuple[GridSpec, GridSpec]) -> float:
    """dx_coarse * sum |U_coarse - restricted U_fine|."""
    Uc, gc, Uf, gf = _order(U_a, grids[0], U_b, grids[1])
    return float(gc.dx * np.sum(np.abs(np.asarray(Uc) - restrict_u(Uf, gf, gc))))


def linf_error_v(V_a, V_b, grids: tuple[GridSpec, GridSpec]) -> float:
    """max over coarse nodes |V_coarse - V_fine|."""
    Vc, gc, Vf, gf = _order(V_a, grids[0], V_b, grids[1])
    return float(np.max(np.abs(np.asarray(Vc) - sample_v(Vf, gf, gc))))


def rate(e_prev, e_cur, dx_prev, dx_cur) -> float | None:
    if dx_prev == dx_cur or not (e_prev > 0 and e_cur > 0):
        return None
    return math.log(e_prev / e_cur) / math.log(dx_prev / dx_cur)


@dataclass
class ErrorTable:
    """Rows per dx: L-infinity errors of V and L1 errors of U at each time."""

    dx: list[float]
    times: list[float]
    e_v: list[list[float]]
    e_u: list[list[float]]
    rates_v: list[list[float | None]] = field(init=False)
    rates_u: list[list[float | None]] = field(init=False)

    def __post_init__(self):
        self.rates_v = self._rates(self.e_v)
        self.rates_u = self._rates(self.e_u)

    def _rates(self, err):
        out = [[None] * len(self.times)]
        for i in range(1, len(self.dx)):
            out.append([rate(err[i - 1][k], err[i][k], self.dx[i - 1], self.dx[i]) for k in range(len(self.times))])
        return out

    def header(self) -> list[str]:
        cols = ["dx"]
        for name in ("v", "u"):
            for k in range(len(self.times)):
                cols += [f"e_{name}_t{k + 1}", f"rate_{name}_t{k + 1}"]
        return cols

    def rows(self):
        for i, dx in enumerate(self.dx):
            row = [dx]
            for err, rates in ((self.e_v, self.rates_v), (self.e_u, self.rates_u)):
                for k in range(len(self.times)):
                    row += [err[i][k], rates[i][k]]
            yield row

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for row in self.rows():
            w.writerow(["" if x is None else fmt(x) for x in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def all_rates(self) -> list[float]:
        return [r for rows in (self.rates_v, self.rates_u) for row in rows for r in row if r is not None]


def fmt(x: float) -> str:
    """Shortest round-trip text, with a trailing ".0" dropped."""
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def snapshots(spec: ProblemSpec, grid: GridSpec, times, policy: CflPolicy | None = None) -> list[SolverState]:
    """Solver states at each of the (sorted) times."""
    policy = policy or CflPolicy.for_problem(spec)
    state = initial_state(spec, grid)
    out = []
    for t in times:
        state = advance(state, t, grid, spec, policy)
        out.append(state)
    return out


def _solve(args):
    spec, grid, times, policy = args
    return snapshots(spec, grid, times, policy)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def convergence_table(
    spec: ProblemSpec,
    dx_list,
    ref_dx: float,
    times=(0.1, 0.25),
    mu: float = 0.1,
    policy: CflPolicy | None = None,
    reference: list[SolverState] | None = None,
) -> ErrorTable:
    """Errors of each resolution against a fine reference run at the given times.

    All grids share one window snapped to multiples of the coarsest dx, so
    every dx in the list must be an integer multiple of ``ref_dx``.
    """
    times = sorted(float(t) for t in times)
    dx_list = [float(d) for d in dx_list]
    policy = policy or CflPolicy.for_problem(spec)
    align = max(dx_list + [ref_dx])
    t_end = times[-1]
    ref_grid = make_grid(spec, ref_dx, t_end, mu, align=align)
    grids = [make_grid(spec, dx, t_end, mu, align=align) for dx in dx_list]
    for g in grids:
        _nesting(g, ref_grid)
    jobs = [(spec, g, times, policy) for g in grids]
    if reference is None:
        jobs.append((spec, ref_grid, times, policy))
    n = worker_count()
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_solve, jobs))
    else:
        results = [_solve(j) for j in jobs]
    ref = reference if reference is not None else results.pop()
    e_v, e_u = [], []
    for g, snaps in zip(grids, results):
        e_v.append([linf_error_v(s.V, r.V, (g, ref_grid)) for s, r in zip(snaps, ref)])
        e_u.append([l1_error_u(s.U, r.U, (g, ref_grid)) for s, r in zip(snaps, ref)])
    return ErrorTable(dx_list, times, e_v, e_u)


# --- invariant suite -------------------------------------------------------------


@dataclass(frozen=True)
class RunInvariants:
    """Extremes of the per-step invariant records of one run."""

    c0: float
    min_dv: float
    min_v: float
    max_v: float
    tv_dev: float
    mass_drift: float
    l1_increase: float
    max_u: float
    linf_bound: float

    def checks(self) -> dict[str, tuple[bool, float, float]]:
        """name -> (passed, observed value, tolerance)."""
        c0 = self.c0
        return {
            "monotonicity": (self.min_dv >= -1e-13 * c0, self.min_dv, -1e-13 * c0),
            "range_low": (self.min_v >= -1e-12, self.min_v, -1e-12),
            "range_high": (self.max_v <= c0 + 1e-12, self.max_v - c0, 1e-12),
            "tv_identity": (self.tv_dev <= 1e-10, self.tv_dev, 1e-10),
            "mass": (self.mass_drift <= 1e-10 * c0, self.mass_drift, 1e-10 * c0),
            "l1_time_increment": (self.l1_increase <= 1e-12, self.l1_increase, 1e-12),
            "linf_bound": (self.max_u <= self.linf_bound, self.max_u, self.linf_bound),
        }


def linf_bound(spec: ProblemSpec, first_increment: float, lam: float) -> float:
    """Largest u with A(u) <= max|h| + first-step increment / lam + |Phi(0)|."""
    from .model import phi_minus, phi_plus

    phi0 = abs(spec.flux.phi(0.0))
    h_max = phi0 + phi_plus(spec.flux, spec.c0) + abs(phi_minus(spec.flux, spec.c0))
    level = h_max + first_increment / lam + phi0 + 1e-6
    slopes = spec.diffusion._slopes
    if slopes[-1] <= 0:
        return math.inf
    u = np.array([b[0] for b in spec.diffusion.breakpoints])
    A = spec.diffusion.A(u)
    if level >= A[-1]:
        return float(u[-1] + (level - A[-1]) / slopes[-1])
    i = int(np.searchsorted(A, level, side="right"))
    return float(u[i - 1] + (level - A[i - 1]) / slopes[i - 1]) if slopes[i - 1] > 0 else float(u[i])


def run_invariants(
    spec: ProblemSpec,
    grid: GridSpec,
    t_end: float,
    policy: CflPolicy | None = None,
    initial: SolverState | None = None,
) -> RunInvariants:
    """March to t_end with per-step monitoring of the monotone-scheme invariants.

    The final step is shortened to land on t_end and is checked with the
    others except for the L1 increment trend, which only compares steps of
    equal length.
    """
    from .scheme import monitor_run, step_plan, v_step

    ts = validate_cfl(grid, spec, policy)
    n, last = step_plan(0.0, t_end, ts.dt)
    state = initial if initial is not None else initial_state(spec, grid)
    c0 = state.c0
    if n == 0:
        U = np.diff(state.V) / grid.dx
        dV = np.diff(state.V)
        return RunInvariants(c0, float(dV.min()), float(state.V.min()), float(state.V.max()),
                             abs(total_variation(state.V) - c0), 0.0, 0.0, float(np.abs(U).max()), math.inf)
    full = n - 1 if last < ts.dt else n
    V, rec = monitor_run(state.V, grid, spec, full, ts.dt)
    if full < n:
        W = v_step(V, grid, spec, dt=last)
        dW = np.diff(W)
        tail = np.array([[dW.min(), W.min(), W.max(), np.abs(dW).sum(), np.abs(W - V).sum(), np.abs(dW).max() / grid.dx]])
        rec = np.vstack([rec, tail]) if len(rec) else tail
        V = W
    U = np.diff(V) / grid.dx
    incr = rec[:full, 4]
    l1_increase = float(np.max(np.diff(incr))) if len(incr) > 1 else 0.0
    bound = linf_bound(spec, float(incr[0]) if len(incr) else 0.0, ts.dt / grid.dx)
    return RunInvariants(
        c0=c0,
        min_dv=float(rec[:, 0].min()),
        min_v=float(rec[:, 1].min()),
        max_v=float(rec[:, 2].max()),
        tv_dev=float(np.max(np.abs(rec[:, 3] - c0))),
        mass_drift=abs(mass(U, grid) - c0),
        l1_increase=max(l1_increase, 0.0),
        max_u=float(rec[:, 5].max()),
        linf_bound=bound,
    )


# --- check suite ----------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float


def equivalence_run(spec: ProblemSpec, grid: GridSpec, t_end: float, policy: CflPolicy | None = None,
                    initial: SolverState | None = None) -> tuple[float, float]:
    """Compare the u-scheme with the differenced v-scheme over a whole run.

    Returns (max over steps of |u_step(U, V) - S^-1 v_step(V)| / max|U|,
    max |U_u - U_v| at t_end) where U_u is marched by u_step alone.
    """
    from .grid import inverse_primitive, primitive
    from .scheme import step_plan, v_step

    ts = validate_cfl(grid, spec, policy)
    n, last = step_plan(0.0, t_end, ts.dt)
    state = initial if initial is not None else initial_state(spec, grid)
    V = state.V
    Uu = inverse_primitive(V, grid)
    worst = 0.0
    for k in range(n):
        dt = last if k == n - 1 else ts.dt
        U = inverse_primitive(V, grid)
        a = u_step(U, V, grid, spec, dt=dt)
        V = v_step(V, grid, spec, dt=dt)
        b = inverse_primitive(V, grid)
        worst = max(worst, float(np.max(np.abs(a - b))) / max(float(np.max(np.abs(U))), 1e-300))
        Uu = u_step(Uu, primitive(Uu, grid), grid, spec, dt=dt)
    return worst, float(np.max(np.abs(Uu - inverse_primitive(V, grid))))


def entropy_run(spec: ProblemSpec, grid: GridSpec, t_end: float, n_samples: int = 50, n_k: int = 16,
                seed: int = 0, policy: CflPolicy | None = None, initial: SolverState | None = None) -> tuple[float, float]:
    """Cell entropy residuals at randomly chosen steps of a run.

    At each sampled step k takes n_k uniform values in [0, 1.5 max U].
    Returns (max residual, max of residual minus its round-off allowance).
    """
    from . import _kernels as K
    from .scheme import _raise_status, step_plan

    ts = validate_cfl(grid, spec, policy)
    n, _ = step_plan(0.0, t_end, ts.dt)
    state = initial if initial is not None else initial_state(spec, grid)
    if n <= 1:
        return 0.0, -math.inf
    rng = np.random.default_rng(seed)
    steps = np.sort(rng.choice(n - 1, size=min(n_samples, n - 1), replace=False))
    V = np.ascontiguousarray(state.V)
    done = 0
    worst, excess = -math.inf, -math.inf
    for s in steps:
        if s > done:
            V, _, status, _ = K.march_kernel(V, int(s - done), ts.dt, ts.dt, grid.dx, spec.flux.packed,
                                             spec.diffusion.packed, 1.0)
            _raise_status(status, int(s))
            done = int(s)
        U = np.diff(V) / grid.dx
        U1 = u_step(U, V, grid, spec, dt=ts.dt)
        ks = np.linspace(0.0, 1.5 * float(np.max(U)), n_k)
        R = entropy_residuals(U, U1, V, spec, grid, ts.dt, ks).max(axis=1)
        worst = max(worst, float(R.max()))
        excess = max(excess, float(np.max(R - entropy_tolerance(ks, U))))
    return worst, excess


def cfl_audit(spec: ProblemSpec, grid: GridSpec, policy: CflPolicy | None = None) -> tuple[float, float]:
    """(2 lam max|Phi'| + 4 mu a_max at the accepted dt, 1 - epsilon)."""
    policy = policy or CflPolicy.for_problem(spec)
    ts = validate_cfl(grid, spec, policy)
    return policy.number(ts.dt, grid.dx), 1.0 - policy.epsilon


def splitting_defect(spec: ProblemSpec, samples: int = 2001) -> float:
    """Largest violation of Phi_+ + Phi_- = Phi - Phi(0) and of the monotonicity of Phi_+/-."""
    from .model import phi_minus, phi_plus

    v = np.linspace(0.0, spec.c0, samples)
    p, m = phi_plus(spec.flux, v), phi_minus(spec.flux, v)
    ident = np.max(np.abs(p + m - (spec.flux.phi(v) - spec.flux.phi(0.0))))
    mono = max(0.0, -float(np.min(np.diff(p))), float(np.max(np.diff(m))))
    return float(max(ident, mono))


def check_suite(spec: ProblemSpec, grid: GridSpec, t_end: float, seed: int = 0,
                policy: CflPolicy | None = None, initial: SolverState | None = None) -> list[CheckResult]:
    """Every invariant check of the solver on one run; see RunInvariants.checks."""
    policy = policy or CflPolicy.for_problem(spec)
    out = [CheckResult(k, *v) for k, v in run_invariants(spec, grid, t_end, policy, initial).checks().items()]
    dev, cum = equivalence_run(spec, grid, t_end, policy, initial)
    out.append(CheckResult("scheme_equivalence_step", dev <= 1e-12, dev, 1e-12))
    out.append(CheckResult("scheme_equivalence_cumulative", cum <= 1e-9, cum, 1e-9))
    worst, excess = entropy_run(spec, grid, t_end, seed=seed, policy=policy, initial=initial)
    out.append(CheckResult("entropy_residual", excess <= 0.0, worst, 1e-12))
    number, bound = cfl_audit(spec, grid, policy)
    out.append(CheckResult("cfl", number <= bound + 1e-12, number, bound))
    defect = splitting_defect(spec)
    tol = 1e-12 * (1.0 + abs(spec.flux.phi(0.0)) + spec.c0 * spec.flux.max_speed())
    out.append(CheckResult("flux_splitting", defect <= tol, defect, tol))
    return out

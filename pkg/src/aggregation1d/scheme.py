"""Explicit marching of the primitive V with the Engquist-Osher flux.

The density U is never marched directly by :func:`advance`; it is recovered
from V by divided differences at output times.  :func:`u_step` provides the
equivalent update written on U for cross-checking.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from . import _kernels as K
from .grid import DomainTooSmallError, GridSpec, SolverState, inverse_primitive
from .model import FluxModel, ProblemSpec, phi_minus, phi_plus

log = logging.getLogger(__name__)

GUARD_TOL = 1e-12


class NumericalFailure(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class CflPolicy:
    """Strengthened CFL: 2 lam max|Phi'| + 4 mu a_max <= 1 - epsilon."""

    epsilon: float = 0.05
    max_phi_prime: float = 0.0
    a_max: float = 0.0

    @classmethod
    def for_problem(cls, spec: ProblemSpec, epsilon: float = 0.05) -> "CflPolicy":
        if not 0 <= epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        return cls(epsilon, spec.flux.max_speed(), spec.diffusion.a_max)

    def number(self, dt: float, dx: float) -> float:
        return 2 * dt / dx * self.max_phi_prime + 4 * dt / dx**2 * self.a_max


@dataclass(frozen=True)
class TimeStep:
    dt: float
    cfl: float
    adjusted: bool
    mu_effective: float


@dataclass(frozen=True)
class StepReport:
    n: int
    t: float
    dt: float
    max_dv: float
    entropy_residual: float | None = None


def validate_cfl(grid: GridSpec, spec: ProblemSpec, policy: CflPolicy | None = None) -> TimeStep:
    """Accept dt = mu dx^2 if the strengthened CFL holds, else shrink it."""
    policy = policy or CflPolicy.for_problem(spec)
    dx = grid.dx
    dt = grid.mu * dx * dx
    bound = 1.0 - policy.epsilon
    rate = 2 * policy.max_phi_prime / dx + 4 * policy.a_max / dx**2
    if rate == 0.0:
        log.warning("zero velocity and zero diffusion; dt capped at dx")
        dt_ok = min(dt, dx)
        return TimeStep(dt_ok, 0.0, dt_ok != dt, dt_ok / dx**2)
    adjusted = rate * dt > bound
    if adjusted:
        dt_new = bound / rate
        log.warning("CFL %.4g > %.4g at mu=%g; dt reduced %.3e -> %.3e", rate * dt, bound, grid.mu, dt, dt_new)
        dt = dt_new
    return TimeStep(dt, policy.number(dt, dx), adjusted, dt / dx**2)


def eo_flux(model: FluxModel, w, z):
    """Engquist-Osher flux h(w, z) = Phi(0) + Phi_+(w) + Phi_-(z)."""
    return model.phi(0.0) + phi_plus(model, w) + phi_minus(model, z)


def _check_v(V, spec):
    V = np.ascontiguousarray(V, dtype=float)
    if V.ndim != 1 or len(V) < 3:
        raise ValueError("V must be a 1-d array with at least 3 nodes")
    return V


def _resolve_dt(grid, spec, policy, dt):
    if dt is not None:
        return dt
    return validate_cfl(grid, spec, policy).dt


def v_step(V, grid: GridSpec, spec: ProblemSpec, policy: CflPolicy | None = None, dt: float | None = None) -> np.ndarray:
    """One marching step on the interior nodes; V[0] and V[J] stay fixed."""
    V = _check_v(V, spec)
    dt = _resolve_dt(grid, spec, policy, dt)
    out, status = K.v_step_kernel(V, dt / grid.dx, 1.0 / grid.dx, spec.flux.packed, spec.diffusion.packed)
    if status != K.OK:
        raise NumericalFailure("non-finite value in v_step")
    return out


def u_step(U, V, grid: GridSpec, spec: ProblemSpec, policy: CflPolicy | None = None, dt: float | None = None) -> np.ndarray:
    """U' = U - lam D+G + mu D^2 A(U) with G from flux differences of h on V."""
    dt = _resolve_dt(grid, spec, policy, dt)
    U = np.ascontiguousarray(U, dtype=float)
    V = _check_v(V, spec)
    if len(V) != len(U) + 1:
        raise ValueError("V must have one more entry than U")
    dx = grid.dx
    out = K.u_step_kernel(U, V, dt / dx, dt / dx**2, 1.0 / dx, spec.flux.packed, spec.diffusion.packed)
    if not np.all(np.isfinite(out)):
        raise NumericalFailure("non-finite value in u_step")
    return out


def step_plan(t0: float, t_target: float, dt: float) -> tuple[int, float]:
    """Number of steps and length of the last one to land exactly on t_target."""
    remaining = t_target - t0
    if remaining <= 0:
        return 0, 0.0
    n = max(1, math.ceil(remaining / dt - 1e-9))
    last = remaining - (n - 1) * dt
    if abs(last - dt) <= 1e-9 * dt:
        # a whole number of steps up to round-off: keep the step uniform
        last = dt
    return n, last


Hook = Callable[[StepReport, np.ndarray, "np.ndarray | None"], None]


def advance(
    state: SolverState,
    t_target: float,
    grid: GridSpec,
    spec: ProblemSpec,
    policy: CflPolicy | None = None,
    hooks: Iterable[Hook] = (),
    snapshot_every: int | None = None,
    guard_tol: float = GUARD_TOL,
) -> SolverState:
    """March V from state.t to t_target; U is rebuilt once at the end.

    Without hooks the whole march runs inside one compiled loop.  With hooks,
    each hook is called after every step with a :class:`StepReport`, a
    read-only view of V and, every ``snapshot_every`` steps, U.
    """
    if t_target < state.t - 1e-15:
        raise ValueError(f"t_target {t_target} is before current time {state.t}")
    hooks = list(hooks)
    ts = validate_cfl(grid, spec, policy)
    n_steps, dt_last = step_plan(state.t, t_target, ts.dt)
    if n_steps == 0:
        return state
    fx, df = spec.flux.packed, spec.diffusion.packed
    V = np.ascontiguousarray(state.V, dtype=float)
    if not hooks:
        V, done, status, _ = K.march_kernel(V, n_steps, ts.dt, dt_last, grid.dx, fx, df, guard_tol)
        _raise_status(status, state.n + done)
    else:
        inv_dx = 1.0 / grid.dx
        for k in range(n_steps):
            dt = dt_last if k == n_steps - 1 else ts.dt
            W, status = K.v_step_kernel(V, dt * inv_dx, inv_dx, fx, df)
            _raise_status(status, state.n + k + 1)
            _guard(W, guard_tol, state.n + k + 1, k + 1)
            n = state.n + k + 1
            t = t_target if k == n_steps - 1 else state.t + (k + 1) * ts.dt
            report = StepReport(n, t, dt, float(np.max(np.abs(W - V))))
            V = W
            view = V.view()
            view.flags.writeable = False
            U = None
            if snapshot_every and n % snapshot_every == 0:
                U = inverse_primitive(V, grid)
            for hook in hooks:
                hook(report, view, U)
    return SolverState(V=V, t=float(t_target), n=state.n + n_steps, U=inverse_primitive(V, grid))


def _guard(V, tol, n, steps):
    limit = K.guard_tolerance(abs(V[-1] - V[0]), tol, steps)
    if V[1] - V[0] > limit:
        raise DomainTooSmallError(f"mass reached the left boundary cell at step {n}")
    if V[-1] - V[-2] > limit:
        raise DomainTooSmallError(f"mass reached the right boundary cell at step {n}")


def _raise_status(status, n):
    if status == K.NONFINITE:
        raise NumericalFailure("non-finite value while marching", n)
    if status == K.LEFT_BOUNDARY:
        raise DomainTooSmallError(f"mass reached the left boundary cell at step {n}")
    if status == K.RIGHT_BOUNDARY:
        raise DomainTooSmallError(f"mass reached the right boundary cell at step {n}")


def monitor_run(V, grid: GridSpec, spec: ProblemSpec, n_steps: int, dt: float, guard_tol: float = GUARD_TOL):
    """March n_steps constant steps, returning (V, per-step records).

    Record columns: min D+V, min V, max V, TV(V), sum|V^{n+1}-V^n|, max|U|.
    """
    V = np.ascontiguousarray(V, dtype=float)
    V, rec, status = K.monitor_kernel(V, n_steps, dt, grid.dx, spec.flux.packed, spec.diffusion.packed, guard_tol)
    _raise_status(status, len(rec))
    return V, rec

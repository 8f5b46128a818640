"""Uniform grid, initial cell averages and the prefix-sum transforms U <-> V."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ConfigurationError, ProblemSpec

PAD_FRACTION = 0.25
TAIL_SIGMAS = 10.0


class DomainTooSmallError(RuntimeError):
    """Mass reached the first or last cell of the truncated window."""


@dataclass(frozen=True)
class GridSpec:
    """Nodes x_j = x_min + j dx, j = 0..J; cell j is [x_j, x_{j+1})."""

    dx: float
    x_min: float
    x_max: float
    mu: float = 0.1

    def __post_init__(self):
        if not (self.dx > 0 and math.isfinite(self.dx)):
            raise ConfigurationError(f"dx must be positive, got {self.dx}")
        if not self.mu > 0:
            raise ConfigurationError(f"mu must be positive, got {self.mu}")
        ratio = (self.x_max - self.x_min) / self.dx
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ConfigurationError("window length is not an integer multiple of dx")
        if round(ratio) < 4:
            raise ConfigurationError("grid needs at least 4 cells")

    @property
    def J(self) -> int:
        return int(round((self.x_max - self.x_min) / self.dx))

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.J + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + self.dx * (np.arange(self.J) + 0.5)

    def node_x(self, j):
        return self.x_min + self.dx * np.asarray(j)

    def cell_center(self, j):
        return self.x_min + self.dx * (np.asarray(j) + 0.5)


def window_for(spec: ProblemSpec, t_end: float, dx: float = 0.0) -> tuple[float, float]:
    """Support padded by a quarter of its width, the distance t_end*max|Phi'|
    and a margin for the diffusive tail running ahead of the convective front.

    The tail margin is TAIL_SIGMAS standard deviations of a Gaussian with
    diffusivity c dx / 2 + a(0+) (upwind numerical viscosity plus physical
    diffusion at low density), enough to keep boundary cells below the
    1e-12 relative mass guard.
    """
    left, right = spec.initial.support
    t = max(t_end, 0.0)
    c = spec.flux.max_speed()
    diffusivity = 0.5 * c * dx + float(spec.diffusion.a(0.0))
    tail = TAIL_SIGMAS * math.sqrt(2.0 * diffusivity * t)
    pad = PAD_FRACTION * (right - left) + t * c + tail
    return left - pad, right + pad


def make_grid(spec: ProblemSpec, dx: float, t_end: float, mu: float = 0.1, align: float | None = None) -> GridSpec:
    """Grid on the padded window with end points snapped to multiples of ``align``.

    ``align`` defaults to ``dx``.  Grids built with a common ``align`` that is
    an integer multiple of each of their spacings are nested.
    """
    if not dx > 0:
        raise ConfigurationError(f"dx must be positive, got {dx}")
    step = dx if align is None else align
    lo, hi = window_for(spec, t_end, max(dx, step))
    k0 = math.floor(lo / step + 1e-9)
    k1 = math.ceil(hi / step - 1e-9)
    n_cells = int(round((k1 - k0) * step / dx))
    x_min = k0 * step
    return GridSpec(dx=dx, x_min=x_min, x_max=x_min + n_cells * dx, mu=mu)


@dataclass
class SolverState:
    V: np.ndarray
    t: float = 0.0
    n: int = 0
    U: np.ndarray | None = None

    @property
    def c0(self) -> float:
        return float(self.V[-1])


def discretize_initial(spec: ProblemSpec, grid: GridSpec) -> np.ndarray:
    """Exact cell averages of the piecewise-constant initial datum."""
    left, right = spec.initial.support
    if left < grid.x_min or right > grid.x_max:
        raise ConfigurationError(
            f"support [{left}, {right}] not inside window [{grid.x_min}, {grid.x_max}]"
        )
    edges = grid.nodes
    U = np.zeros(grid.J)
    for xl, xr, c in spec.initial.pieces:
        overlap = np.minimum(edges[1:], xr) - np.maximum(edges[:-1], xl)
        U += c * np.clip(overlap, 0.0, None)
    return U / grid.dx


def primitive(U: np.ndarray, grid: GridSpec) -> np.ndarray:
    """V[0] = 0, V[j+1] = V[j] + dx U[j] (sequential prefix sum)."""
    V = np.empty(len(U) + 1)
    V[0] = 0.0
    np.cumsum(grid.dx * np.asarray(U, dtype=float), out=V[1:])
    return V


def inverse_primitive(V: np.ndarray, grid: GridSpec) -> np.ndarray:
    """U[j] = (V[j+1] - V[j]) / dx."""
    return np.diff(np.asarray(V, dtype=float)) / grid.dx


def initial_state(spec: ProblemSpec, grid: GridSpec) -> SolverState:
    U0 = discretize_initial(spec, grid)
    return SolverState(V=primitive(U0, grid), t=0.0, n=0, U=U0)

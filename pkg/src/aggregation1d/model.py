"""Continuous problem data: flux potential, integrated diffusion, initial datum.

The flux potential ``Phi`` is stored as a list of analytic pieces plus the
ordered critical points of ``Phi'`` on ``[0, C0]``.  The increasing and
decreasing parts ``Phi_+`` and ``Phi_-`` are evaluated exactly from that
segment structure; no quadrature is involved outside the tests.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigurationError(ValueError):
    """Problem, grid or run parameters violate a model invariant."""


_KIND_CODES = {"power": K.POWER, "cosine": K.COSINE, "polynomial": K.POLYNOMIAL}


@dataclass(frozen=True)
class FluxPiece:
    """One analytic branch of Phi, valid for ``v >= start`` up to the next piece.

    ``power``: coef * (v - shift)**exponent + offset
    ``cosine``: amplitude * cos(frequency * v + phase) + offset
    ``polynomial``: sum_k coeffs[k] * v**k (at most 10 coefficients)
    """

    kind: str
    params: tuple[float, ...]
    start: float = -math.inf

    def packed(self) -> np.ndarray:
        if self.kind not in _KIND_CODES:
            raise ConfigurationError(f"unknown flux piece kind {self.kind!r}")
        if len(self.params) > K.NPAR:
            raise ConfigurationError(f"at most {K.NPAR} parameters per flux piece")
        p = np.zeros(K.NPAR)
        p[: len(self.params)] = self.params
        return p


def power(coef, shift, exponent, offset=0.0, start=-math.inf):
    return FluxPiece("power", (coef, shift, exponent, offset), start)


def cosine(amplitude, frequency, offset=0.0, phase=0.0, start=-math.inf):
    return FluxPiece("cosine", (amplitude, frequency, phase, offset), start)


def polynomial(coeffs, start=-math.inf):
    return FluxPiece("polynomial", tuple(coeffs), start)


@dataclass(frozen=True)
class CriticalPoint:
    v: float
    kind: str  # "max" or "min"


@dataclass(frozen=True)
class FluxModel:
    """Flux potential Phi on the range [0, C0].

    ``critical_points`` must list every point of [0, C0] where Phi' changes
    sign (end points may be listed too).  Construction validates the list
    against sampled signs of Phi' and raises :class:`ConfigurationError` on
    any mismatch.
    """

    pieces: tuple[FluxPiece, ...]
    critical_points: tuple[CriticalPoint, ...]
    c0: float
    packed: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.pieces:
            raise ConfigurationError("flux needs at least one piece")
        if not self.c0 > 0:
            raise ConfigurationError("flux range [0, C0] needs C0 > 0")
        starts = [p.start for p in self.pieces]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigurationError("flux pieces must have increasing start points")
        snap = 1e-9 * (1.0 + self.c0)
        cps = []
        for c in sorted(self.critical_points, key=lambda c: c.v):
            if abs(c.v) <= snap:
                c = CriticalPoint(0.0, c.kind)
            elif abs(c.v - self.c0) <= snap:
                c = CriticalPoint(float(self.c0), c.kind)
            cps.append(c)
        object.__setattr__(self, "critical_points", tuple(cps))
        pstart = [-np.inf] + starts[1:]
        pkind = [_KIND_CODES.get(p.kind, -1) for p in self.pieces]
        ppar = [p.packed() for p in self.pieces]
        # segment data are not read by phi/dphi
        draft = K.pack_flux(pstart, pkind, ppar, [0.0], [0], [0.0], [0.0], [0.0], float(self.c0), 0.0)

        def phi(v):
            return K.phi_scalar(v, draft)

        def dphi(v):
            return K.dphi_scalar(v, draft)

        bounds = [0.0] + [c.v for c in cps if 0.0 < c.v < self.c0] + [self.c0]
        for c in cps:
            if not (0.0 <= c.v <= self.c0):
                raise ConfigurationError(f"critical point {c.v} outside [0, {self.c0}]")
            if c.kind not in ("max", "min"):
                raise ConfigurationError(f"critical point kind must be 'max' or 'min', got {c.kind!r}")
        signs = [_segment_sign(dphi, lo, hi) for lo, hi in zip(bounds, bounds[1:])]
        _check_tags(cps, bounds, signs, self.c0)

        seg_phi = [phi(b) for b in bounds[:-1]]
        plus = np.zeros(len(signs))
        minus = np.zeros(len(signs))
        for i in range(1, len(signs)):
            rise = phi(bounds[i]) - phi(bounds[i - 1])
            plus[i] = plus[i - 1] + (rise if signs[i - 1] > 0 else 0.0)
            minus[i] = minus[i - 1] + (rise if signs[i - 1] < 0 else 0.0)
        packed = K.pack_flux(
            pstart, pkind, ppar, bounds[:-1], signs, plus, minus, seg_phi, float(self.c0), phi(0.0)
        )
        object.__setattr__(self, "packed", packed)

    @property
    def v_range(self) -> tuple[float, float]:
        return (0.0, self.c0)

    def phi(self, v):
        return _apply(K.phi_scalar, K.phi_array, v, self.packed)

    def phi_prime(self, v):
        return _apply(K.dphi_scalar, K.dphi_array, v, self.packed)

    @property
    def single_maximum(self) -> bool:
        inner = [c for c in self.critical_points if 0.0 < c.v < self.c0]
        return len(inner) == 1 and inner[0].kind == "max"

    @property
    def v_star(self) -> float | None:
        inner = [c for c in self.critical_points if 0.0 < c.v < self.c0]
        return inner[0].v if self.single_maximum else None

    def max_speed(self, samples: int = 10_000) -> float:
        """max |Phi'| over [0, C0] from critical points, break points and samples."""
        pts = [0.0, self.c0] + [c.v for c in self.critical_points]
        pts += [p.start for p in self.pieces[1:] if 0.0 <= p.start <= self.c0]
        v = np.concatenate([np.linspace(0.0, self.c0, samples), np.array(pts)])
        return float(np.max(np.abs(self.phi_prime(v))))


def _apply(scalar_fn, array_fn, v, packed):
    if np.ndim(v) == 0:
        return float(scalar_fn(float(v), packed))
    arr = np.ascontiguousarray(v, dtype=float)
    return array_fn(arr.ravel(), packed).reshape(arr.shape)


def _segment_sign(dphi, lo, hi, samples=64):
    s = [dphi(lo + (hi - lo) * (k + 0.5) / samples) for k in range(samples)]
    pos = any(x > 0 for x in s)
    neg = any(x < 0 for x in s)
    if pos and neg:
        raise ConfigurationError(
            f"Phi' changes sign inside ({lo}, {hi}); declare the critical point there"
        )
    return 1 if pos else (-1 if neg else 0)


def _check_tags(cps, bounds, signs, c0):
    # sign of the segment to the left/right of each bound
    for c in cps:
        i = bounds.index(c.v) if c.v in bounds else None
        if i is None:
            continue
        left = signs[i - 1] if i > 0 else None
        right = signs[i] if i < len(signs) else None
        if c.kind == "max":
            ok = (left is None or left >= 0) and (right is None or right <= 0)
        else:
            ok = (left is None or left <= 0) and (right is None or right >= 0)
        if not ok:
            raise ConfigurationError(f"critical point at v={c.v} is not a {c.kind} of Phi")
    for i in range(1, len(bounds) - 1):
        if signs[i - 1] * signs[i] > 0:
            raise ConfigurationError(
                f"declared critical point v={bounds[i]} is not a sign change of Phi'"
            )


def phi_plus(model: FluxModel, v):
    """Phi_+(v) = integral of max(0, Phi') over [0, v], v clamped to [0, C0]."""
    if np.ndim(v) == 0:
        return float(K.split_scalar(float(v), model.packed)[0])
    arr = np.ascontiguousarray(v, dtype=float)
    return K.split_array(arr.ravel(), model.packed)[0].reshape(arr.shape)


def phi_minus(model: FluxModel, v):
    """Phi_-(v) = integral of min(0, Phi') over [0, v], v clamped to [0, C0]."""
    if np.ndim(v) == 0:
        return float(K.split_scalar(float(v), model.packed)[1])
    arr = np.ascontiguousarray(v, dtype=float)
    return K.split_array(arr.ravel(), model.packed)[1].reshape(arr.shape)


@dataclass(frozen=True)
class DiffusionModel:
    """Piecewise-linear integrated diffusion through ``breakpoints`` (u_i, A_i).

    The first break point is (0, 0); beyond the last one A continues with
    the last slope, which must be positive unless A vanishes identically.
    At a break point ``a`` is the right slope.
    """

    breakpoints: tuple[tuple[float, float], ...]
    packed: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bp = tuple((float(u), float(A)) for u, A in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        if not bp or bp[0] != (0.0, 0.0):
            raise ConfigurationError("diffusion break points must start at (0, 0)")
        u = np.array([b[0] for b in bp])
        A = np.array([b[1] for b in bp])
        if np.any(np.diff(u) <= 0):
            raise ConfigurationError("diffusion break points need increasing u")
        if np.any(np.diff(A) < 0):
            raise ConfigurationError("A must be nondecreasing")
        slope = np.zeros(len(bp))
        if len(bp) > 1:
            slope[:-1] = np.diff(A) / np.diff(u)
            slope[-1] = slope[-2]
        if slope[-1] <= 0 and np.any(slope > 0):
            raise ConfigurationError("bounded (saturating) A is not supported; last slope must be positive")
        object.__setattr__(self, "_slopes", slope)
        object.__setattr__(self, "packed", K.pack_diffusion(u, A, slope))

    def A(self, u):
        return _apply(K.A_scalar, K.A_array, u, self.packed)

    def a(self, u):
        return _apply(K.a_scalar, K.a_array, u, self.packed)

    @property
    def a_max(self) -> float:
        return float(np.max(self._slopes))

    @property
    def flat_intervals(self) -> list[tuple[float, float]]:
        u = np.array([b[0] for b in self.breakpoints])
        slope = self._slopes
        out = []
        for i, s in enumerate(slope):
            if s != 0.0:
                continue
            hi = u[i + 1] if i + 1 < len(u) else math.inf
            if out and out[-1][1] == u[i]:
                out[-1] = (out[-1][0], hi)
            else:
                out.append((float(u[i]), float(hi)))
        return out

    def is_flat_on(self, lo: float, hi: float) -> bool:
        return any(a <= lo and hi <= b for a, b in self.flat_intervals)


@dataclass(frozen=True)
class InitialDatum:
    """Piecewise-constant datum: list of (x_left, x_right, value) on [x_l, x_r)."""

    pieces: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        ps = tuple(sorted((float(a), float(b), float(c)) for a, b, c in self.pieces))
        object.__setattr__(self, "pieces", ps)
        if not ps:
            raise ConfigurationError("initial datum needs at least one piece")
        for xl, xr, c in ps:
            if not (math.isfinite(xl) and math.isfinite(xr) and xl < xr):
                raise ConfigurationError(f"bad interval [{xl}, {xr})")
            if c < 0 or not math.isfinite(c):
                raise ConfigurationError("initial values must be finite and nonnegative")
        for (_, r, _), (l, _, _) in zip(ps, ps[1:]):
            if l < r:
                raise ConfigurationError("initial datum pieces overlap")
        if not self.total_mass > 0:
            raise ConfigurationError("initial datum must carry positive mass")

    @property
    def support(self) -> tuple[float, float]:
        live = [p for p in self.pieces if p[2] > 0]
        return (live[0][0], max(p[1] for p in live))

    @property
    def total_mass(self) -> float:
        return math.fsum(c * (xr - xl) for xl, xr, c in self.pieces)

    @property
    def total_variation(self) -> float:
        # jumps at both ends of each piece, merged where pieces touch
        edges: dict[float, float] = {}
        for xl, xr, c in self.pieces:
            edges[xl] = edges.get(xl, 0.0) + c
            edges[xr] = edges.get(xr, 0.0) - c
        return math.fsum(abs(j) for j in edges.values())

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for xl, xr, c in self.pieces:
            out = np.where((x >= xl) & (x < xr), c, out)
        return out


@dataclass(frozen=True)
class ProblemSpec:
    flux: FluxModel
    diffusion: DiffusionModel
    initial: InitialDatum
    name: str = "custom"

    def __post_init__(self):
        c0 = self.initial.total_mass
        if not math.isclose(self.flux.c0, c0, rel_tol=1e-12):
            raise ConfigurationError(
                f"flux range [0, {self.flux.c0}] does not match total mass {c0}"
            )

    @property
    def c0(self) -> float:
        return self.initial.total_mass


def make_problem(pieces: Sequence[FluxPiece], critical_points, breakpoints, initial_pieces, name="custom"):
    initial = InitialDatum(tuple(initial_pieces))
    cps = tuple(c if isinstance(c, CriticalPoint) else CriticalPoint(float(c[0]), str(c[1])) for c in critical_points)
    flux = FluxModel(tuple(pieces), cps, initial.total_mass)
    return ProblemSpec(flux, DiffusionModel(tuple(breakpoints)), initial, name)


# --- presets ---------------------------------------------------------------

_EX1_DATUM = ((0.1, 0.2, 5.0), (0.6, 0.7, 8.0), (0.8, 0.9, 7.0))
_EX1_DIFFUSION = ((0.0, 0.0), (10.0, 0.0), (11.0, 0.1))


def _cosine_criticals(frequency, c0):
    # Phi = -0.5 (cos(f v) + 1): minima at f v = 2k pi, maxima at (2k+1) pi
    out = []
    k = 0
    while k * math.pi / frequency <= c0 + 1e-12:
        v = k * math.pi / frequency
        out.append(CriticalPoint(min(v, c0), "min" if k % 2 == 0 else "max"))
        k += 1
    return out


def preset(name: str) -> ProblemSpec:
    """Return one of the six reference problems ``ex1`` .. ``ex6``."""
    if name == "ex1":
        return make_problem([power(-1.0, 1.0, 2.0)], [(1.0, "max")], _EX1_DIFFUSION, _EX1_DATUM, "ex1")
    if name == "ex2":
        pieces = [power(-1.0, 1.0, 8.0), power(-1.0, 1.0, 2.0, start=1.0)]
        return make_problem(pieces, [(1.0, "max")], _EX1_DIFFUSION, _EX1_DATUM, "ex2")
    if name == "ex3":
        diffusion = ((0.0, 0.0), (5.0, 0.25), (10.0, 0.25), (11.0, 0.3))
        return make_problem([power(-1.0, 1.0, 2.0)], [(1.0, "max")], diffusion, _EX1_DATUM, "ex3")
    if name == "ex4":
        datum = ((0.05, 0.15, 10.0), (0.3, 0.5, 14.0), (0.6, 0.7, 9.0), (0.9, 1.0, 8.0))
        c0 = 10 * 0.1 + 14 * 0.2 + 9 * 0.1 + 8 * 0.1
        return make_problem(
            [cosine(-0.5, math.pi, -0.5)], _cosine_criticals(math.pi, c0), _EX1_DIFFUSION, datum, "ex4"
        )
    if name == "ex5":
        datum = ((0.15, 0.3, 14.0), (0.6, 0.7, 17.0), (0.8, 0.95, 18.0))
        pieces = [cosine(-0.5, math.pi, -0.5), power(1.0, 2.0, 2.0, -1.0, start=2.0)]
        cps = [(0.0, "min"), (1.0, "max"), (2.0, "min")]
        return make_problem(pieces, cps, _EX1_DIFFUSION, datum, "ex5")
    if name == "ex6":
        return make_problem(
            [cosine(-0.5, 2 * math.pi, -0.5)], _cosine_criticals(2 * math.pi, 2.0), _EX1_DIFFUSION, _EX1_DATUM, "ex6"
        )
    raise KeyError(f"unknown example {name!r}; choose one of {', '.join(PRESETS)}")


PRESETS = ("ex1", "ex2", "ex3", "ex4", "ex5", "ex6")


# --- configuration files -----------------------------------------------------


def load_problem(path: str | Path) -> ProblemSpec:
    """Read a TOML problem description.

    ``[flux]`` has ``type`` one of ``quadratic`` (Phi = -k v (v - C0) + const),
    ``cosine`` (amplitude * cos(frequency * v + phase) + offset) or
    ``piecewise`` (``[[flux.pieces]]`` tables plus ``critical_points``).
    ``[diffusion] breakpoints`` lists (u, A) pairs and ``[initial] pieces``
    lists (x_left, x_right, value) triples.
    """
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    return problem_from_dict(cfg, default_name=Path(path).stem)


def problem_from_dict(cfg: dict, default_name: str = "custom") -> ProblemSpec:
    try:
        initial = InitialDatum(tuple(tuple(p) for p in cfg["initial"]["pieces"]))
        breakpoints = tuple(tuple(b) for b in cfg["diffusion"]["breakpoints"])
        flux_cfg = cfg["flux"]
        kind = flux_cfg["type"]
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"missing configuration entry: {exc}") from exc
    c0 = initial.total_mass
    if kind == "quadratic":
        k = float(flux_cfg.get("k", 1.0))
        const = float(flux_cfg.get("const", 0.0))
        pieces = [polynomial((const, k * c0, -k))]
        cps = [(c0 / 2, "max" if k > 0 else "min")] if k != 0 else []
    elif kind == "cosine":
        amp = float(flux_cfg["amplitude"])
        freq = float(flux_cfg["frequency"])
        phase = float(flux_cfg.get("phase", 0.0))
        pieces = [cosine(amp, freq, float(flux_cfg.get("offset", 0.0)), phase)]
        cps = []
        # Phi' = -amp*freq*sin(freq v + phase) vanishes where freq v + phase = m pi
        m = math.ceil(phase / math.pi - 1e-12) if freq > 0 else 0
        while freq > 0 and (m * math.pi - phase) / freq <= c0 + 1e-12:
            v = max(0.0, min(c0, (m * math.pi - phase) / freq))
            top = (amp * math.cos(m * math.pi)) > 0
            cps.append((v, "max" if top else "min"))
            m += 1
    elif kind == "piecewise":
        if "critical_points" not in flux_cfg:
            raise ConfigurationError("piecewise flux must declare critical_points")
        pieces = []
        for p in flux_cfg.get("pieces", []):
            p = dict(p)
            start = float(p.pop("start", -math.inf))
            pk = p.pop("kind")
            if pk == "power":
                pieces.append(power(p["coef"], p["shift"], p["exponent"], p.get("offset", 0.0), start))
            elif pk == "cosine":
                pieces.append(cosine(p["amplitude"], p["frequency"], p.get("offset", 0.0), p.get("phase", 0.0), start))
            elif pk == "polynomial":
                pieces.append(polynomial(p["coeffs"], start))
            else:
                raise ConfigurationError(f"unknown flux piece kind {pk!r}")
        if pieces:
            pieces[0] = FluxPiece(pieces[0].kind, pieces[0].params, -math.inf)
        cps = [tuple(c) for c in flux_cfg["critical_points"]]
    else:
        raise ConfigurationError(f"unknown flux type {kind!r}")
    flux = FluxModel(tuple(pieces), tuple(CriticalPoint(float(v), str(t)) for v, t in cps), c0)
    return ProblemSpec(flux, DiffusionModel(breakpoints), initial, cfg.get("name", default_name))

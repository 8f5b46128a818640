"""Compiled inner loops shared by the model, scheme and diagnostics modules.

Each model is packed into a single flat float64 array so that helper calls
in the hot loop carry one array argument (every array argument costs a
reference-count round trip per call).

Flux layout ``fx``::

    [n_pieces, n_segments, c0, phi(0),
     n_pieces  x (start, kind, p0 .. p9),
     n_segments x (start, sign, Phi_+(start), Phi_-(start), Phi(start))]

Diffusion layout ``df``::

    [n_breaks, n_breaks x (u_i, A_i, slope_i)]
"""

import numpy as np
from numba import njit

POWER = 0
COSINE = 1
POLYNOMIAL = 2
NPAR = 10
PIECE = NPAR + 2
SEG = 5
HEAD = 4

# round-off allowance of the boundary guard, in units of eps * C0 per step
GUARD_ULPS_PER_STEP = 8.0
EPS = np.finfo(np.float64).eps

# error codes returned by the marching loops
OK = 0
NONFINITE = 1
LEFT_BOUNDARY = 2
RIGHT_BOUNDARY = 3


def pack_flux(starts, kinds, params, seg_start, seg_sign, seg_plus, seg_minus, seg_phi, c0, phi0):
    n, m = len(starts), len(seg_start)
    fx = np.zeros(HEAD + PIECE * n + SEG * m)
    fx[:HEAD] = (n, m, c0, phi0)
    for i in range(n):
        o = HEAD + PIECE * i
        fx[o] = starts[i]
        fx[o + 1] = kinds[i]
        fx[o + 2 : o + PIECE] = params[i]
    for i in range(m):
        o = HEAD + PIECE * n + SEG * i
        fx[o : o + SEG] = (seg_start[i], seg_sign[i], seg_plus[i], seg_minus[i], seg_phi[i])
    return fx


def pack_diffusion(u, A, slope):
    df = np.zeros(1 + 3 * len(u))
    df[0] = len(u)
    df[1:] = np.column_stack([u, A, slope]).ravel()
    return df


@njit(cache=True, inline="always")
def _ipow(x, e):
    # integral exponents by repeated squaring; generic pow is far slower
    if e == np.floor(e) and 0.0 <= e <= 64.0:
        n = int(e)
        r = 1.0
        while n > 0:
            if n & 1:
                r *= x
            x *= x
            n >>= 1
        return r
    return x**e


@njit(cache=True, inline="always")
def phi_scalar(v, fx):
    n = int(fx[0])
    o = HEAD
    while o + PIECE < HEAD + PIECE * n and v >= fx[o + PIECE]:
        o += PIECE
    kind = fx[o + 1]
    p = o + 2
    if kind == POWER:
        return fx[p] * _ipow(v - fx[p + 1], fx[p + 2]) + fx[p + 3]
    if kind == COSINE:
        return fx[p] * np.cos(fx[p + 1] * v + fx[p + 2]) + fx[p + 3]
    acc = 0.0
    for i in range(NPAR - 1, -1, -1):
        acc = acc * v + fx[p + i]
    return acc


@njit(cache=True, inline="always")
def dphi_scalar(v, fx):
    n = int(fx[0])
    o = HEAD
    while o + PIECE < HEAD + PIECE * n and v >= fx[o + PIECE]:
        o += PIECE
    kind = fx[o + 1]
    p = o + 2
    if kind == POWER:
        if fx[p + 2] == 0.0:
            return 0.0
        return fx[p] * fx[p + 2] * _ipow(v - fx[p + 1], fx[p + 2] - 1.0)
    if kind == COSINE:
        return -fx[p] * fx[p + 1] * np.sin(fx[p + 1] * v + fx[p + 2])
    acc = 0.0
    for i in range(NPAR - 1, 0, -1):
        acc = acc * v + i * fx[p + i]
    return acc


@njit(cache=True, inline="always")
def split_scalar(v, fx):
    """Return (Phi_+(v), Phi_-(v)) with v clamped to [0, C0]."""
    w = min(max(v, 0.0), fx[2])
    base = HEAD + PIECE * int(fx[0])
    end = base + SEG * int(fx[1])
    o = base
    while o + SEG < end and w >= fx[o + SEG]:
        o += SEG
    plus = fx[o + 2]
    minus = fx[o + 3]
    if fx[o + 1] > 0:
        plus += phi_scalar(w, fx) - fx[o + 4]
    elif fx[o + 1] < 0:
        minus += phi_scalar(w, fx) - fx[o + 4]
    return plus, minus


@njit(cache=True, inline="always")
def A_scalar(u, df):
    end = 1 + 3 * int(df[0])
    o = 1
    while o + 3 < end and u >= df[o + 3]:
        o += 3
    return df[o + 1] + df[o + 2] * (u - df[o])


@njit(cache=True, inline="always")
def a_scalar(u, df):
    end = 1 + 3 * int(df[0])
    o = 1
    while o + 3 < end and u >= df[o + 3]:
        o += 3
    return df[o + 2]


@njit(cache=True)
def phi_array(v, fx):
    out = np.empty(v.shape[0])
    for i in range(v.shape[0]):
        out[i] = phi_scalar(v[i], fx)
    return out


@njit(cache=True)
def dphi_array(v, fx):
    out = np.empty(v.shape[0])
    for i in range(v.shape[0]):
        out[i] = dphi_scalar(v[i], fx)
    return out


@njit(cache=True)
def split_array(v, fx):
    plus = np.empty(v.shape[0])
    minus = np.empty(v.shape[0])
    for i in range(v.shape[0]):
        plus[i], minus[i] = split_scalar(v[i], fx)
    return plus, minus


@njit(cache=True)
def A_array(u, df):
    out = np.empty(u.shape[0])
    for i in range(u.shape[0]):
        out[i] = A_scalar(u[i], df)
    return out


@njit(cache=True)
def a_array(u, df):
    out = np.empty(u.shape[0])
    for i in range(u.shape[0]):
        out[i] = a_scalar(u[i], df)
    return out


@njit(cache=True, inline="always")
def guard_tolerance(c0, rel, n):
    """Largest boundary-cell mass accepted after n steps.

    Round-off near V = C0 leaks a few ulps of C0 per step into the far
    field, so the relative tolerance grows with the step count.
    """
    return c0 * (rel + GUARD_ULPS_PER_STEP * EPS * n)


@njit(cache=True)
def _update_range(V, out, lo, hi, lam, inv_dx, phi0, fx, df):
    # writes out[lo..hi]; reads V[lo-1..hi+1]
    p_prev, _m = split_scalar(V[lo - 1], fx)
    p_cur, m_cur = split_scalar(V[lo], fx)
    F_prev = phi0 + p_prev + m_cur - A_scalar((V[lo] - V[lo - 1]) * inv_dx, df)
    dmax = 0.0
    for j in range(lo, hi + 1):
        p_nxt, m_nxt = split_scalar(V[j + 1], fx)
        F = phi0 + p_cur + m_nxt - A_scalar((V[j + 1] - V[j]) * inv_dx, df)
        w = V[j] - lam * (F - F_prev)
        if not np.isfinite(w):
            return -1.0
        out[j] = w
        d = abs(w - V[j])
        if d > dmax:
            dmax = d
        F_prev = F
        p_cur = p_nxt
    return dmax


@njit(cache=True)
def v_step_kernel(V, lam, inv_dx, fx, df):
    """One application of the marching formula on all interior nodes."""
    J = V.shape[0] - 1
    out = V.copy()
    if J < 2:
        return out, OK
    dmax = _update_range(V, out, 1, J - 1, lam, inv_dx, fx[3], fx, df)
    if dmax < 0.0:
        return out, NONFINITE
    return out, OK


@njit(cache=True)
def _active_bounds(V):
    J = V.shape[0] - 1
    left = V[0]
    right = V[J]
    f = 1
    while f < J and V[f] == left:
        f += 1
    g = J - 1
    while g > 0 and V[g] == right:
        g -= 1
    lo = max(1, f - 1)
    hi = min(J - 1, g + 1)
    if hi < lo:
        lo = 1
        hi = J - 1
    return lo, hi


@njit(cache=True)
def march_kernel(V, n_steps, dt, dt_last, dx, fx, df, guard_tol):
    """March V through n_steps steps (the last one of length dt_last).

    Only nodes whose stencil can change are updated: node j is frozen while
    V[j-1], V[j], V[j+1] all equal the boundary value on their side.
    Returns (V, steps_done, status, max_increment_last_step).
    """
    J = V.shape[0] - 1
    a = V.copy()
    b = V.copy()
    if J < 2 or n_steps == 0:
        return a, 0, OK, 0.0
    inv_dx = 1.0 / dx
    phi0 = fx[3]
    left = a[0]
    right = a[J]
    c0 = abs(right - left)
    lo, hi = _active_bounds(a)
    dmax = 0.0
    for n in range(n_steps):
        lam = (dt_last if n == n_steps - 1 else dt) * inv_dx
        dmax = _update_range(a, b, lo, hi, lam, inv_dx, phi0, fx, df)
        if dmax < 0.0:
            return a, n, NONFINITE, 0.0
        a, b = b, a
        while lo > 1 and a[lo] != left:
            lo -= 1
        while hi < J - 1 and a[hi] != right:
            hi += 1
        # frozen nodes must agree in both buffers before leaving the window
        while lo < hi and a[lo + 1] == left:
            b[lo] = a[lo]
            lo += 1
        while hi > lo and a[hi - 1] == right:
            b[hi] = a[hi]
            hi -= 1
        mass_tol = guard_tolerance(c0, guard_tol, n + 1)
        if a[1] - left > mass_tol:
            return a, n + 1, LEFT_BOUNDARY, dmax
        if right - a[J - 1] > mass_tol:
            return a, n + 1, RIGHT_BOUNDARY, dmax
    return a, n_steps, OK, dmax


@njit(cache=True)
def monitor_kernel(V, n_steps, dt, dx, fx, df, guard_tol):
    """March like march_kernel but record per-step invariants.

    Columns of the returned table: min forward difference of V, min V, max V,
    total variation of V, sum |V^{n+1} - V^n|, max |U|.
    """
    J = V.shape[0] - 1
    rec = np.zeros((n_steps, 6))
    a = V.copy()
    b = V.copy()
    inv_dx = 1.0 / dx
    lam = dt * inv_dx
    phi0 = fx[3]
    left = a[0]
    right = a[J]
    c0 = abs(right - left)
    for n in range(n_steps):
        dmax = _update_range(a, b, 1, J - 1, lam, inv_dx, phi0, fx, df)
        if dmax < 0.0:
            return a, rec[:n], NONFINITE
        incr = 0.0
        for j in range(1, J):
            incr += abs(b[j] - a[j])
        a, b = b, a
        dmin = np.inf
        dabs = 0.0
        tv = 0.0
        for j in range(J):
            d = a[j + 1] - a[j]
            dmin = min(dmin, d)
            dabs = max(dabs, abs(d))
            tv += abs(d)
        rec[n, 0] = dmin
        rec[n, 1] = a.min()
        rec[n, 2] = a.max()
        rec[n, 3] = tv
        rec[n, 4] = incr
        rec[n, 5] = dabs * inv_dx
        mass_tol = guard_tolerance(c0, guard_tol, n + 1)
        if a[1] - left > mass_tol:
            return a, rec[: n + 1], LEFT_BOUNDARY
        if right - a[J - 1] > mass_tol:
            return a, rec[: n + 1], RIGHT_BOUNDARY
    return a, rec, OK


@njit(cache=True)
def u_step_kernel(U, V, lam, mu, inv_dx, fx, df):
    """Divided-difference form: U' = U - lam*D+G + mu*D2 A(U), ghosts U=0."""
    J = U.shape[0]
    c0 = V[J]
    # node G_j for j = 0..J with ghost nodes v_{-1} = V[0], v_{J+1} = c0
    G = np.empty(J + 1)
    phi0 = fx[3]
    p_left, _m = split_scalar(V[0], fx)
    p_cur, m_cur = split_scalar(V[0], fx)
    h_prev = phi0 + p_left + m_cur
    for j in range(J + 1):
        v_next = V[j + 1] if j < J else c0
        p_nxt, m_nxt = split_scalar(v_next, fx)
        h = phi0 + p_cur + m_nxt
        G[j] = (h - h_prev) * inv_dx
        h_prev = h
        p_cur = p_nxt
    AU = np.empty(J + 2)
    AU[0] = A_scalar(0.0, df)
    AU[J + 1] = AU[0]
    for c in range(J):
        AU[c + 1] = A_scalar(U[c], df)
    out = np.empty(J)
    for c in range(J):
        out[c] = U[c] - lam * (G[c + 1] - G[c]) + mu * (AU[c + 2] - 2.0 * AU[c + 1] + AU[c])
    return out

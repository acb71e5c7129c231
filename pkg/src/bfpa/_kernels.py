"""Compiled per-row solvers behind the batch allocation routines.

Each row (one fading realization) is solved independently by a scalar
safeguarded Newton iteration, which is both simpler and a lot faster than
masking rows in numpy.

Metric handles are a single 2-D float array ``H`` (one array argument keeps
the compiled helpers cheap to call):

    row 0        u nodes of the phi/psi splines (n)
    row 1        phi node values
    rows 2-5     phi cubic coefficients (n-1)
    row 6        psi node values
    rows 7-10    psi cubic coefficients
    row 11       w nodes of the spline of phi^-1 (nw)
    rows 12-15   its coefficients
    row 16       scalars, see ``_S_*``

``kind`` (row 16, col 0) is 0 for a table, 1 for a Gaussian input and 2 for a
fitted closed-form curve.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

LN2 = math.log(2.0)

# shape ids for the piecewise-linear allocation families
SHAPE_WF, SHAPE_TW, SHAPE_REF = 0, 1, 2

_S = 16
_S_KIND, _S_N, _S_NW, _S_SPHI, _S_SPSI, _S_M, _S_RMAX, _S_C1, _S_C2, _S_C3 = range(10)


def _blank(width):
    H = np.zeros((17, max(width, 16)))
    return H


def pack_table(table):
    phi, psi, inv = table._phi, table._psi, table._phi_inv
    n, nw = len(phi.u), len(inv.u)
    H = _blank(max(n, nw))
    H[0, :n] = phi.u
    H[1, :n] = phi.y
    H[2:6, : n - 1] = phi.c
    H[6, :n] = psi.y
    H[7:11, : n - 1] = psi.c
    H[11, :nw] = inv.u
    H[12:16, : nw - 1] = inv.c
    H[_S, :7] = [0, n, nw, phi.slope_lo, psi.slope_lo, table.M, table.rho_max]
    return H


def pack_gauss():
    H = _blank(16)
    H[_S, :7] = [1, 0, 0, 1.0, 1.0, math.inf, math.inf]
    return H


def pack_fit(fit):
    H = _blank(16)
    H[_S, :10] = [2, 0, 0, 1.0, 1.0, fit.M, math.inf, fit.c1, fit.c2, fit.c3]
    return H


@njit(cache=True)
def _spl(x, H, r_y, r_c, r_u, n, slope):
    # cubic on uniform nodes H[r_u, :n]; linear extension below the first node
    u0 = H[r_u, 0]
    h = H[r_u, 1] - u0
    i = int((x - u0) / h)
    if i > n - 2:
        i = n - 2
    if i < 0:
        i = 0
    dx = x - H[r_u, i]
    c0 = H[r_c, i]
    c1 = H[r_c + 1, i]
    c2 = H[r_c + 2, i]
    v = ((c0 * dx + c1) * dx + c2) * dx + H[r_c + 3, i]
    d = (3.0 * c0 * dx + 2.0 * c1) * dx + c2
    if x < u0:
        v = H[r_y, 0] + slope * (x - u0)
        d = slope
    return v, d


@njit(cache=True)
def phi(x, H):
    return _spl(x, H, 1, 2, 0, int(H[_S, _S_N]), H[_S, _S_SPHI])


@njit(cache=True)
def psi(x, H):
    return _spl(x, H, 6, 7, 0, int(H[_S, _S_N]), H[_S, _S_SPSI])


@njit(cache=True)
def _phi_inv(w, H):
    # spline of the inverse, then one Newton step on phi itself
    n = int(H[_S, _S_N])
    y0 = H[1, 0]
    if w < y0:
        s = H[_S, _S_SPHI]
        return H[0, 0] + (w - y0) / s, s, False
    if w >= H[1, n - 1]:
        return H[0, n - 1], 0.0, True
    x, _ = _spl(w, H, 11, 12, 11, int(H[_S, _S_NW]), 1.0)
    v, d = phi(x, H)
    x -= (v - w) / d
    return x, d, False


@njit(cache=True)
def rho_of_q(q, H):
    """rho with -ln MMSE(rho) = q, and drho/dq."""
    if q <= 0.0:
        return 0.0, 0.0
    if H[_S, _S_KIND] == 1:
        e = math.exp(q)
        return math.expm1(q), e
    x, d, top = _phi_inv(math.log(q), H)
    if top:
        return H[_S, _S_RMAX], 0.0
    rho = math.exp(x)
    return rho, rho / (q * d)


@njit(cache=True)
def mi_of_u(x, H):
    v, _ = psi(x, H)
    return -H[_S, _S_M] * math.expm1(-math.exp(v))


@njit(cache=True)
def metric(rho, H):
    """(I(rho) in bits, dI/drho)."""
    kind = H[_S, _S_KIND]
    if kind == 1:
        r = max(rho, 0.0)
        return math.log1p(r) / LN2, 1.0 / ((1.0 + r) * LN2)
    if kind == 0:
        if rho <= 0.0:
            return 0.0, 1.0 / LN2
        rmax = H[_S, _S_RMAX]
        x = math.log(min(rho, rmax))
        qv, _ = phi(x, H)
        mm = math.exp(-math.exp(qv)) if rho < rmax else 0.0
        return mi_of_u(x, H), mm / LN2
    if rho <= 0.0:
        # zero slope at the origin whenever c2 c3 > 1; the solver bisects past it
        return 0.0, 0.0
    M, c1, c2, c3 = H[_S, _S_M], H[_S, _S_C1], H[_S, _S_C2], H[_S, _S_C3]
    z = c1 * rho**c2
    base = -math.expm1(-z)
    val = M * base**c3
    d = M * c3 * base ** (c3 - 1.0) * math.exp(-z) * c1 * c2 * rho ** (c2 - 1.0)
    return val, d


@njit(cache=True)
def _level_sum(t, lg, B, H, mode):
    # mode 0: total power, mode 1: total rate, at level t = -ln nu
    f = 0.0
    df = 0.0
    gauss = H[_S, _S_KIND] == 1
    for b in range(B):
        q = t + lg[b]
        if q <= 0.0:
            continue
        rho, dr = rho_of_q(q, H)
        if mode == 0:
            ig = math.exp(-lg[b])
            f += rho * ig
            df += dr * ig
        elif gauss:
            f += q / LN2
            df += 1.0 / LN2
        else:
            f += mi_of_u(math.log(rho), H)
            df += math.exp(-q) / LN2 * dr
    return f, df


@njit(cache=True)
def _solve_level(lg, B, H, mode, target, lo, hi):
    x = hi
    f, df = _level_sum(x, lg, B, H, mode)
    for _ in range(200):
        r = f - target
        if abs(r) <= 1e-14 * target:
            break
        if r > 0.0:
            hi = x
        else:
            lo = x
        if hi - lo <= 1e-15 * max(1.0, abs(x)):
            break
        nx = x - r / df if df > 0.0 else 0.5 * (lo + hi)
        if not (lo < nx < hi) or nx == x:
            nx = 0.5 * (lo + hi)
        x = nx
        f, df = _level_sum(x, lg, B, H, mode)
    return x


@njit(cache=True)
def mercury_rows(G, target, H, mode, q_hint):
    """Solve every row of ``G`` for the level ``t = -ln nu``.

    mode 0: sum_b rho_b / g_b = target (short-term budget ``B P``)
    mode 1: sum_b I(rho_b) = target   (long-term rate ``B R``)
    where ``-ln MMSE(rho_b) = t + ln g_b``. ``q_hint`` is ``-ln MMSE`` at the
    per-block SNR that meets the target alone (mode 1: ``mi_inv(R)``).

    Zero gains are dropped from the row. Returns ``(P, t, flag)``; flag 1 means
    saturated (mode 0: table ceiling reached, budget spread proportionally) or
    infeasible (mode 1: power set to inf).
    """
    N, B = G.shape
    P = np.zeros((N, B))
    T = np.full(N, np.nan)
    flag = np.zeros(N, np.int8)
    lg = np.empty(B)
    idx = np.empty(B, np.int64)
    rho_max = H[_S, _S_RMAX]
    gauss = H[_S, _S_KIND] == 1
    top_rate = math.inf if gauss else mi_of_u(math.log(rho_max), H)
    for n in range(N):
        k = 0
        lgmax = -np.inf
        lgmin = np.inf
        cap = 0.0
        for b in range(B):
            g = G[n, b]
            if g > 0.0:
                lg[k] = math.log(g)
                idx[k] = b
                lgmax = max(lgmax, lg[k])
                lgmin = min(lgmin, lg[k])
                cap += rho_max / g if mode == 0 else top_rate
                k += 1
        if k == 0 or cap < target:
            flag[n] = 1
            if mode == 1:
                for b in range(B):
                    P[n, b] = np.inf
            elif k > 0:
                s = 0.0
                for j in range(k):
                    s += rho_max * math.exp(-lg[j])
                for j in range(k):
                    P[n, idx[j]] = rho_max * math.exp(-lg[j]) * target / s
            continue
        lo = -lgmax
        if mode == 0:
            hi = -np.inf
            for j in range(k):
                r = min(target * math.exp(lg[j]), rho_max)
                qb = math.log1p(r) if gauss else math.exp(phi(math.log(r), H)[0])
                hi = max(hi, qb - lg[j])
        else:
            hi = q_hint - lgmin
        hi = max(hi, lo)
        f, _ = _level_sum(hi, lg, k, H, mode)
        step = 1.0
        while f < target:
            lo = hi
            hi += step
            step *= 2.0
            f, _ = _level_sum(hi, lg, k, H, mode)
        t = _solve_level(lg, k, H, mode, target, lo, hi)
        T[n] = t
        s = 0.0
        for j in range(k):
            rho, _ = rho_of_q(t + lg[j], H)
            p = rho * math.exp(-lg[j])
            P[n, idx[j]] = p
            s += p
        if mode == 0:
            for j in range(k):
                P[n, idx[j]] *= target / s
    return P, T, flag


@njit(cache=True)
def _shape_p(eta, inv, shape, beta, kappa, alpha):
    # power of one block and d(power)/d(eta)
    if shape == SHAPE_TW:
        if eta >= (beta + 1.0) * inv:
            return beta * inv, 0.0
    elif shape == SHAPE_REF:
        if eta >= beta * inv / kappa:
            return beta * inv, 0.0
        if eta >= alpha * inv / kappa:
            return kappa * eta, kappa
        if eta >= (alpha + 1.0) * inv:
            return alpha * inv, 0.0
    if eta > inv:
        return eta - inv, 1.0
    return 0.0, 0.0


@njit(cache=True)
def _shape_rate(eta, ginv, B, H, shape, beta, kappa, alpha):
    f = 0.0
    df = 0.0
    for b in range(B):
        inv = ginv[b]
        p, dp = _shape_p(eta, inv, shape, beta, kappa, alpha)
        val, d = metric(p / inv, H)
        f += val
        if dp > 0.0:
            df += d * dp / inv
    return f, df


@njit(cache=True)
def shape_rate_rows(G, target, H, shape, beta, kappa, alpha):
    """Water level ``eta`` with ``sum_b I(g_b p_b(eta)) = target`` for each row.

    Rows that cannot reach the target even with every block at its cap get
    infinite power (flag 1).
    """
    N, B = G.shape
    P = np.zeros((N, B))
    E = np.full(N, np.nan)
    flag = np.zeros(N, np.int8)
    ginv = np.empty(B)
    idx = np.empty(B, np.int64)
    for n in range(N):
        k = 0
        for b in range(B):
            if G[n, b] > 0.0:
                ginv[k] = 1.0 / G[n, b]
                idx[k] = b
                k += 1
        if k == 0:
            flag[n] = 1
            for b in range(B):
                P[n, b] = np.inf
            continue
        imin = ginv[0]
        imax = ginv[0]
        for j in range(k):
            imin = min(imin, ginv[j])
            imax = max(imax, ginv[j])
        lo = imin
        if shape == SHAPE_WF:
            hi = 2.0 * imax
        elif shape == SHAPE_TW:
            hi = (beta + 1.0) * imax
        else:
            hi = beta * imax / kappa
        f, df = _shape_rate(hi, ginv, k, H, shape, beta, kappa, alpha)
        if shape == SHAPE_WF:
            it = 0
            while f < target and it < 200:
                lo = hi
                hi *= 2.0
                it += 1
                f, df = _shape_rate(hi, ginv, k, H, shape, beta, kappa, alpha)
        if f < target * (1.0 - 1e-12):
            flag[n] = 1
            for b in range(B):
                P[n, b] = np.inf
            continue
        x = hi
        for _ in range(200):
            r = f - target
            if abs(r) <= 1e-14 * target:
                break
            if r > 0.0:
                hi = x
            else:
                lo = x
            if hi - lo <= 1e-15 * max(1.0, x):
                break
            nx = x - r / df if df > 0.0 else 0.5 * (lo + hi)
            if not (lo < nx < hi) or nx == x:
                nx = 0.5 * (lo + hi)
            x = nx
            f, df = _shape_rate(x, ginv, k, H, shape, beta, kappa, alpha)
        E[n] = x
        for j in range(k):
            P[n, idx[j]] = _shape_p(x, ginv[j], shape, beta, kappa, alpha)[0]
    return P, E, flag


@njit(cache=True)
def rate_sum_rows(Pw, G, H):
    """sum_b I(p_b g_b) per row."""
    N, B = G.shape
    out = np.zeros(N)
    for n in range(N):
        s = 0.0
        for b in range(B):
            s += metric(Pw[n, b] * G[n, b], H)[0]
        out[n] = s
    return out

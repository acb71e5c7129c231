"""Short-term (per-codeword) power allocation.

Every scheme maximizes some version of ``sum_b I(p_b gamma_b)`` subject to
``sum_b p_b <= B P``:

* ``uniform``  p_b = P
* ``wf``       classical water-filling, ``p_b = (eta - 1/gamma_b)_+``
* ``tw``       water-filling with the received SNR capped at ``beta``
* ``ref``      water-filling against a three-piece surrogate of ``I_X``
               (Gaussian log, tangent log with slope ``kappa``, flat at ``beta``)
* ``opt``      mercury/water-filling on the exact ``I_X``

The ``*_batch`` kernels work on an ``(N, B)`` array of gains and are what the
Monte Carlo engine calls; the scalar wrappers return a ``PowerAllocation``.

Water-filling style allocations are piecewise linear in the water level, so
they are solved exactly: the total power is evaluated at every breakpoint and
the crossing segment is interpolated linearly. The mercury kernel is solved by
safeguarded Newton in ``t = -ln(nu)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .errors import InfeasibleError, RangeError, ValidationError
from .metrics import log_metrics

SCHEMES = ("uniform", "wf", "tw", "ref", "opt")
_EPS_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    powers: np.ndarray
    scheme: str
    budget_P: float
    gamma: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        p = np.asarray(self.powers, dtype=float)
        object.__setattr__(self, "powers", p)
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValidationError("powers must be finite and nonnegative")
        cap = len(p) * self.budget_P
        if p.sum() > cap + 1e-9 * cap:
            raise ValidationError(f"allocation uses {p.sum()!r} > B*P = {cap!r}")

    @property
    def B(self) -> int:
        return len(self.powers)

    @property
    def total(self) -> float:
        return float(self.powers.sum())


@dataclass(frozen=True)
class RefinedParams:
    kappa: float
    a: float
    alpha: float
    beta: float
    rho0: float

    def __post_init__(self):
        if not 0 < self.kappa < 1:
            raise ValidationError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not 0 < self.alpha < self.beta:
            raise ValidationError(f"need 0 < alpha < beta, got alpha={self.alpha}, beta={self.beta}")
        if self.kappa > self.alpha / (1 + self.alpha) + 1e-12:
            raise ValidationError("kappa > alpha/(1+alpha): surrogate is not concave")

    def with_beta(self, beta: float) -> "RefinedParams":
        return RefinedParams(self.kappa, self.a, self.alpha, float(beta), self.rho0)

    def to_json(self):
        return {"kappa": self.kappa, "a": self.a, "alpha": self.alpha, "beta": self.beta, "rho0": self.rho0}


# -- design quantities ------------------------------------------------------


def _check_rate(R, M):
    if not (0 < R <= M):
        raise ValidationError(f"need 0 < R <= M, got R={R}, M={M}")


def singleton_bound(B: int, R: float, M: float) -> int:
    _check_rate(R, M)
    return 1 + math.floor(B * (1.0 - R / M) + _EPS_FLOOR)


def d_beta(B: int, R: float, I_beta: float) -> int:
    """Exponent ``1 + floor(B (1 - R / I_X(beta)))`` of the truncated scheme; 0 if unreachable."""
    if R > I_beta:
        return 0
    return 1 + math.floor(B * (1.0 - R / I_beta) + _EPS_FLOOR)


def beta_R(table, B: int, R: float, M: float | None = None) -> float:
    """Smallest cap preserving full diversity; ``inf`` at a Singleton discontinuity."""
    M = table.M if M is None else M
    _check_rate(R, M)
    k = math.floor(B * (1.0 - R / M) + _EPS_FLOOR)
    ratio = B * R / (B - k)
    if ratio >= M * (1 - 1e-12):
        return math.inf
    from .metrics import mi_inv

    return mi_inv(table.input, ratio, table=table)


def tangent_params(table, rho0: float = 3.0, beta: float = 15.0) -> RefinedParams:
    """Tangent ``kappa log2(rho) + a`` to ``I_X`` at ``rho0`` and its crossover ``alpha``.

    ``kappa`` is the slope of ``I_X`` against ``log2(rho)``, i.e. ``rho0 MMSE(rho0)``.
    The line meets ``log2(1 + rho)`` twice; ``alpha`` is the crossing between the
    maximum of the gap, ``kappa/(1-kappa)``, and ``rho0``.
    """
    inp = table.input
    rho0 = float(rho0)
    if not table.rho_min <= rho0 <= table.rho_max:
        raise RangeError(f"rho0={rho0} outside table range")
    ll, le = log_metrics(inp, rho0, table.method, table.quadrature_order)
    I0 = inp.M - math.exp(ll)
    kappa = rho0 * math.exp(le)
    a = I0 - kappa * math.log2(rho0)

    def gap(r):
        return kappa * math.log2(r) + a - math.log2(1.0 + r)

    r_star = kappa / (1.0 - kappa)
    if not (r_star < rho0 and gap(r_star) > 0):
        raise ValidationError(f"no crossover of the tangent at rho0={rho0}; choose another rho0")
    alpha = brentq(gap, r_star, rho0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return RefinedParams(kappa, a, alpha, float(beta), rho0)


def refined_surrogate(params: RefinedParams, rho):
    """The three-piece surrogate of ``I_X`` the refined scheme optimizes (bits)."""
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        mid = params.kappa * np.log2(np.maximum(rho, 1e-300)) + params.a
    top = params.kappa * math.log2(params.beta) + params.a
    return np.where(rho < params.alpha, np.log2(1.0 + rho), np.where(rho < params.beta, mid, top))


def truncated_surrogate(beta: float, rho):
    rho = np.asarray(rho, dtype=float)
    return np.log2(1.0 + np.minimum(rho, beta))


# -- piecewise-linear water levels -------------------------------------------


def _wf_power(eta, inv):
    return np.maximum(eta - inv, 0.0)


def _tw_power(eta, inv, beta):
    return np.minimum(beta * inv, np.maximum(eta - inv, 0.0))


def _ref_power(eta, inv, prm: RefinedParams):
    k, al, be = prm.kappa, prm.alpha, prm.beta
    p = np.maximum(eta - inv, 0.0)
    p = np.where(eta >= (al + 1.0) * inv, al * inv, p)
    p = np.where(eta >= al * inv / k, k * eta, p)
    p = np.where(eta >= be * inv / k, be * inv, p)
    return p


def shape_power(shape: str, eta, inv, beta=None, params=None):
    """Per-block power at water level ``eta`` for the given shape ('wf', 'tw', 'ref')."""
    with np.errstate(invalid="ignore"):
        if shape == "wf":
            return _wf_power(eta, inv)
        if shape == "tw":
            return _tw_power(eta, inv, beta)
        if shape == "ref":
            return _ref_power(eta, inv, params)
    raise ValidationError(f"unknown allocation shape {shape!r}")


def shape_breakpoints(shape: str, inv, beta=None, params=None):
    if shape == "wf":
        return inv[..., None]
    if shape == "tw":
        return np.stack([inv, (beta + 1.0) * inv], axis=-1)
    if shape == "ref":
        k, al, be = params.kappa, params.alpha, params.beta
        return np.stack([inv, (al + 1.0) * inv, al * inv / k, be * inv / k], axis=-1)
    raise ValidationError(f"unknown allocation shape {shape!r}")


def shape_cap(shape: str, beta=None, params=None) -> float:
    """Received SNR at which a block stops taking power (inf for water-filling)."""
    if shape == "wf":
        return math.inf
    return float(beta if shape == "tw" else params.beta)


def _inv_gains(G):
    pos = G > 0
    with np.errstate(divide="ignore"):
        inv = np.where(pos, 1.0 / np.where(pos, G, 1.0), np.inf)
    return pos, inv


def _pwl_batch(G, P, shape, beta=None, params=None):
    G = np.atleast_2d(np.asarray(G, dtype=float))
    N, B = G.shape
    T = B * float(P)
    pos, inv = _inv_gains(G)
    cap = shape_cap(shape, beta, params)
    out = np.zeros_like(G)

    if math.isfinite(cap):
        cap_total = np.where(pos, cap * inv, 0.0).sum(axis=1)
    else:
        cap_total = np.full(N, np.inf)
    uncapped = cap_total <= T
    if np.any(uncapped):
        out[uncapped] = np.where(pos[uncapped], cap * inv[uncapped], 0.0)
    rows = np.flatnonzero(~uncapped & pos.any(axis=1))
    if len(rows) == 0:
        return out
    inv_r, pos_r = inv[rows], pos[rows]
    E = shape_breakpoints(shape, inv_r, beta, params).reshape(len(rows), -1)
    E = np.where(np.isfinite(E), E, np.nan)
    # sentinel far enough right that the total passes T (only needed without a cap)
    far = np.nanmax(E, axis=1) + T
    E = np.sort(np.concatenate([E, far[:, None]], axis=1), axis=1)  # nan sorts last
    E = np.where(np.isnan(E), far[:, None], E)
    p_at = shape_power(shape, E[:, :, None], inv_r[:, None, :], beta, params)
    S = np.where(pos_r[:, None, :], p_at, 0.0).sum(axis=2)
    k = np.maximum(np.argmax(S >= T, axis=1), 1)
    r = np.arange(len(rows))
    e0, e1 = E[r, k - 1], E[r, k]
    s0, s1 = S[r, k - 1], S[r, k]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(s1 > s0, (T - s0) / (s1 - s0), 1.0)
    eta = e0 + np.clip(frac, 0.0, 1.0) * (e1 - e0)
    p = shape_power(shape, eta[:, None], inv_r, beta, params)
    out[rows] = np.where(pos_r, p, 0.0)
    return out


def wf_batch(G, P):
    return _pwl_batch(G, P, "wf")


def tw_batch(G, P, beta):
    return _pwl_batch(G, P, "tw", beta=float(beta))


def ref_batch(G, P, params: RefinedParams):
    return _pwl_batch(G, P, "ref", params=params)


def uniform_batch(G, P):
    G = np.atleast_2d(G)
    return np.full(G.shape, float(P))


# -- mercury / water-filling --------------------------------------------------


def opt_short_batch(G, P, table, return_nu=False):
    """Mercury/water-filling for each row of ``G``.

    Returns ``(powers, saturated)``; ``saturated`` flags rows whose budget cannot
    be absorbed below the top of the table. Those rows get every block at the
    table ceiling scaled up to spend the budget (their rate is ``M`` per block
    either way).
    """
    G = np.ascontiguousarray(np.atleast_2d(G), dtype=float)
    powers, t, flag = _kernels.mercury_rows(G, G.shape[1] * float(P), table.handle(), 0, 0.0)
    sat = flag.astype(bool)
    if return_nu:
        return powers, sat, np.exp(-t)
    return powers, sat


# -- scalar front ends ---------------------------------------------------------


def _gamma(gamma) -> np.ndarray:
    g = np.asarray(gamma, dtype=float).ravel()
    if len(g) == 0 or np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValidationError("gains must be finite and nonnegative")
    return g


def _budget(P):
    if not P > 0 or math.isinf(P):
        raise ValidationError(f"power budget must be finite and > 0, got {P}")
    return float(P)


def uniform_alloc(B: int, P: float) -> PowerAllocation:
    return PowerAllocation(np.full(int(B), _budget(P)), "uniform", P)


def waterfill(gamma, P) -> PowerAllocation:
    g, P = _gamma(gamma), _budget(P)
    return PowerAllocation(wf_batch(g[None], P)[0], "wf", P, g)


def truncated_waterfill(gamma, P, beta) -> PowerAllocation:
    g, P = _gamma(gamma), _budget(P)
    if not beta > 0:
        raise ValidationError("beta must be > 0")
    return PowerAllocation(tw_batch(g[None], P, beta)[0], "tw", P, g)


def refined_truncated_waterfill(gamma, P, params: RefinedParams) -> PowerAllocation:
    g, P = _gamma(gamma), _budget(P)
    return PowerAllocation(ref_batch(g[None], P, params)[0], "ref", P, g)


def optimal_short(gamma, P, table) -> PowerAllocation:
    g, P = _gamma(gamma), _budget(P)
    p, sat = opt_short_batch(g[None], P, table)
    if sat[0] and np.any(g > 0):
        raise RangeError(f"budget P={P:g} saturates the metric table (rho_max={table.rho_max:g})")
    return PowerAllocation(p[0], "opt", P, g)


def allocate_batch(scheme: str, G, P, table=None, beta=None, params=None):
    if scheme == "uniform":
        return uniform_batch(G, P)
    if scheme == "wf":
        return wf_batch(G, P)
    if scheme == "tw":
        return tw_batch(G, P, beta)
    if scheme == "ref":
        return ref_batch(G, P, params)
    if scheme == "opt":
        return opt_short_batch(G, P, table)[0]
    raise ValidationError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")

"""Closed-form approximation ``M (1 - exp(-c1 rho^c2))^c3`` of ``I_X``.

The approximation is used by the long-term rules when a per-draw table lookup
is too expensive. ``delta_R`` is the largest amount by which it overstates the
true curve, so solving against the approximation at rate ``R + delta_R`` is
always feasible for the true channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import FitError, ValidationError

__all__ = ["MiFit", "fit_mi_approx", "fitted_mi", "default_fit_grid"]

_START = (0.77, 0.87, 1.16)


@dataclass(frozen=True)
class MiFit:
    c1: float
    c2: float
    c3: float
    M: float
    delta_R: float
    rms: float = 0.0
    label: str = ""

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3) <= 0:
            raise ValidationError("fit coefficients must be positive")
        if self.delta_R < 0:
            raise ValidationError("delta_R must be >= 0")

    def __call__(self, rho):
        return fitted_mi(self, rho)

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in ("c1", "c2", "c3", "M", "delta_R", "rms", "label")}

    @classmethod
    def from_json(cls, d: dict) -> "MiFit":
        return cls(**{k: d[k] for k in ("c1", "c2", "c3", "M", "delta_R")}, rms=d.get("rms", 0.0), label=d.get("label", ""))

    def handle(self):
        from ._kernels import pack_fit

        return pack_fit(self)


def fitted_mi(fit: MiFit, rho):
    r = np.asarray(rho, dtype=float)
    if np.any(r < 0):
        raise ValidationError("SNR must be >= 0")
    # -expm1 keeps the small-rho end accurate
    out = fit.M * (-np.expm1(-fit.c1 * r**fit.c2)) ** fit.c3
    return float(out) if out.ndim == 0 else out


def default_fit_grid(n: int = 200) -> np.ndarray:
    return np.logspace(-2, 2, n)


def _model(c, rho, M):
    return M * (-np.expm1(-c[0] * rho ** c[1])) ** c[2]


def fit_mi_approx(table, grid=None, starts: int = 8, seed: int = 0) -> MiFit:
    """Least-squares fit of ``(c1, c2, c3)`` to the tabulated ``I_X`` over ``grid``.

    ``delta_R`` is taken over the fitting grid together with every table node in
    the same range, so a sparse fitting grid cannot hide an overshoot.
    """
    grid = default_fit_grid() if grid is None else np.asarray(grid, dtype=float)
    if len(grid) < 50 or grid.min() > 0.01 * (1 + 1e-12) or grid.max() < 100 * (1 - 1e-12):
        raise ValidationError("fitting grid must span [0.01, 100] with at least 50 points")
    M = float(table.input.M)
    if math.isinf(M):
        raise ValidationError("the approximation needs a finite constellation")
    target = table.mi_at(grid)

    def resid(c):
        return _model(c, grid, M) - target

    rng = np.random.default_rng(seed)
    best = None
    for k in range(starts):
        x0 = np.array(_START) * (1.0 if k == 0 else np.exp(rng.normal(0, 0.3, 3)))
        try:
            res = least_squares(resid, x0, bounds=(1e-6, 50.0), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        except ValueError:
            continue
        if res.success and (best is None or res.cost < best.cost):
            best = res
    if best is None:
        raise FitError("least-squares fit did not converge from any start")
    c = best.x
    rho_all = np.union1d(grid, table.rho_grid[(table.rho_grid >= grid.min()) & (table.rho_grid <= grid.max())])
    dev = _model(c, rho_all, M) - table.mi_at(rho_all)
    rms = float(np.sqrt(np.mean(resid(c) ** 2)))
    return MiFit(float(c[0]), float(c[1]), float(c[2]), M, max(float(dev.max()), 0.0), rms, table.input.label)

"""Tabulated metrics with fast vectorized evaluation and inversion.

The table stores ``phi(u) = ln(-ln MMSE)`` and ``psi(u) = ln(ln M - ln L)`` on a
uniform grid in ``u = ln rho``. Both are smooth, strictly increasing and close
to linear with slope 1 at either end, so a cubic spline in ``u`` reproduces the
quadrature to ~1e-8 relative while plain linear interpolation of the raw
values would be off by several percent at high SNR.

Batch evaluators clamp at the top of the grid (where ``MMSE`` is already zero
in double precision and ``I_X == M``); scalar helpers raise ``RangeError``
instead. Below the grid the end segment is extended linearly in ``u``, which is
the exact low-SNR asymptote (``-ln MMSE`` and ``ln M - ln L`` are both
proportional to ``rho`` there).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .constellation import Constellation, GaussianInput, InputModel, input_from_json
from .errors import RangeError, ValidationError
from .metrics import LN2, PANEL_ORDER, default_method, log_metrics

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
CACHE_ENV = "BFPA_CACHE_DIR"


@dataclass(frozen=True)
class GridSpec:
    rho_min: float = 1e-4
    rho_max: float = 1e5
    n: int = 512

    def __post_init__(self):
        if not (0 < self.rho_min < self.rho_max) or self.n < 8:
            raise ValidationError(f"bad grid {self}")

    def u(self) -> np.ndarray:
        return np.linspace(math.log(self.rho_min), math.log(self.rho_max), self.n)

    def to_json(self):
        return {"rho_min": self.rho_min, "rho_max": self.rho_max, "n": self.n}


DEFAULT_GRID = GridSpec()


class _UniformCubic:
    """Cubic spline on a uniform knot vector, evaluated without a search."""

    def __init__(self, u: np.ndarray, y: np.ndarray):
        self.u0 = float(u[0])
        self.h = float(u[1] - u[0])
        self.n = len(u)
        self.u = u
        self.y = y
        self.c = CubicSpline(u, y).c  # shape (4, n-1), highest power first
        self.slope_lo = float(self.c[2, 0])

    def _locate(self, u):
        i = np.clip(np.floor((u - self.u0) / self.h).astype(np.int64), 0, self.n - 2)
        return i, u - self.u[i]

    def __call__(self, u, deriv=False):
        u = np.asarray(u, dtype=float)
        i, dx = self._locate(u)
        c0, c1, c2, c3 = self.c[0, i], self.c[1, i], self.c[2, i], self.c[3, i]
        val = ((c0 * dx + c1) * dx + c2) * dx + c3
        low = u < self.u0
        if np.any(low):
            val = np.where(low, self.y[0] + self.slope_lo * (u - self.u0), val)
        if not deriv:
            return val
        d = (3.0 * c0 * dx + 2.0 * c1) * dx + c2
        if np.any(low):
            d = np.where(low, self.slope_lo, d)
        return val, d

    def inverse(self, w):
        """Solve ``spline(u) = w`` for ``u``; ``w`` must not exceed the last node value."""
        w = np.asarray(w, dtype=float)
        i = np.clip(np.searchsorted(self.y, w, side="right") - 1, 0, self.n - 2)
        y0, y1 = self.y[i], self.y[i + 1]
        dx = self.h * (w - y0) / (y1 - y0)
        c0, c1, c2, c3 = self.c[0, i], self.c[1, i], self.c[2, i], self.c[3, i]
        for _ in range(4):
            f = ((c0 * dx + c1) * dx + c2) * dx + c3 - w
            fp = (3.0 * c0 * dx + 2.0 * c1) * dx + c2
            dx = np.clip(dx - f / fp, 0.0, self.h)
        u = self.u[i] + dx
        low = w < self.y[0]
        if np.any(low):
            u = np.where(low, self.u0 + (w - self.y[0]) / self.slope_lo, u)
        return u


class MetricTable:
    """``I_X`` and ``MMSE_X`` of one input on a log-spaced SNR grid."""

    def __init__(self, inp: Constellation, grid: GridSpec, log_loss, log_mmse, quadrature_order: int, method: str):
        self.input = inp
        self.grid = grid
        self.quadrature_order = int(quadrature_order)
        self.method = method
        self.M = inp.M
        self.log_loss = np.asarray(log_loss, dtype=float)
        self.log_mmse = np.asarray(log_mmse, dtype=float)
        u = grid.u()[: len(self.log_loss)]
        self.u_grid = u
        self.rho_grid = np.exp(u)
        self.mi = self.M * -np.expm1(self.log_loss - math.log(self.M))
        self.mmse = np.exp(self.log_mmse)
        phi = np.log(-self.log_mmse)
        psi = np.log(math.log(self.M) - self.log_loss)
        self._check(phi, psi)
        self._phi = _UniformCubic(u, phi)
        self._psi = _UniformCubic(u, psi)
        self._check_spline()
        w = np.linspace(phi[0], phi[-1], 2 * len(u))
        self._phi_inv = _UniformCubic(w, self._phi.inverse(w))
        self._handle = None

    # -- construction -----------------------------------------------------

    def _check(self, phi, psi):
        if np.any(np.diff(self.mi) < 0) or np.any(np.diff(self.mmse) > 0):
            raise RangeError(f"{self.input.label}: tabulated metrics are not monotone")
        if np.any(np.diff(phi) <= 0) or np.any(np.diff(psi) <= 0):
            raise RangeError(f"{self.input.label}: log-domain metrics are not strictly increasing")
        if not (self.mi[0] < 1e-3 * self.M and self.mmse[0] > 1 - 1e-3):
            raise ValidationError("grid must start at a low enough SNR")

    def _check_spline(self):
        uu = np.linspace(self.u_grid[0], self.u_grid[-1], 8 * len(self.u_grid))
        for sp in (self._phi, self._psi):
            if np.any(sp(uu, deriv=True)[1] <= 0):
                raise RangeError(f"{self.input.label}: interpolant lost monotonicity")

    @classmethod
    def build(cls, inp: Constellation, grid: GridSpec = DEFAULT_GRID, order: int = 32, method: str | None = None):
        method = method or default_method(inp)
        rho = np.exp(grid.u())
        vals = np.array([log_metrics(inp, r, method, order) for r in rho])
        q_order = PANEL_ORDER if method == "composite" else order
        n_ok = len(rho)
        if method == "gh":
            n_ok = _gh_valid_prefix(inp, rho, vals, order)
            if n_ok < len(rho):
                warnings.warn(
                    f"{inp.label}: Gauss-Hermite order {order} is only trusted up to rho={rho[n_ok - 1]:.3g}; "
                    "table truncated (raise the order to extend it)",
                    RuntimeWarning,
                    stacklevel=2,
                )
            if n_ok < 8:
                raise RangeError(f"{inp.label}: quadrature order {order} too low for any usable range")
        return cls(inp, grid, vals[:n_ok, 0], vals[:n_ok, 1], q_order, method)

    # -- evaluation -------------------------------------------------------

    @property
    def rho_min(self) -> float:
        return float(self.rho_grid[0])

    @property
    def rho_max(self) -> float:
        return float(self.rho_grid[-1])

    @property
    def phi_max(self) -> float:
        return float(self._phi.y[-1])

    def _u(self, rho, strict):
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0) or np.any(np.isnan(rho)):
            raise ValidationError("SNR must be >= 0")
        over = rho > self.rho_max * (1 + 1e-12)
        if strict and np.any(over):
            raise RangeError(f"SNR {rho.max():g} above table range {self.rho_max:g}")
        with np.errstate(divide="ignore"):
            u = np.log(np.minimum(rho, self.rho_max))
        return u, rho == 0

    def neglog_mmse(self, rho, strict=False):
        """``-ln MMSE_X(rho)``, the quantity the water-filling kernels work with."""
        u, zero = self._u(rho, strict)
        with np.errstate(invalid="ignore"):
            q = np.exp(self._phi(np.where(zero, 0.0, u)))
        return np.where(zero, 0.0, q)

    def mmse_at(self, rho, strict=False):
        return np.exp(-self.neglog_mmse(rho, strict))

    def mi_at(self, rho, strict=False):
        u, zero = self._u(rho, strict)
        e = np.exp(self._psi(np.where(zero, 0.0, u)))
        return np.where(zero, 0.0, self.M * -np.expm1(-e))

    def log_loss_at(self, rho, strict=False):
        """``ln(M - I_X(rho))`` in bits, without the cancellation of forming ``M - mi``."""
        u, zero = self._u(rho, strict)
        v = math.log(self.M) - np.exp(self._psi(np.where(zero, 0.0, u)))
        return np.where(zero, math.log(self.M), v)

    def mi_from_u(self, u):
        return self.M * -np.expm1(-np.exp(self._psi(u)))

    def rho_q(self, q):
        """Invert ``q = -ln MMSE(rho)``.

        Returns ``(rho, drho_dq, u)``; ``q <= 0`` maps to ``rho = 0`` and ``q``
        past the top of the table is clamped to ``rho_max`` with zero slope.
        """
        q = np.asarray(q, dtype=float)
        pos = q > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.log(np.where(pos, q, 1.0))
        top = w >= self.phi_max
        u = self._phi.inverse(np.minimum(w, self.phi_max))
        _, dphi = self._phi(u, deriv=True)
        rho = np.exp(u)
        drho = rho / (np.where(pos, q, 1.0) * dphi)
        rho = np.where(pos, rho, 0.0)
        drho = np.where(pos & ~top, drho, 0.0)
        return rho, drho, u

    def rho_from_neglog_mmse(self, q):
        return self.rho_q(q)[0]

    def rho_from_rate(self, target):
        """Vectorized ``mi_inv`` against the interpolant (clamped above the table)."""
        t = np.asarray(target, dtype=float)
        pos = t > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.log(math.log(self.M) - np.log(self.M - np.where(pos, t, 0.5)))
        u = self._psi.inverse(np.minimum(v, self._psi.y[-1]))
        return np.where(pos, np.exp(u), 0.0)

    def bracket_phi(self, w):
        return _bracket(self.u_grid, self._phi.y, w)

    def bracket_psi(self, v):
        return _bracket(self.u_grid, self._psi.y, v)

    def handle(self):
        """Tuple view of the interpolants for the compiled kernels."""
        if self._handle is None:
            from ._kernels import pack_table

            self._handle = pack_table(self)
        return self._handle

    # -- persistence ------------------------------------------------------

    def cache_key(self) -> str:
        return table_key(self.input, self.grid, self.quadrature_order, self.method)

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "input": self.input.to_json(),
            "grid": self.grid.to_json(),
            "method": self.method,
            "quadrature_order": self.quadrature_order,
            "rho_grid": self.rho_grid.tolist(),
            "mi": self.mi.tolist(),
            "mmse": self.mmse.tolist(),
            "log_loss": self.log_loss.tolist(),
            "log_mmse": self.log_mmse.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MetricTable":
        if obj.get("format_version") != FORMAT_VERSION:
            raise ValidationError(f"table format version {obj.get('format_version')!r} != {FORMAT_VERSION}")
        inp = input_from_json(obj["input"])
        return cls(inp, GridSpec(**obj["grid"]), obj["log_loss"], obj["log_mmse"], obj["quadrature_order"], obj["method"])


class GaussianTable:
    """Closed-form stand-in for a Gaussian input with the ``MetricTable`` interface."""

    method = "closed"
    quadrature_order = 0
    rho_min = 0.0
    rho_max = math.inf
    M = math.inf

    def __init__(self, inp: GaussianInput | None = None):
        self.input = inp or GaussianInput()

    def handle(self):
        from ._kernels import pack_gauss

        return pack_gauss()

    def neglog_mmse(self, rho, strict=False):
        return np.log1p(np.asarray(rho, dtype=float))

    def mmse_at(self, rho, strict=False):
        return 1.0 / (1.0 + np.asarray(rho, dtype=float))

    def mi_at(self, rho, strict=False):
        return np.log1p(np.asarray(rho, dtype=float)) / LN2

    def rho_q(self, q):
        q = np.maximum(np.asarray(q, dtype=float), 0.0)
        rho = np.expm1(q)
        with np.errstate(divide="ignore"):
            u = np.log(rho)
        return rho, np.exp(q), u

    def log_loss_at(self, rho, strict=False):
        """``ln(M - I_X(rho))`` in bits, without the cancellation of forming ``M - mi``."""
        u, zero = self._u(rho, strict)
        v = math.log(self.M) - np.exp(self._psi(np.where(zero, 0.0, u)))
        return np.where(zero, math.log(self.M), v)

    def mi_from_u(self, u):
        return np.log1p(np.exp(u)) / LN2

    def rho_from_neglog_mmse(self, q):
        return self.rho_q(q)[0]

    def rho_from_rate(self, target):
        return np.exp2(np.asarray(target, dtype=float)) - 1.0

    def mmse(self, rho):
        return 1.0 / (1.0 + float(rho))

    def mutual_information(self, rho):
        return math.log2(1.0 + float(rho))

    def cache_key(self):
        return "gaussian"


def _bracket(u, y, w):
    """Grid interval ``(u_i, u_{i+1})`` containing ``w`` in the increasing array ``y``.

    ``(None, u_0)`` below the grid, ``(u_last, None)`` above it.
    """
    if w < y[0]:
        return None, float(u[0])
    if w > y[-1]:
        return float(u[-1]), None
    i = int(np.searchsorted(y, w, side="right")) - 1
    i = min(max(i, 0), len(u) - 2)
    return float(u[i]), float(u[i + 1])


def _gh_valid_prefix(inp, rho, vals, order, tol=1e-3):
    # compare against twice the order; keep the prefix where both agree
    ref = np.array([log_metrics(inp, r, "gh", 2 * order) for r in rho])
    with np.errstate(invalid="ignore"):
        bad = (np.abs(vals - ref) > tol) | ~np.isfinite(vals)
    bad_rows = np.flatnonzero(bad.any(axis=1))
    n_ok = int(bad_rows[0]) if len(bad_rows) else len(rho)
    # monotone prefix only
    phi = np.log(-vals[:n_ok, 1])
    psi = np.log(math.log(inp.M) - vals[:n_ok, 0])
    for arr in (phi, psi):
        nd = np.flatnonzero(np.diff(arr) <= 0)
        if len(nd):
            n_ok = min(n_ok, int(nd[0]) + 1)
    return n_ok


def table_key(inp: InputModel, grid: GridSpec, order: int, method: str) -> str:
    blob = json.dumps(
        # the composite rule has a fixed panel order, so ``order`` only matters for "gh"
        [inp.digest(), grid.to_json(), int(order) if method == "gh" else 0, method, FORMAT_VERSION],
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


def cache_dir() -> Path:
    d = os.environ.get(CACHE_ENV)
    return Path(d) if d else Path.home() / ".cache" / "bfpa"


_MEMO: dict[str, object] = {}


def get_table(inp: InputModel, grid: GridSpec = DEFAULT_GRID, order: int = 32, method: str | None = None,
              use_disk: bool = True, stats: dict | None = None):
    """Return a (memoized, disk-cached) table for ``inp``.

    ``stats`` if given receives ``{"cache": "memory"|"hit"|"miss"|"rebuilt", "path": ...}``.
    """
    if isinstance(inp, GaussianInput):
        return GaussianTable(inp)
    method = method or default_method(inp)
    key = table_key(inp, grid, order, method)
    info = stats if stats is not None else {}
    if key in _MEMO:
        info["cache"] = "memory"
        return _MEMO[key]
    path = cache_dir() / f"table-{inp.label}-{key}.json"
    info["path"] = str(path)
    table = None
    if use_disk and path.exists():
        try:
            obj = json.loads(path.read_text())
            if obj.get("key") != key:
                raise ValidationError("cache key mismatch")
            table = MetricTable.from_json(obj)
            info["cache"] = "hit"
        except Exception as exc:  # noqa: BLE001 - any unreadable cache is rebuilt
            warnings.warn(f"discarding unreadable table cache {path}: {exc}", RuntimeWarning, stacklevel=2)
            info["cache"] = "rebuilt"
    if table is None:
        table = MetricTable.build(inp, grid, order, method)
        info.setdefault("cache", "miss")
        if use_disk:
            save_table(table, path, key)
    _MEMO[key] = table
    return table


def save_table(table: MetricTable, path: Path, key: str | None = None):
    obj = table.to_json()
    obj["key"] = key or table.cache_key()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(obj, sort_keys=True))
    tmp.replace(path)


def clear_memo():
    _MEMO.clear()

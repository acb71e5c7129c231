"""Monte Carlo outage estimation, SNR sweeps and SNR-exponent fits.

A draw is in outage when ``(1/B) sum_b I_X(p_b g_b) < R`` (strict). Every point
of a sweep reuses the same gain draws (common random numbers), so curves are
monotone in ``P`` by construction and schemes can be compared pairwise.

For the optimal and the capped water-filling schemes there is a cheaper route
to the same event. Each scheme spends its budget along a one-parameter family
of allocations whose rate grows with the budget, so ``P`` falls short exactly
when the mean power that family needs for rate ``R`` exceeds ``P``.
``min_power_costs`` computes those costs once and a whole curve follows from
counting.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from . import _kernels
from .errors import ValidationError
from .fading import STREAM_CALIB, STREAM_EVAL, FadingSpec, chunk_sizes, gamma_chunk
from .short_term import SCHEMES, allocate_batch

__all__ = [
    "wilson_interval",
    "OutageEstimate",
    "OutagePoint",
    "OutageCurve",
    "SlopeFit",
    "estimate_outage",
    "sweep",
    "min_power_costs",
    "dual_curve",
    "long_term_curve",
    "long_term_dual_curve",
    "fit_snr_exponent",
    "power_at_outage",
    "InsufficientPrecisionWarning",
]

CSV_COLUMNS = ("scheme", "constellation", "B", "m", "R", "P_dB", "outage", "ci_low", "ci_high", "n", "seed")
MIN_SAMPLES = 1000


class InsufficientPrecisionWarning(UserWarning):
    pass


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n <= 0:
        raise ValidationError("need n > 0")
    z = float(norm.ppf(0.5 + level / 2))
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    # clamp the rounding slop so that lo <= p <= hi holds exactly
    return max(0.0, min(mid - half, p)), min(1.0, max(mid + half, p))


def reliable(p: float, n: int, factor: float = 10.0) -> bool:
    """Estimate exceeds ``factor`` standard errors."""
    return p > 0 and p > factor * math.sqrt(p * (1 - p) / n)


@dataclass(frozen=True)
class OutageEstimate:
    estimate: float
    ci: tuple
    count: int
    n: int

    @property
    def stderr(self) -> float:
        p = self.estimate
        return math.sqrt(p * (1 - p) / self.n)


def _db(P):
    return 10.0 * math.log10(P)


def _undb(P_dB):
    return 10.0 ** (P_dB / 10.0)


def _check_n(n):
    n = int(n)
    if n < MIN_SAMPLES:
        raise ValidationError(f"need at least {MIN_SAMPLES} draws, got {n}")
    return n


def _outage_counts(scheme, G, P_list, table, R, beta, params):
    B = G.shape[1]
    H = table.handle()
    counts = []
    for P in P_list:
        p = allocate_batch(scheme, G, P, table, beta, params)
        rate = _kernels.rate_sum_rows(np.ascontiguousarray(p), G, H)
        counts.append(int(np.count_nonzero(rate < B * R)))
    return counts


def _estimate(k, n):
    return OutageEstimate(k / n, wilson_interval(k, n), k, n)


def estimate_outage(scheme, spec: FadingSpec, table, R, P, n, seed, beta=None, params=None) -> OutageEstimate:
    """Outage of a short-term scheme at per-block budget ``P`` (linear)."""
    if scheme not in SCHEMES:
        raise ValidationError(f"unknown scheme {scheme!r}")
    n = _check_n(n)
    if R >= table.input.M:
        return _estimate(n, n)
    k = 0
    for c, size in enumerate(chunk_sizes(n)):
        G = gamma_chunk(spec, seed, STREAM_EVAL, c, size)
        k += _outage_counts(scheme, G, [P], table, R, beta, params)[0]
    return _estimate(k, n)


@dataclass(frozen=True)
class OutagePoint:
    P_dB: float
    outage: float
    ci_low: float
    ci_high: float
    n: int


@dataclass
class OutageCurve:
    scheme: str
    constellation: str
    B: int
    m: float
    R: float
    seed: int
    points: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        db = [p.P_dB for p in self.points]
        if any(b <= a for a, b in zip(db, db[1:])):
            raise ValidationError("P_dB must be strictly increasing")
        for p in self.points:
            if not (0.0 <= p.ci_low <= p.outage <= p.ci_high <= 1.0):
                raise ValidationError(f"bad interval at {p.P_dB} dB")

    @property
    def P_dB(self):
        return np.array([p.P_dB for p in self.points])

    @property
    def outage(self):
        return np.array([p.outage for p in self.points])

    def rows(self):
        for p in self.points:
            yield {
                "scheme": self.scheme,
                "constellation": self.constellation,
                "B": self.B,
                "m": self.m,
                "R": self.R,
                **asdict(p),
                "seed": self.seed,
            }

    # CSV: floats are written with repr so the reader gets the same bits back
    def to_csv(self) -> str:
        buf = io.StringIO()
        for k in sorted(self.meta):
            buf.write(f"# {k}={self.meta[k]}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows():
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in CSV_COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "OutageCurve":
        meta = {}
        body = []
        for line in text.splitlines():
            if line.startswith("# "):
                k, _, v = line[2:].partition("=")
                meta[k] = v
            elif line:
                body.append(line)
        rows = list(csv.DictReader(body))
        if not rows:
            raise ValidationError("empty curve file")
        r0 = rows[0]
        pts = [
            OutagePoint(float(r["P_dB"]), float(r["outage"]), float(r["ci_low"]), float(r["ci_high"]), int(r["n"]))
            for r in rows
        ]
        return cls(r0["scheme"], r0["constellation"], int(r0["B"]), float(r0["m"]), float(r0["R"]), int(r0["seed"]), pts, meta)

    def to_json(self) -> dict:
        return {"meta": self.meta, "rows": list(self.rows())}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, d: dict) -> "OutageCurve":
        rows = d["rows"]
        r0 = rows[0]
        pts = [OutagePoint(r["P_dB"], r["outage"], r["ci_low"], r["ci_high"], r["n"]) for r in rows]
        return cls(r0["scheme"], r0["constellation"], r0["B"], r0["m"], r0["R"], r0["seed"], pts, dict(d.get("meta", {})))


def _check_grid(P_grid_dB):
    g = [float(x) for x in P_grid_dB]
    if not g:
        raise ValidationError("empty power grid")
    if any(b <= a for a, b in zip(g, g[1:])):
        raise ValidationError("power grid must be strictly increasing")
    return g


def _warn_precision(curve: OutageCurve):
    weak = [p.P_dB for p in curve.points if 0.0 < p.outage < 1.0 and not reliable(p.outage, p.n)]
    if weak:
        warnings.warn(
            f"{curve.scheme}: {len(weak)} point(s) below plain Monte Carlo precision (first at {weak[0]:g} dB); "
            "raise n rather than reading them as estimates",
            InsufficientPrecisionWarning,
            stacklevel=3,
        )


def _curve(scheme, spec, label, R, grid, counts, n, seed):
    pts = []
    for d, k in zip(grid, counts):
        e = _estimate(k, n)
        pts.append(OutagePoint(d, e.estimate, e.ci[0], e.ci[1], n))
    c = OutageCurve(scheme, label, spec.B, spec.m, float(R), int(seed), pts)
    _warn_precision(c)
    return c


# wf is left out: with a zero-power block its rate can sit on B R to within
# rounding (several saturated blocks at a Singleton discontinuity rate), and the
# two routes then split floating-point ties differently
DUAL_SCHEMES = ("opt", "tw", "ref")


def sweep(scheme, spec: FadingSpec, table, R, P_grid_dB, n, seed, beta=None, params=None,
          method: str = "direct") -> OutageCurve:
    """Outage curve on a dB grid (``P_dB = 10 log10 P``, ``P`` per block).

    All grid points and all schemes called with the same seed see the same draws.
    ``method="dual"`` counts from per-draw minimum costs instead of allocating at
    every grid point (same event, see the module docstring).
    """
    if scheme not in SCHEMES:
        raise ValidationError(f"unknown scheme {scheme!r}")
    if method not in ("direct", "dual"):
        raise ValidationError(f"unknown sweep method {method!r}")
    grid = _check_grid(P_grid_dB)
    n = _check_n(n)
    if R >= table.input.M:
        return _curve(scheme, spec, table.input.label, R, grid, [n] * len(grid), n, seed)
    if method == "dual" and scheme in DUAL_SCHEMES:
        u = min_power_costs(spec, table, R, n, seed, scheme=scheme, beta=beta, params=params)
        return dual_curve(u, spec, table, R, grid, seed, scheme=scheme)
    P_list = [_undb(d) for d in grid]
    counts = np.zeros(len(grid), dtype=np.int64)
    for c, size in enumerate(chunk_sizes(n)):
        G = gamma_chunk(spec, seed, STREAM_EVAL, c, size)
        counts += _outage_counts(scheme, G, P_list, table, R, beta, params)
    return _curve(scheme, spec, table.input.label, R, grid, counts.tolist(), n, seed)


def min_power_costs(spec: FadingSpec, table, R, n, seed, stream: int = STREAM_EVAL, scheme: str = "opt",
                    beta=None, params=None) -> np.ndarray:
    """Per-draw mean power the scheme's allocation family needs for rate ``R``.

    ``inf`` marks draws the family can never serve (a cap below the rate).
    """
    from .errors import InfeasibleError
    from .long_term import MinPowerRule, mean_power_samples

    if scheme not in DUAL_SCHEMES:
        raise ValidationError(f"no cost form for scheme {scheme!r}")
    try:
        rule = MinPowerRule(scheme, R, table, beta=beta, params=params)
    except InfeasibleError:
        # the cap is below the rate: every draw is in outage at every budget
        return np.full(int(n), np.inf)
    return mean_power_samples(spec, rule, n, seed, stream)


def dual_curve(costs, spec: FadingSpec, table, R, P_grid_dB, seed, scheme="opt") -> OutageCurve:
    """Optimal short-term curve from precomputed costs: outage at ``P`` iff cost > ``P``."""
    grid = _check_grid(P_grid_dB)
    u = np.sort(np.asarray(costs))
    n = _check_n(len(u))
    counts = [int(n - np.searchsorted(u, _undb(d), side="right")) for d in grid]
    return _curve(scheme, spec, table.input.label, R, grid, counts, n, seed)


def long_term_curve(rule, spec: FadingSpec, P_grid_dB, n, seed, n_cal=None, scheme=None) -> OutageCurve:
    """Long-term outage versus budget; one policy is calibrated per grid point.

    Calibration draws come from their own stream, so the evaluation counts are
    not biased by the threshold fit. Both cost samples are computed once.
    """
    from .long_term import mean_power_samples

    n = _check_n(n)
    n_cal = n if n_cal is None else int(n_cal)
    u_cal = mean_power_samples(spec, rule, n_cal, seed, STREAM_CALIB)
    u_eval = mean_power_samples(spec, rule, n, seed, STREAM_EVAL)
    label = rule.table.input.label if rule.table is not None else rule.fit.label
    return long_term_dual_curve(u_cal, u_eval, spec, label, rule.R, P_grid_dB, seed, scheme or "lt-" + rule.kind)


def long_term_dual_curve(u_cal, u_eval, spec: FadingSpec, label, R, P_grid_dB, seed, scheme="lt-opt") -> OutageCurve:
    """Long-term curve from precomputed calibration and evaluation costs."""
    from .long_term import _threshold

    grid = _check_grid(P_grid_dB)
    u_cal = np.sort(np.asarray(u_cal, dtype=float))
    finite = u_cal[np.isfinite(u_cal)]
    csum = np.cumsum(finite) / len(u_cal)
    u_eval = np.sort(np.asarray(u_eval, dtype=float))
    n = _check_n(len(u_eval))
    counts = []
    for d in grid:
        s, _ = _threshold(finite, csum, _undb(d))
        # boundary ties between independent continuous samples have probability zero
        counts.append(int(n - np.searchsorted(u_eval, s, side="left")))
    return _curve(scheme, spec, label, R, grid, counts, n, seed)


@dataclass(frozen=True)
class SlopeFit:
    d_hat: float
    window: tuple
    residual: float
    n_points: int
    P_dB: tuple = ()


def fit_snr_exponent(curve: OutageCurve, window=(1e-2, 1e-5), min_points: int = 4) -> SlopeFit:
    """Negated least-squares slope of ``log10(outage)`` against ``log10(P)``.

    Only points with outage inside ``window`` (either order) that sit above ten
    standard errors are used.
    """
    hi, lo = max(window), min(window)
    sel = [
        p for p in curve.points if lo <= p.outage <= hi and reliable(p.outage, p.n)
    ]
    if len(sel) < min_points:
        raise ValidationError(
            f"only {len(sel)} reliable point(s) in outage window [{lo:g}, {hi:g}]; need {min_points}"
        )
    x = np.array([p.P_dB / 10.0 for p in sel])
    y = np.log10([p.outage for p in sel])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return SlopeFit(float(-coef[0]), (hi, lo), resid, len(sel), tuple(p.P_dB for p in sel))


def power_at_outage(curve: OutageCurve, level: float) -> float:
    """dB power where the curve crosses ``level``, interpolating ``log10(outage)`` linearly in dB."""
    db, p = curve.P_dB, curve.outage
    for i in range(len(p) - 1):
        if p[i] >= level > p[i + 1]:
            if p[i + 1] == 0:
                raise ValidationError(f"crossing of {level:g} falls next to a zero estimate; refine the grid or raise n")
            y0, y1 = math.log10(p[i]), math.log10(p[i + 1])
            return float(db[i] + (math.log10(level) - y0) / (y1 - y0) * (db[i + 1] - db[i]))
    raise ValidationError(f"outage level {level:g} is not bracketed by the grid")

"""Long-term power constraint: minimum-power rules and the on/off policy.

Every rule maps a gain vector to the cheapest power vector that still carries
rate ``R`` (per block on average), and ``u = mean(power)`` is its cost. The
policy transmits with that vector whenever ``u`` is below a threshold ``s*``
chosen offline so that the average spend matches the budget, and stays silent
otherwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InfeasibleError, ValidationError
from .fading import STREAM_AUX, STREAM_CALIB, STREAM_EVAL, FadingSpec, chunk_sizes, gamma_chunk, stream_rng
from .metrics import mi_inv, mmse
from .mifit import MiFit
from .short_term import RefinedParams

__all__ = [
    "MinPowerRule",
    "LongTermPolicy",
    "LongTermResult",
    "min_power_opt",
    "min_power_tw",
    "min_power_ref",
    "min_power_with_fit",
    "calibrate_policy",
    "apply_policy",
    "long_term_outage",
    "mean_power_samples",
    "zero_outage_power",
]

POLICY_FORMAT = 1
RULE_KINDS = ("opt", "wf", "tw", "ref", "tw_approx", "ref_approx")
_BOUNDARY_MASS = 1e-9

_SHAPE = {"tw": _kernels.SHAPE_TW, "ref": _kernels.SHAPE_REF, "wf": _kernels.SHAPE_WF}


def _rows(G):
    return np.ascontiguousarray(np.atleast_2d(np.asarray(G, dtype=float)))


@dataclass(frozen=True, eq=False)
class MinPowerRule:
    """A minimum-power rule for a target rate ``R``.

    ``table`` is required for the exact kinds; the ``*_approx`` kinds solve
    against ``fit`` at the inflated rate ``R + fit.delta_R`` instead.
    """

    kind: str
    R: float
    table: object = None
    beta: float | None = None
    params: RefinedParams | None = None
    fit: MiFit | None = None

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValidationError(f"unknown rule {self.kind!r}; expected one of {RULE_KINDS}")
        if not self.R > 0:
            raise ValidationError("target rate must be > 0")
        if self.kind.endswith("_approx"):
            if self.fit is None:
                raise ValidationError(f"rule {self.kind} needs a fit")
            M = self.fit.M
        else:
            if self.table is None:
                raise ValidationError(f"rule {self.kind} needs a metric table")
            M = self.table.input.M
        if self.R + (self.fit.delta_R if self.kind.endswith("_approx") else 0.0) >= M:
            raise InfeasibleError(f"rate {self.R} (plus fit margin) is not below M={M}")
        if self.kind == "wf":
            object.__setattr__(self, "beta", math.inf)
        if self.kind.startswith("tw"):
            if self.beta is None or not self.beta > 0:
                raise ValidationError("truncated rule needs beta > 0")
        if self.kind.startswith("ref"):
            if self.params is None:
                raise ValidationError("refined rule needs RefinedParams")
        cap = self.cap
        if math.isfinite(cap):
            top = self._rate_fn(cap)
            if top < self.solve_rate * (1 - 1e-12):
                raise InfeasibleError(
                    f"per-block rate at the cap beta={cap:g} is {top:.6g} < {self.solve_rate:.6g}; raise beta"
                )

    @property
    def cap(self) -> float:
        if self.kind.startswith("tw"):
            return float(self.beta)
        if self.kind.startswith("ref"):
            return float(self.params.beta)
        return math.inf

    @property
    def solve_rate(self) -> float:
        """Per-block rate the solver targets (inflated by ``delta_R`` for fits)."""
        return self.R + (self.fit.delta_R if self.kind.endswith("_approx") else 0.0)

    def _rate_fn(self, rho):
        if self.kind.endswith("_approx"):
            return float(self.fit(rho))
        return float(self.table.mi_at(rho))

    def handle(self):
        return self.fit.handle() if self.kind.endswith("_approx") else self.table.handle()

    def powers(self, G):
        """Minimum-power vectors for every row of ``G`` (``inf`` where unreachable)."""
        G = _rows(G)
        B = G.shape[1]
        target = B * self.solve_rate
        if self.kind == "opt":
            inp = self.table.input
            q_hint = -math.log(mmse(inp, mi_inv(inp, self.R, self.table)))
            P, _, _ = _kernels.mercury_rows(G, target, self.table.handle(), 1, q_hint)
            return P
        shape = _SHAPE[self.kind.split("_")[0]]
        if shape == _kernels.SHAPE_REF:
            p = self.params
            P, _, _ = _kernels.shape_rate_rows(G, target, self.handle(), shape, p.beta, p.kappa, p.alpha)
        else:
            beta = float(self.beta) if self.beta is not None else math.inf
            P, _, _ = _kernels.shape_rate_rows(G, target, self.handle(), shape, beta, 1.0, 1.0)
        return P

    def mean_power(self, G):
        return self.powers(G).mean(axis=1)

    def to_json(self) -> dict:
        d = {"kind": self.kind, "R": self.R}
        if self.table is not None:
            d["input"] = self.table.input.to_json()
            d["table_key"] = self.table.cache_key()
        if self.beta is not None:
            d["beta"] = self.beta
        if self.params is not None:
            d["params"] = self.params.to_json()
        if self.fit is not None:
            d["fit"] = self.fit.to_json()
        return d


def _one(gamma):
    g = np.asarray(gamma, dtype=float).ravel()
    if len(g) == 0 or np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValidationError("gains must be finite and nonnegative")
    if not np.any(g > 0):
        raise InfeasibleError("no block has a positive gain")
    return g[None, :]


def min_power_opt(gamma, R, table) -> np.ndarray:
    return MinPowerRule("opt", R, table).powers(_one(gamma))[0]


def min_power_tw(gamma, R, beta, table) -> np.ndarray:
    return MinPowerRule("tw", R, table, beta=beta).powers(_one(gamma))[0]


def min_power_ref(gamma, R, params: RefinedParams, table) -> np.ndarray:
    return MinPowerRule("ref", R, table, params=params).powers(_one(gamma))[0]


def min_power_with_fit(gamma, R, rule_shape: str, fit: MiFit, beta=None, params=None) -> np.ndarray:
    """``rule_shape`` is ``"tw"`` or ``"ref"``; the rate equation uses the fit at ``R + delta_R``."""
    if rule_shape not in ("tw", "ref"):
        raise ValidationError("fit variants exist for 'tw' and 'ref' only")
    return MinPowerRule(rule_shape + "_approx", R, beta=beta, params=params, fit=fit).powers(_one(gamma))[0]


# -- policy ----------------------------------------------------------------------


def mean_power_samples(spec: FadingSpec, rule: MinPowerRule, n: int, seed: int, stream: int = STREAM_CALIB):
    """``u_i = mean(rule(gamma_i))`` for ``n`` draws of one logical stream."""
    out = np.empty(int(n))
    i = 0
    for c, k in enumerate(chunk_sizes(n)):
        out[i : i + k] = rule.mean_power(gamma_chunk(spec, seed, stream, c, k))
        i += k
    return out


@dataclass(frozen=True, eq=False)
class LongTermPolicy:
    rule: MinPowerRule
    s_star: float
    w_star: float
    P_budget: float
    calibration_n: int
    seed: int
    spec: FadingSpec = field(default_factory=FadingSpec)

    def __post_init__(self):
        if not 0.0 <= self.w_star <= 1.0:
            raise ValidationError("w_star must lie in [0, 1]")

    def to_json(self) -> dict:
        return {
            "format_version": POLICY_FORMAT,
            "rule": self.rule.to_json(),
            "s_star": "inf" if math.isinf(self.s_star) else self.s_star,
            "w_star": self.w_star,
            "P": self.P_budget,
            "n": self.calibration_n,
            "seed": self.seed,
            "m": self.spec.m,
            "B": self.spec.B,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


def threshold_from_samples(u, P, presorted: bool = False):
    """``(s*, w*)`` from the empirical partial-mean function of the costs ``u``.

    ``Phat(s) = mean(u * 1{u < s})`` and ``s* = sup{s : Phat(s) < P}``. With the
    costs sorted, ``s*`` is the first cost whose inclusion brings the prefix mean
    to ``P``; ties at ``s*`` form the boundary atom that ``w*`` splits.
    """
    u = np.asarray(u, dtype=float) if presorted else np.sort(np.asarray(u, dtype=float))
    finite = u[np.isfinite(u)]
    return _threshold(finite, np.cumsum(finite) / len(u), P)


def _threshold(finite, csum, P):
    # finite: sorted finite costs; csum: their prefix sums over the full sample size
    if len(finite) == 0 or csum[-1] < P:
        return math.inf, 1.0
    k = int(np.searchsorted(csum, P, side="left"))
    s = float(finite[k])
    lo = int(np.searchsorted(finite, s, side="left"))
    hi = int(np.searchsorted(finite, s, side="right"))
    below = csum[lo - 1] if lo > 0 else 0.0
    upto = csum[hi - 1]
    mass = upto - below
    if mass < _BOUNDARY_MASS:
        return s, 1.0
    return s, float(min(max((P - below) / mass, 0.0), 1.0))


def calibrate_policy(spec: FadingSpec, rule: MinPowerRule, P: float, n: int, seed: int) -> LongTermPolicy:
    if not P > 0:
        raise ValidationError("long-term budget must be > 0")
    u = mean_power_samples(spec, rule, n, seed, STREAM_CALIB)
    s, w = threshold_from_samples(u, P)
    return LongTermPolicy(rule, s, w, float(P), int(n), int(seed), spec)


def _decide(u, s_star, w_star, rng):
    tx = u < s_star
    edge = u == s_star
    if np.any(edge):
        tx |= edge & (rng.random(len(u)) < w_star)
    return tx


def apply_policy(gamma, policy: LongTermPolicy, rng=None):
    """``(transmit, powers)`` for one gain vector; silent draws get zero power."""
    g = _one(gamma)
    p = policy.rule.powers(g)[0]
    u = np.array([p.mean()])
    rng = rng or np.random.default_rng()
    tx = bool(_decide(u, policy.s_star, policy.w_star, rng)[0])
    return tx, (p if tx else np.zeros_like(p))


@dataclass(frozen=True)
class LongTermResult:
    outage: float
    ci: tuple
    mean_power: float
    power_se: float
    n: int


def long_term_outage(policy: LongTermPolicy, n: int, seed: int, spec: FadingSpec | None = None) -> LongTermResult:
    """Outage and spend of ``policy`` on fresh draws (the evaluation stream).

    A transmission always meets the rate, so outage is the silent fraction.
    """
    from .outage import wilson_interval

    spec = spec or policy.spec
    n = int(n)
    silent = 0
    s1 = 0.0
    s2 = 0.0
    for c, k in enumerate(chunk_sizes(n)):
        G = gamma_chunk(spec, seed, STREAM_EVAL, c, k)
        u = policy.rule.mean_power(G)
        aux = stream_rng(seed, STREAM_AUX, c)
        tx = _decide(u, policy.s_star, policy.w_star, aux)
        spent = np.where(tx, u, 0.0)
        silent += int(k - tx.sum())
        s1 += float(spent.sum())
        s2 += float((spent * spent).sum())
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0)
    return LongTermResult(silent / n, wilson_interval(silent, n), mean, math.sqrt(var / n), n)


def zero_outage_power(spec: FadingSpec, rule: MinPowerRule, n: int, seed: int) -> float:
    """Empirical ``E[u]``: any budget above it calibrates to ``s* = inf``."""
    u = mean_power_samples(spec, rule, n, seed, STREAM_CALIB)
    if not np.all(np.isfinite(u)):
        return math.inf
    return float(u.mean())

"""Acceptance criteria 1-12, one test each; heavy Monte Carlo lives here.

Every test records a ``CRITERION k: PASS|FAIL ...`` line before asserting, and
the lines are printed in the terminal summary.
"""

import json
import math
import warnings

import numpy as np
import pytest

from bfpa import cli
from bfpa.constellation import make_psk
from bfpa.fading import STREAM_CALIB, FadingSpec
from bfpa.long_term import (
    MinPowerRule,
    calibrate_policy,
    long_term_outage,
    mean_power_samples,
    threshold_from_samples,
    LongTermPolicy,
)
from bfpa.metrics import log_metrics
from bfpa.mifit import default_fit_grid, fit_mi_approx
from bfpa.outage import (
    InsufficientPrecisionWarning,
    dual_curve,
    fit_snr_exponent,
    long_term_dual_curve,
    min_power_costs,
    power_at_outage,
    reliable,
    sweep,
)
from bfpa.short_term import beta_R, d_beta, opt_short_batch, singleton_bound, tangent_params

from oracles import mc_metrics

pytestmark = pytest.mark.slow

SEED = 11
N7 = 10_000_000
SPEC = FadingSpec(1.0, 4)


def record(log, k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    log.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def costs_m1(qpsk):
    # per-draw minimum mean power for R=1; shared by the short- and long-term checks
    return min_power_costs(SPEC, qpsk, 1.0, N7, SEED)


def test_c1_metric_oracles(qpsk, acceptance_log):
    pts = make_psk(2).points
    worst = 0.0
    for i, rho in enumerate((0.5, 1.0, 2.0, 3.0, 5.0, 10.0)):
        I, E = mc_metrics(pts, rho, N7, seed=100 + i)
        worst = max(worst, abs(I - qpsk.mi_at(rho)), abs(E - qpsk.mmse_at(rho)))
    ok = worst < 1e-3
    record(acceptance_log, 1, ok, f"max |quadrature - MC| = {worst:.2e} (tol 1e-3)")
    assert ok


def test_c2_i_mmse(qpsk, bpsk, qam16, acceptance_log):
    rho = np.logspace(-2, 2, 100)
    worst = 0.0
    for t in (qpsk, bpsk, qam16):
        h = 1e-5 * rho
        dI = (t.mi_at(rho + h) - t.mi_at(rho - h)) / (2 * h) * math.log(2)
        worst = max(worst, float(np.max(np.abs(dI - t.mmse_at(rho)))))
    ok = worst < 1e-3
    record(acceptance_log, 2, ok, f"max |dI/drho (nats) - MMSE| = {worst:.2e} over 100 points x 3 inputs")
    assert ok


def test_c3_fit(qpsk, acceptance_log):
    f = fit_mi_approx(qpsk)
    g = default_fit_grid(1000)
    rms = float(np.sqrt(np.mean((f(g) - qpsk.mi_at(g)) ** 2)))
    ok = f.delta_R <= 0.007 and rms <= 0.01
    record(acceptance_log, 3, ok, f"c=({f.c1:.4f}, {f.c2:.4f}, {f.c3:.4f}) delta_R={f.delta_R:.5f} rms={rms:.5f}")
    assert ok


def test_c4_tangent_parameters(qpsk, acceptance_log):
    p = tangent_params(qpsk, 3.0)
    ref = (0.3528, 1.1327, 1.585)
    got = (p.kappa, p.a, p.alpha)
    err = max(abs(x - y) for x, y in zip(got, ref))
    ok = err <= 1e-3
    record(acceptance_log, 4, ok,
           f"kappa={p.kappa:.6f} a={p.a:.6f} alpha={p.alpha:.6f} vs {ref}, max err {err:.3g} (tol 1e-3)")
    assert ok


def test_c5_kkt(qpsk, acceptance_log):
    G = np.random.default_rng(SEED).exponential(size=(10_000, 4))
    P = 2.0
    p, sat, nu = opt_short_batch(G, P, qpsk, return_nu=True)
    act = p > 0
    kkt = float(np.max(np.abs(G * qpsk.mmse_at(p * G) / nu[:, None] - 1)[act]))
    budget = float(np.max(np.abs(p.sum(1) - 4 * P)) / (4 * P))
    # forward quadrature on a subsample, independent of the table
    sub = 0.0
    for i in range(200):
        for b in np.flatnonzero(act[i]):
            sub = max(sub, abs(G[i, b] * math.exp(log_metrics(qpsk.input, p[i, b] * G[i, b])[1]) / nu[i] - 1))
    # B=2 grid search on the budget line
    g = np.array([0.8, 0.25])
    best = qpsk.mi_at(opt_short_batch(g[None], 1.5, qpsk)[0][0] * g).sum()
    p1 = np.linspace(0, 3.0, 30_001)
    vals = qpsk.mi_at(p1 * g[0]) + qpsk.mi_at((3.0 - p1) * g[1])
    gap = float(vals.max() - best)
    ok = kkt < 1e-6 and sub < 1e-6 and budget < 1e-9 and gap <= 1e-3 and not sat.any()
    record(acceptance_log, 5, ok, f"KKT rel {kkt:.1e} (quadrature {sub:.1e}), budget {budget:.1e}, B=2 gap {gap:.1e}")
    assert ok


def test_c6_diversity(qpsk, costs_m1, acceptance_log):
    c1 = dual_curve(costs_m1, SPEC, qpsk, 1.0, np.arange(0, 30.01, 1.0), SEED)
    f1 = fit_snr_exponent(c1, (1e-2, 1e-5))
    u2 = min_power_costs(FadingSpec(2.0, 4), qpsk, 1.0, N7, SEED)
    c2 = dual_curve(u2, FadingSpec(2.0, 4), qpsk, 1.0, np.arange(0, 20.01, 0.5), SEED)
    f2 = fit_snr_exponent(c2, (1e-2, 1e-5))
    ok = abs(f1.d_hat - 3.0) <= 0.4 and abs(f2.d_hat - 6.0) <= 0.8
    record(acceptance_log, 6, ok,
           f"m=1 d_hat={f1.d_hat:.3f} ({f1.n_points} pts), m=2 d_hat={f2.d_hat:.3f} ({f2.n_points} pts)")
    assert ok


def test_c7_truncated_bracket(qpsk, acceptance_log):
    R = 0.9
    beta = beta_R(qpsk, 4, R)
    u = min_power_costs(SPEC, qpsk, R, N7, SEED, scheme="tw", beta=beta)
    f = fit_snr_exponent(dual_curve(u, SPEC, qpsk, R, np.arange(0, 30.01, 1.0), SEED, scheme="tw"))
    lo, hi = d_beta(4, R, float(qpsk.mi_at(beta))) - 0.4, singleton_bound(4, R, 2.0) + 0.4
    ok = lo <= f.d_hat <= hi
    record(acceptance_log, 7, ok, f"beta=beta_R={beta:.4f}: d_hat={f.d_hat:.3f}, bracket [{lo:.1f}, {hi:.1f}]")
    assert ok


def test_c8_ordering(qpsk, acceptance_log):
    R, beta, n = 1.5, 15.0, 1_000_000
    grid = np.arange(0, 30.01, 0.5)
    prm = tangent_params(qpsk, 3.0, beta)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", InsufficientPrecisionWarning)
        c = {
            "opt": sweep("opt", SPEC, qpsk, R, grid, n, SEED, method="dual"),
            "ref": sweep("ref", SPEC, qpsk, R, grid, n, SEED, params=prm, method="dual"),
            "tw": sweep("tw", SPEC, qpsk, R, grid, n, SEED, beta=beta, method="dual"),
            "uniform": sweep("uniform", SPEC, qpsk, R, grid, n, SEED),
        }
    order = ("opt", "ref", "tw", "uniform")
    broken = {}
    checked = 0
    for i, db in enumerate(grid):
        vals = [c[s].outage[i] for s in order]
        if all(reliable(v, n) for v in vals):
            checked += 1
            for (sa, a), (sb, b) in zip(zip(order, vals), zip(order[1:], vals[1:])):
                if b < a:
                    broken.setdefault(f"{sa}>{sb}", []).append(float(db))
    bad = {k: f"{len(v)} pts in [{min(v):g}, {max(v):g}] dB" for k, v in broken.items()}
    gap = power_at_outage(c["ref"], 1e-3) - power_at_outage(c["opt"], 1e-3)
    ok = not bad and checked > 0 and gap <= 0.5
    record(acceptance_log, 8, ok, f"{checked} reliable points, ordering violations {bad or 'none'}; "
           f"ref-opt gap at 1e-3 = {gap:.3f} dB (tol 0.5)")
    assert ok


def test_c9_zero_outage(qpsk, acceptance_log):
    rule = MinPowerRule("opt", 1.0, qpsk)
    u = np.sort(mean_power_samples(SPEC, rule, 1_000_000, SEED, STREAM_CALIB))
    # the smallest budget the calibration serves without any silence
    P = float(u.sum() / len(u)) * (1 + 1e-9)
    pol = calibrate_policy(SPEC, rule, P, 1_000_000, SEED)
    res = long_term_outage(pol, 1_000_000, SEED)
    ok = math.isinf(pol.s_star) and math.isfinite(P) and res.mean_power <= 1.01 * P and res.outage == 0.0
    record(acceptance_log, 9, ok,
           f"P={P:.4f} ({10 * math.log10(P):.2f} dB), s*={pol.s_star}, spent {res.mean_power:.4f}, outage {res.outage}")
    assert ok


def test_c10_short_vs_long_gain(qpsk, costs_m1, acceptance_log):
    st = dual_curve(costs_m1, SPEC, qpsk, 1.0, np.arange(10, 20.01, 0.1), SEED)
    rule = MinPowerRule("opt", 1.0, qpsk)
    u_cal = mean_power_samples(SPEC, rule, N7, SEED, STREAM_CALIB)
    # the long-term curve falls steeply just below the zero-outage budget
    lt = long_term_dual_curve(u_cal, costs_m1, SPEC, "qpsk", 1.0, np.arange(1.0, 2.6, 0.001), SEED)
    gain = power_at_outage(st, 1e-4) - power_at_outage(lt, 1e-4)
    ok = abs(gain - 12.0) <= 2.0
    record(acceptance_log, 10, ok, f"gain at 1e-4 = {gain:.2f} dB (target 12 +/- 2)")
    assert ok


def test_c11_budget_identity(qpsk, acceptance_log):
    rule = MinPowerRule("opt", 1.0, qpsk)
    u_cal = np.sort(mean_power_samples(SPEC, rule, 4_000_000, SEED, STREAM_CALIB))
    P0 = float(u_cal.mean())
    details = []
    ok = True
    for frac in (0.6, 0.9, 0.99):
        P = frac * P0
        s, w = threshold_from_samples(u_cal, P, presorted=True)
        pol = LongTermPolicy(rule, s, w, P, len(u_cal), SEED, SPEC)
        res = long_term_outage(pol, 1_000_000, SEED)
        z = (res.mean_power - P) / res.power_se
        ok &= abs(z) <= 3 and math.isfinite(s)
        details.append(f"{frac:.2f}P0: outage {res.outage:.2e}, z={z:+.2f}")
    record(acceptance_log, 11, ok, "; ".join(details))
    assert ok


def test_c12_determinism(tmp_path, acceptance_log, capsys):
    cfg = {
        "constellation": "qpsk", "B": 4, "R": 1.0, "n": 20_000, "n_calibration": 40_000, "seed": 5,
        "P_dB": "0:15:1.5", "P_budget_dB": 1.0, "reference_P_dB": 8.0,
        "schemes": ["uniform", "wf", "opt", {"name": "tw", "beta": 5.0}, {"name": "ref", "beta": 15.0},
                    "lt-opt", {"name": "lt-tw", "beta": 3.0, "use_fit": True}, {"name": "lt-ref", "beta": 5.5}],
    }
    out = tmp_path / "out"
    cfg["output"] = str(out)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))

    def run_all():
        for cmd in ("sweep", "calibrate", "fit"):
            assert cli.main([cmd, "--config", str(path)]) == 0
        assert cli.main(["beta-search", "--config", str(path), "--R", "0.9"]) == 0
        capsys.readouterr()
        return {p.name: p.read_bytes() for p in sorted(out.iterdir())}

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = run_all()
        b = run_all()
    ok = a == b and len(a) >= 19
    record(acceptance_log, 12, ok, f"{len(a)} output files identical across reruns")
    assert ok

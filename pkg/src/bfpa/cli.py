"""Command line front end: ``bfpa {table,sweep,calibrate,beta-search,fit}``.

Exit codes: 0 success, 2 validation error, 3 numeric range error.
Tables are cached under ``$BFPA_CACHE_DIR`` (default ``~/.cache/bfpa``).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .config import ExperimentConfig, SchemeConfig
from .errors import FitError, RangeError, ValidationError
from .fading import STREAM_EVAL, chunk_sizes, gamma_chunk
from .long_term import MinPowerRule, calibrate_policy
from .mifit import fit_mi_approx
from .outage import dual_curve, long_term_curve, min_power_costs, sweep
from .short_term import beta_R, tangent_params, tw_batch
from .table import get_table

AXIS_NOTE = "P_dB = 10*log10(P), P = per-block average transmit power (short-term budget B*P per codeword)"


def _meta(cfg: ExperimentConfig, **extra) -> dict:
    d = {"config_hash": cfg.digest(), "seed": cfg.seed, "version": __version__, "axis": AXIS_NOTE}
    d.update(extra)
    return d


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _table(cfg, stats=None):
    return get_table(cfg.input, order=cfg.quadrature_order, stats=stats)


def _check_rate(cfg, table):
    from .errors import InfeasibleError

    if cfg.R >= table.input.M:
        raise InfeasibleError(f"R={cfg.R} is not below M={table.input.M}; every draw is in outage")


def _refined(table, sc: SchemeConfig):
    return tangent_params(table, sc.rho0, sc.beta)


def long_term_rule(cfg, table, sc: SchemeConfig) -> MinPowerRule:
    kind = sc.name[3:]
    if kind == "opt":
        return MinPowerRule("opt", cfg.R, table)
    fit = fit_mi_approx(table) if sc.use_fit else None
    name = kind + ("_approx" if sc.use_fit else "")
    if kind == "tw":
        return MinPowerRule(name, cfg.R, None if sc.use_fit else table, beta=sc.beta, fit=fit)
    return MinPowerRule(name, cfg.R, None if sc.use_fit else table, params=_refined(table, sc), fit=fit)


# -- subcommands -----------------------------------------------------------------


def cmd_table(cfg: ExperimentConfig, out=None) -> dict:
    stats = {}
    t = _table(cfg, stats)
    info = {"input": t.input.label, "method": t.method, "cache": stats.get("cache", "closed-form")}
    if hasattr(t, "rho_grid"):
        rho = t.rho_grid
        interior = slice(1, len(rho) - 1)
        # I-MMSE check on the stored nodes: central difference in u = ln rho
        u = t.u_grid
        dI = np.gradient(t.mi * np.log(2.0), u)[interior] / rho[interior]
        info.update(
            path=stats.get("path"),
            n=len(rho),
            rho_min=float(rho[0]),
            rho_max=float(rho[-1]),
            mi_range=[float(t.mi[0]), float(t.mi[-1])],
            mmse_range=[float(t.mmse[-1]), float(t.mmse[0])],
            immse_max_abs_err=float(np.max(np.abs(dI - t.mmse[interior]))),
        )
    print(_dump(info), end="", file=out or sys.stdout)
    return info


def _sweep_one(cfg, table, sc: SchemeConfig, costs):
    spec = cfg.spec
    if sc.name.startswith("lt-"):
        rule = long_term_rule(cfg, table, sc)
        return long_term_curve(rule, spec, cfg.P_dB, cfg.n, cfg.seed, cfg.n_calibration, scheme=sc.key)
    if sc.name == "opt" and cfg.sweep_method == "dual":
        return dual_curve(costs(), spec, table, cfg.R, cfg.P_dB, cfg.seed, scheme=sc.key)
    params = _refined(table, sc) if sc.name == "ref" else None
    c = sweep(sc.name, spec, table, cfg.R, cfg.P_dB, cfg.n, cfg.seed, beta=sc.beta, params=params,
              method=cfg.sweep_method)
    c.scheme = sc.key
    return c


def cmd_sweep(cfg: ExperimentConfig) -> list[Path]:
    table = _table(cfg)
    _check_rate(cfg, table)
    cache = {}

    def costs():
        if "u" not in cache:
            cache["u"] = min_power_costs(cfg.spec, table, cfg.R, cfg.n, cfg.seed, STREAM_EVAL)
        return cache["u"]

    written = []
    for sc in cfg.schemes:
        curve = _sweep_one(cfg, table, sc, costs)
        curve.meta = _meta(cfg, scheme_params=json.dumps({"beta": sc.beta, "rho0": sc.rho0, "use_fit": sc.use_fit}))
        # not with_suffix: keys such as "ref_b5.5" already contain a dot
        csv_path = Path(cfg.output) / f"{sc.key}.csv"
        json_path = Path(cfg.output) / f"{sc.key}.json"
        _write(csv_path, curve.to_csv())
        _write(json_path, curve.dumps() + "\n")
        written += [csv_path, json_path]
    return written


def cmd_calibrate(cfg: ExperimentConfig) -> Path:
    lts = [s for s in cfg.schemes if s.name.startswith("lt-")]
    if not lts:
        raise ValidationError("calibrate needs a long-term scheme (lt-opt, lt-tw or lt-ref)")
    if cfg.P_budget_dB is None:
        raise ValidationError("calibrate needs P_budget_dB")
    table = _table(cfg)
    _check_rate(cfg, table)
    sc = lts[0]
    rule = long_term_rule(cfg, table, sc)
    n = cfg.n_calibration or cfg.n
    pol = calibrate_policy(cfg.spec, rule, 10.0 ** (cfg.P_budget_dB / 10.0), n, cfg.seed)
    obj = pol.to_json()
    obj["meta"] = _meta(cfg, scheme=sc.key, P_budget_dB=cfg.P_budget_dB)
    path = Path(cfg.output) / f"policy_{sc.key}.json"
    _write(path, _dump(obj))
    return path


def beta_search(cfg: ExperimentConfig, table=None) -> dict:
    """Truncated water-filling outage over a beta grid at one reference SNR.

    All betas see the same draws; the report includes the paired difference
    between the winner and the runner-up.
    """
    table = table or _table(cfg)
    _check_rate(cfg, table)
    B, R = cfg.B, cfg.R
    bR = beta_R(table, B, R)
    ref_dB = cfg.reference_P_dB if cfg.reference_P_dB is not None else cfg.P_dB[len(cfg.P_dB) // 2]
    rep = {"B": B, "R": R, "constellation": table.input.label, "reference_P_dB": ref_dB}
    if math.isinf(bR):
        rep.update(beta_R="inf", status="unbounded", message="beta unbounded at this rate; use the refined scheme")
        return rep
    grid = sorted(cfg.beta_grid) if cfg.beta_grid else [bR * f for f in (1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)]
    low = [b for b in grid if b < bR * (1 - 1e-12)]
    if low:
        raise ValidationError(f"beta grid entries {low} are below beta_R={bR:.6g}")
    P = 10.0 ** (ref_dB / 10.0)
    H = table.handle()
    K = len(grid)
    counts = np.zeros(K, dtype=np.int64)
    disc = np.zeros((K, K), dtype=np.int64)  # disc[i, j]: i in outage, j not
    for c, size in enumerate(chunk_sizes(cfg.n)):
        G = gamma_chunk(cfg.spec, cfg.seed, STREAM_EVAL, c, size)
        out = np.empty((K, size), dtype=bool)
        for i, b in enumerate(grid):
            out[i] = _kernels.rate_sum_rows(tw_batch(G, P, b), G, H) < B * R
        counts += out.sum(axis=1)
        o = out.astype(np.int64)
        disc += o @ (1 - o).T
    n = cfg.n
    best = int(np.argmin(counts))
    rows = [{"beta": b, "outage": int(k) / n} for b, k in zip(grid, counts)]
    rep.update(beta_R=bR, status="ok", grid=rows, recommended_beta=grid[best], n=n, seed=cfg.seed)
    if K > 1:
        order = np.argsort(counts, kind="stable")
        j = int(order[1]) if int(order[0]) == best else int(order[0])
        d = (disc[j, best] - disc[best, j]) / n
        var = ((disc[j, best] + disc[best, j]) / n - d * d) / n
        rep["runner_up"] = {"beta": grid[j], "paired_diff": d, "paired_se": math.sqrt(max(var, 0.0))}
    return rep


def cmd_beta_search(cfg: ExperimentConfig) -> Path:
    rep = beta_search(cfg)
    rep["meta"] = _meta(cfg)
    path = Path(cfg.output) / "beta_search.json"
    _write(path, _dump(rep))
    if rep["status"] == "unbounded":
        print(rep["message"], file=sys.stderr)
    return path


def cmd_fit(cfg: ExperimentConfig) -> Path:
    table = _table(cfg)
    fit = fit_mi_approx(table)
    obj = fit.to_json()
    obj["meta"] = _meta(cfg)
    path = Path(cfg.output) / f"fit_{table.input.label}.json"
    _write(path, _dump(obj))
    return path


# -- argument handling -----------------------------------------------------------


def _scheme_token(tok: str) -> dict:
    # name[:beta][:fit], e.g. "tw:15" or "lt-ref:5.5:fit"
    parts = tok.strip().split(":")
    d = {"name": parts[0]}
    for p in parts[1:]:
        if p == "fit":
            d["use_fit"] = True
        else:
            try:
                d["beta"] = float(p)
            except ValueError as e:
                raise ValidationError(f"bad scheme token {tok!r}") from e
    return d


def _parser():
    ap = argparse.ArgumentParser(prog="bfpa", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("table", "sweep", "calibrate", "beta-search", "fit"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config; flags given here override it")
        p.add_argument("--constellation")
        p.add_argument("--m", type=float)
        p.add_argument("--B", type=int)
        p.add_argument("--R", type=float)
        p.add_argument("--n", type=int)
        p.add_argument("--n-calibration", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", dest="output")
        p.add_argument("--P-dB", help="start:stop:step or comma list")
        p.add_argument("--schemes", help="comma list, e.g. opt,tw:15,ref:15,lt-opt")
        p.add_argument("--P-budget-dB", type=float)
        p.add_argument("--beta-grid", help="comma list")
        p.add_argument("--reference-P-dB", type=float)
        p.add_argument("--sweep-method", choices=("dual", "direct"))
        p.add_argument("--quadrature-order", type=int)
    return ap


def config_from_args(args) -> ExperimentConfig:
    over = {
        k: getattr(args, k)
        for k in ("constellation", "m", "B", "R", "n", "n_calibration", "seed", "output", "P_budget_dB",
                  "reference_P_dB", "sweep_method", "quadrature_order")
    }
    if args.P_dB is not None:
        over["P_dB"] = args.P_dB if ":" in args.P_dB else [float(x) for x in args.P_dB.split(",")]
    if args.schemes is not None:
        over["schemes"] = [_scheme_token(t) for t in args.schemes.split(",") if t.strip()]
    if args.beta_grid is not None:
        over["beta_grid"] = [float(x) for x in args.beta_grid.split(",")]
    return ExperimentConfig.load(args.config, over)


_COMMANDS = {
    "table": cmd_table,
    "sweep": cmd_sweep,
    "calibrate": cmd_calibrate,
    "beta-search": cmd_beta_search,
    "fit": cmd_fit,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            res = _COMMANDS[args.cmd](cfg)
    except ValidationError as e:
        print(f"bfpa: error: {e}", file=sys.stderr)
        return 2
    except (RangeError, FitError) as e:
        print(f"bfpa: numeric error: {e}", file=sys.stderr)
        return 3
    if isinstance(res, list):
        for p in res:
            print(p)
    elif isinstance(res, Path):
        print(res)
    return 0


if __name__ == "__main__":
    sys.exit(main())

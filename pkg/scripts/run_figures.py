"""Regenerate the outage-curve data sets behind the four comparison figures.

Each figure is a list of ExperimentConfig runs written as CSV/JSON under
``--out/figN``. Plotting is left to whatever tool reads the CSVs.

    python scripts/run_figures.py --figure 1 --n 1000000
"""

import argparse
import json
import math
import sys
from pathlib import Path

from bfpa.cli import beta_search, cmd_sweep
from bfpa.config import ExperimentConfig
from bfpa.short_term import beta_R
from bfpa.table import get_table

RATES = (0.5, 0.9, 1.4, 1.7)


def fig1(n, seed, out):
    """Short-term: optimal vs truncated water-filling (beta picked by search) vs uniform."""
    table = get_table(ExperimentConfig().input)
    runs = []
    for R in RATES:
        base = dict(R=R, n=n, seed=seed, P_dB="0:30:1", output=str(out / f"R{R:g}"))
        schemes = ["opt", "uniform", "wf"]
        if math.isfinite(beta_R(table, 4, R)):
            rep = beta_search(ExperimentConfig(**(base | {"n": min(n, 200_000)}), reference_P_dB=15.0), table)
            schemes.append({"name": "tw", "beta": rep["recommended_beta"]})
        else:
            print(f"R={R}: Singleton discontinuity, no finite beta keeps full diversity", file=sys.stderr)
        runs.append(ExperimentConfig(**base, schemes=schemes))
    return runs


def fig2(n, seed, out):
    """Refined vs plain truncated water-filling at beta = 15."""
    return [
        ExperimentConfig(R=R, n=n, seed=seed, P_dB="0:30:1", output=str(out / f"R{R:g}"),
                         schemes=["opt", {"name": "tw", "beta": 15.0}, {"name": "ref", "beta": 15.0}])
        for R in RATES
    ]


def fig3(n, seed, out):
    """Long-term rules, exact and with the closed-form approximation."""
    return [
        ExperimentConfig(R=1.0, n=n, n_calibration=4 * n, seed=seed, P_dB="-6:6:0.5", output=str(out),
                         schemes=["lt-opt", {"name": "lt-tw", "beta": 3.0}, {"name": "lt-tw", "beta": 3.0, "use_fit": True},
                                  {"name": "lt-ref", "beta": 5.5}, {"name": "lt-ref", "beta": 5.5, "use_fit": True}])
    ]


def fig4(n, seed, out):
    """Short- vs long-term optimal allocation, QPSK and Gaussian inputs."""
    return [
        ExperimentConfig(constellation=c, R=1.0, n=n, n_calibration=n, seed=seed, P_dB="-6:30:0.5",
                         output=str(out / c), schemes=["opt", "lt-opt"])
        for c in ("qpsk", "gaussian")
    ]


FIGURES = {1: fig1, 2: fig2, 3: fig3, 4: fig4}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--figure", type=int, choices=sorted(FIGURES), action="append")
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="results")
    args = ap.parse_args(argv)
    for k in args.figure or sorted(FIGURES):
        out = Path(args.out) / f"fig{k}"
        for cfg in FIGURES[k](args.n, args.seed, out):
            for p in cmd_sweep(cfg):
                print(p)
            Path(cfg.output, "config.json").write_text(json.dumps(cfg.to_json(), indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()

"""Fitted SNR exponents next to the Singleton diversity d_B(R) = 1 + floor(B (1 - R/M)).

    python scripts/slopes.py --n 10000000
"""

import argparse

import numpy as np

from bfpa.constellation import make_psk
from bfpa.fading import FadingSpec
from bfpa.outage import dual_curve, fit_snr_exponent, min_power_costs
from bfpa.short_term import beta_R, singleton_bound
from bfpa.table import get_table


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=10_000_000)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--B", type=int, default=4)
    args = ap.parse_args(argv)
    table = get_table(make_psk(2))
    print("m   R    scheme  beta     d_B  m*d_B  d_hat  points")
    for m, R, scheme in [(1, 1.0, "opt"), (2, 1.0, "opt"), (1, 0.9, "opt"), (1, 0.9, "tw"), (1, 1.4, "opt")]:
        spec = FadingSpec(float(m), args.B)
        beta = beta_R(table, args.B, R) if scheme == "tw" else None
        u = min_power_costs(spec, table, R, args.n, args.seed, scheme=scheme, beta=beta)
        step = 1.0 / m
        c = dual_curve(u, spec, table, R, np.arange(0, 30.01, step), args.seed, scheme=scheme)
        f = fit_snr_exponent(c)
        d = singleton_bound(args.B, R, 2.0)
        b = f"{beta:.3f}" if beta else "-"
        print(f"{m:<3} {R:<4} {scheme:<7} {b:<8} {d:<4} {m * d:<6} {f.d_hat:<6.3f} {f.n_points}")


if __name__ == "__main__":
    main()

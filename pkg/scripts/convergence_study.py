"""Observed convergence rates in space and time for the TC00 cases.

    python3 scripts/convergence_study.py [--out results/convergence] [--quick]

Writes ``space.csv`` and ``time.csv`` (``level,h_or_dt,err_u_h1,err_d_linf``
plus a rate footer) and prints the error tables.  ``--quick`` uses coarser
settings for a smoke run.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from kachanov.simulation import scenario
from kachanov.verification import spatial_study, temporal_study, write_convergence_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/convergence", help="output directory")
    ap.add_argument("--quick", action="store_true", help="coarse settings for a fast smoke run")
    ap.add_argument("--extra", default="TC03S02",
                    help="additional scenario for the spatial study (one with real spatial error)")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    dt_fixed, n_fixed = (0.05, 8) if args.quick else (0.01, 16)
    for name in ("TC00S00", args.extra):
        rep = spatial_study(scenario(name), levels=3, dt_fixed=dt_fixed, n0=4, t_end=4.0)
        print(f"== {name}: space ==\n{rep.table()}\n")
        write_convergence_csv(out / f"space_{name}.csv", rep)

    rep = temporal_study(scenario("TC00S01"), dts=(0.2, 0.1, 0.05, 0.025), n_fixed=n_fixed, t_end=4.0,
                         check_reference=not args.quick)
    print(f"== TC00S01: time ==\n{rep.table()}\n")
    write_convergence_csv(out / "time_TC00S01.csv", rep)


if __name__ == "__main__":
    main()

"""Run every catalog scenario and write one output directory per case.

    python3 scripts/run_catalog.py [--out results] [--mesh-n 16] [--snapshots]

Prints a summary table with the final time, status and final norms, and
writes ``summary.csv`` next to the per-scenario folders.
"""

from __future__ import annotations

import argparse
import csv
import time
from pathlib import Path

from kachanov.simulation import catalog, run, write_norms_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results", help="root output directory")
    ap.add_argument("--mesh-n", type=int, default=None, help="override the square mesh resolution")
    ap.add_argument("--steps", type=int, default=None, help="override the number of time steps")
    ap.add_argument("--snapshots", action="store_true", help="also write VTK snapshots")
    args = ap.parse_args(argv)

    root = Path(args.out)
    rows = []
    for s in catalog():
        changes = {"output_dir": str(root / s.name) if args.snapshots else None}
        if args.mesh_n is not None and s.mesh_file is None:
            changes["mesh_n"] = args.mesh_n
        if args.steps is not None:
            changes["steps"] = args.steps
        s = s.replace(**changes)
        t0 = time.perf_counter()
        rec = run(s)
        elapsed = time.perf_counter() - t0
        (root / s.name).mkdir(parents=True, exist_ok=True)
        write_norms_csv(root / s.name / "norms.csv", rec)
        rows.append([s.name, s.description, rec.status, f"{rec.t[-1]:g}", f"{rec.h1_u[-1]:.6e}",
                     f"{rec.linf_d[-1]:.6e}", f"{elapsed:.2f}"])
        print(f"{s.name:8s} {rec.status:24s} t_end={rec.t[-1]:5.2f}  h1_u={rec.h1_u[-1]:.4e}  "
              f"linf_d={rec.linf_d[-1]:.4e}  ({elapsed:.1f}s)")

    with open(root / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "description", "status", "t_end", "h1_u", "linf_d", "seconds"])
        w.writerows(rows)


if __name__ == "__main__":
    main()

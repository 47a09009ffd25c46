"""Command-line entry point.

Exit codes: 0 success, 1 error, 2 usage error or unknown scenario,
3 run halted by substantial damage, 4 a convergence level degenerated,
5 mesh validation findings.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import jsonschema

from .damage import DamageProcess
from .linalg import LinalgError
from .mesh import BoundaryTag, MeshError, generate_unit_square, load_gmsh, validate
from .simulation import (ConfigError, Scenario, bc_from_dict, default_output_dir, run, scenario,
                         scenario_names, write_norms_csv)
from .verification import DegenerateRun, spatial_study, temporal_study, write_convergence_csv

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_HALTED, EXIT_DEGENERATE, EXIT_VIOLATIONS = range(6)
RATE_THRESHOLD = 0.85

_DATA = {"type": "string", "pattern": r"^\s*[+-]?\s*([0-9]*\.?[0-9]+([eE][+-]?[0-9]+)?\s*\*\s*)?(tau[0-2]|u[0-2])\s*$"}
_POS = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "base": {"type": "string"},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "bcs": {
            "type": "object",
            "additionalProperties": False,
            "patternProperties": {
                "^Gamma[012]$": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type"],
                    "properties": {
                        "type": {"enum": ["dirichlet", "neumann", "robin"]},
                        "ubar": _DATA,
                        "tau": _DATA,
                        "beta": _POS,
                    },
                },
            },
        },
        "process": {"type": "string", "pattern": r"^\s*([0-9]*\.?[0-9]+([eE][+-]?[0-9]+)?\s*\*\s*)?(g0|g1|g2|const)\s*$"},
        "mesh_n": {"type": "integer", "minimum": 1},
        "mesh_file": {"type": "string"},
        "lam": _POS,
        "mu": _POS,
        "alpha": {"type": "number", "minimum": 1},
        "T": _POS,
        "steps": {"type": "integer", "minimum": 1},
        "omega_cap": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "initial_damage": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "body_force": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "tol": _POS,
        "max_iter": {"type": ["integer", "null"], "minimum": 1},
        "snapshot_interval": {"anyOf": [_POS, {"type": "null"}]},
        "output_dir": {"type": "string"},
        "tag_aliases": {
            "type": "object",
            "additionalProperties": False,
            "patternProperties": {"^[0-9]+$": {"enum": ["Gamma0", "Gamma1", "Gamma2"]}},
        },
        "augmented_stress": {"type": "boolean"},
    },
}


class UnknownScenario(KeyError):
    pass


def _catalog_message() -> str:
    return "available scenarios: " + ", ".join(scenario_names())


def _lookup(name: str) -> Scenario:
    try:
        return scenario(name)
    except KeyError:
        raise UnknownScenario(name) from None


def scenario_from_config(doc: dict, base_dir: Path | None = None) -> Scenario:
    """Build a scenario from a schema-checked config document.

    ``base`` names a catalog scenario whose fields the remaining keys
    override; without it ``bcs`` is required.
    """
    jsonschema.validate(doc, CONFIG_SCHEMA)
    doc = dict(doc)
    base = _lookup(doc.pop("base")) if "base" in doc else None
    if base is None and "bcs" not in doc:
        raise ConfigError("a config needs either 'base' or 'bcs'")
    changes: dict = {}
    if "bcs" in doc:
        bcs = dict(base.bcs) if base is not None else {}
        for key, bc in doc.pop("bcs").items():
            bcs[BoundaryTag.parse(key)] = bc_from_dict(bc)
        changes["bcs"] = bcs
    if "process" in doc:
        changes["process"] = DamageProcess.parse(doc.pop("process"))
    if "body_force" in doc:
        changes["body_force"] = tuple(doc.pop("body_force"))
    if "mesh_file" in doc:
        f = doc.pop("mesh_file")
        if not f.startswith("package:") and base_dir is not None and not Path(f).is_absolute():
            f = str(base_dir / f)
        changes["mesh_file"] = f
        changes.setdefault("mesh_n", None)
    if "mesh_n" in doc:
        changes["mesh_n"] = doc.pop("mesh_n")
        changes.setdefault("mesh_file", None)
    changes.update(doc)
    if base is None:
        changes.setdefault("name", "custom")
        return Scenario(**changes)
    return base.replace(**changes)


def _load_config(path: str) -> Scenario:
    p = Path(path)
    doc = json.loads(p.read_text())
    return scenario_from_config(doc, base_dir=p.parent)


# --- subcommands ---------------------------------------------------------------

def cmd_run(args) -> int:
    s = _load_config(args.config) if args.config else _lookup(args.scenario)
    changes = {}
    if args.mesh_n is not None:
        changes.update(mesh_n=args.mesh_n, mesh_file=None)
    if args.steps is not None:
        changes["steps"] = args.steps
    out = args.out or s.output_dir or default_output_dir()
    changes["output_dir"] = out
    if args.no_snapshots:
        changes["snapshot_interval"] = None
    s = s.replace(**changes)
    rec = run(s)
    csv_path = Path(out) / "norms.csv"
    write_norms_csv(csv_path, rec)
    print(f"{s.name}: {rec.status} after {len(rec) - 1} steps, t={rec.t[-1]:g}, "
          f"h1_u={rec.h1_u[-1]:.6e}, linf_d={rec.linf_d[-1]:.6e}")
    print(f"wrote {csv_path} and {len(rec.snapshots)} VTK snapshots")
    return EXIT_HALTED if rec.halted else EXIT_OK


def cmd_convergence(args) -> int:
    if args.levels < 3:
        print(f"error: --levels must be at least 3, got {args.levels}", file=sys.stderr)
        return EXIT_USAGE
    default = "TC00S00" if args.axis == "space" else "TC00S01"
    s = _lookup(args.scenario or default)
    if args.config:
        s = _load_config(args.config)
    try:
        if args.axis == "space":
            report = spatial_study(s, levels=args.levels, dt_fixed=args.dt or 0.01, n0=args.n or 4,
                                   t_end=args.t_end, check_reference=args.check_reference)
            rate = report.rate_u
        else:
            dt0 = args.dt or 0.2
            dts = [dt0 / 2 ** k for k in range(args.levels)]
            report = temporal_study(s, dts, n_fixed=args.n or 16, t_end=args.t_end,
                                    check_reference=args.check_reference)
            rate = report.rate_d
    except DegenerateRun as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    print(f"{s.name} convergence in {args.axis}")
    print(report.table())
    if args.csv:
        write_convergence_csv(args.csv, report)
    if rate is None:
        return EXIT_OK
    return EXIT_OK if rate >= RATE_THRESHOLD else EXIT_ERROR


def _parse_alias(text: str) -> tuple[int, BoundaryTag]:
    key, _, val = text.partition("=")
    try:
        return int(key), BoundaryTag.parse(val)
    except (ValueError, KeyError):
        raise argparse.ArgumentTypeError(f"expected PHYS=GammaK, got {text!r}") from None


def cmd_mesh_info(args) -> int:
    if args.file:
        aliases = dict(args.alias) if args.alias else None
        m = load_gmsh(args.file, tag_aliases=aliases, check=False)
    else:
        m = generate_unit_square(args.builtin)
    print(f"{m.n_vertices} vertices, {m.n_triangles} triangles")
    print(f"h = {m.h:.6g}")
    counts = m.tag_counts()
    for tag in BoundaryTag:
        print(f"{tag.label}: {counts.get(tag, 0)} edges")
    problems = validate(m)
    for v in problems:
        print(f"violation: {v}")
    if problems:
        return EXIT_VIOLATIONS
    print("no violations")
    return EXIT_OK


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kachanov", description="Quasi-static continuum damage simulations.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a catalog scenario or a JSON config")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="catalog scenario name, e.g. TC01S00")
    src.add_argument("--config", help="path to a JSON scenario config")
    r.add_argument("--mesh-n", type=int, help="use the builtin n-by-n unit square mesh")
    r.add_argument("--steps", type=int, help="number of time steps over the horizon")
    r.add_argument("--out", help="output directory (default: $KACHANOV_OUT_DIR or ./out)")
    r.add_argument("--no-snapshots", action="store_true", help="write norms.csv only, no VTK files")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("convergence", help="observed convergence rates in space or time")
    c.add_argument("--axis", choices=["space", "time"], required=True, help="refine the mesh or the time step")
    c.add_argument("--levels", type=int, required=True, help="refinements in space (meshes n..2^L n) or number of halved steps in time; at least 3")
    c.add_argument("--scenario", help="catalog scenario (default TC00S00 for space, TC00S01 for time)")
    c.add_argument("--config", help="JSON config used instead of a catalog scenario")
    c.add_argument("--dt", type=float, help="fixed step in space, coarsest step in time (0.01 / 0.2)")
    c.add_argument("--n", type=int, help="coarsest mesh in space, fixed mesh in time (4 / 16)")
    c.add_argument("--t-end", type=float, default=4.0, help="study horizon in seconds (default 4)")
    c.add_argument("--check-reference", action="store_true", help="also compare against a twice finer reference")
    c.add_argument("--csv", help="write the error table to this CSV file")
    c.set_defaults(func=cmd_convergence)

    m = sub.add_parser("mesh-info", help="print mesh statistics and validation findings")
    msrc = m.add_mutually_exclusive_group(required=True)
    msrc.add_argument("--file", help="Gmsh 2.2 ASCII mesh file")
    msrc.add_argument("--builtin", type=int, metavar="N", help="builtin N-by-N unit square mesh")
    m.add_argument("--alias", type=_parse_alias, action="append", metavar="PHYS=GammaK",
                   help="map a physical tag to a boundary part (repeatable)")
    m.set_defaults(func=cmd_mesh_info)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UnknownScenario as exc:
        print(f"error: unknown scenario {exc.args[0]!r}; {_catalog_message()}", file=sys.stderr)
        return EXIT_USAGE
    except jsonschema.ValidationError as exc:
        print(f"error: invalid config: {exc.message}", file=sys.stderr)
        return EXIT_ERROR
    except (ConfigError, MeshError, LinalgError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Scenarios, the coupled time loop, the test-case catalog and result files.

Each time step first advances damage with the gradient projected at the
previous step, then solves the momentum balance with the new damage and
the boundary data of the current time, and finally projects the new
displacement gradient for use in the next step.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from .damage import OMEGA_CAP, DamageField, DamageProcess, euler_step
from .fem import (ElasticityOperator, GradientProjector, NormEvaluator, VectorSpace,
                  apply_dirichlet, assemble_load, edge_load, edge_mass)
from .linalg import SparseSym, cg_solve, rigid_body_modes
from .material import ElasticConstants
from .mesh import BoundaryTag, Mesh, generate_unit_square, load_gmsh

log = logging.getLogger(__name__)

LAMBDA = 121.15
MU = 80.77
ALPHA = 1.0
BETA_ROBIN = 100.0
HORIZON = 10.0
DEFAULT_STEPS = 100
DEFAULT_MESH_N = 16


class ConfigError(ValueError):
    pass


# --- boundary data -------------------------------------------------------------

_OMEGA = math.pi / 5.0
_PROFILES = {
    "tau0": lambda t: 0.0,
    "tau1": lambda t: 0.5 * t,
    "tau2": lambda t: 5.0 * math.sin(_OMEGA * t),
    "u0": lambda t: 0.0,
    "u1": lambda t: 0.5 * t,
    "u2": lambda t: 0.5 * math.sin(_OMEGA * t),
}
_DATA_RE = re.compile(r"^\s*([+-]?)\s*(?:([0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)\s*\*\s*)?(tau[0-2]|u[0-2])\s*$")


@dataclass(frozen=True)
class BoundaryData:
    """Closed-form boundary data (0, profile(t)) with optional sign and scale."""

    kind: str = "tau0"
    sign: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in _PROFILES:
            raise ConfigError(f"unknown boundary data {self.kind!r}")
        if self.sign not in (1.0, -1.0):
            raise ConfigError("sign must be +1 or -1")

    @classmethod
    def parse(cls, text: "str | BoundaryData") -> "BoundaryData":
        """Parse strings such as ``tau2``, ``-tau2`` or ``4*u2``."""
        if isinstance(text, BoundaryData):
            return text
        m = _DATA_RE.match(text)
        if not m:
            raise ConfigError(f"cannot parse boundary data {text!r}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        scale = float(m.group(2)) if m.group(2) else 1.0
        return cls(m.group(3), sign, scale)

    @property
    def is_traction(self) -> bool:
        return self.kind.startswith("tau")

    @property
    def is_zero(self) -> bool:
        return self.kind in ("tau0", "u0") or self.scale == 0.0

    def value(self, t: float) -> np.ndarray:
        return np.array([0.0, self.sign * self.scale * _PROFILES[self.kind](t)])

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.value(t), (len(x), 2))

    def __str__(self) -> str:
        prefix = "-" if self.sign < 0 else ""
        factor = "" if self.scale == 1.0 else f"{self.scale:g}*"
        return f"{prefix}{factor}{self.kind}"


@dataclass(frozen=True)
class Dirichlet:
    ubar: BoundaryData = BoundaryData("u0")


@dataclass(frozen=True)
class Neumann:
    tau: BoundaryData = BoundaryData("tau0")


@dataclass(frozen=True)
class Robin:
    beta: float = BETA_ROBIN
    ubar: BoundaryData = BoundaryData("u0")
    tau: BoundaryData = BoundaryData("tau0")

    def __post_init__(self):
        if not self.beta > 0.0:
            raise ConfigError("Robin parameter must be positive")


BoundaryCondition = Union[Dirichlet, Neumann, Robin]


def bc_to_dict(bc: BoundaryCondition) -> dict:
    if isinstance(bc, Dirichlet):
        return {"type": "dirichlet", "ubar": str(bc.ubar)}
    if isinstance(bc, Neumann):
        return {"type": "neumann", "tau": str(bc.tau)}
    return {"type": "robin", "beta": bc.beta, "ubar": str(bc.ubar), "tau": str(bc.tau)}


def bc_from_dict(d: Mapping) -> BoundaryCondition:
    kind = d.get("type")
    if kind == "dirichlet":
        return Dirichlet(BoundaryData.parse(d.get("ubar", "u0")))
    if kind == "neumann":
        return Neumann(BoundaryData.parse(d.get("tau", "tau0")))
    if kind == "robin":
        return Robin(float(d.get("beta", BETA_ROBIN)), BoundaryData.parse(d.get("ubar", "u0")),
                     BoundaryData.parse(d.get("tau", "tau0")))
    raise ConfigError(f"unknown boundary condition type {kind!r}")


# --- scenario ------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    name: str
    bcs: Mapping[BoundaryTag, BoundaryCondition]
    process: DamageProcess = DamageProcess("g1")
    mesh_n: int | None = DEFAULT_MESH_N
    mesh_file: str | None = None
    lam: float = LAMBDA
    mu: float = MU
    alpha: float = ALPHA
    T: float = HORIZON
    steps: int = DEFAULT_STEPS
    omega_cap: float = OMEGA_CAP
    initial_damage: float = 0.0
    body_force: tuple[float, float] = (0.0, 0.0)
    tol: float = 1e-10
    max_iter: int | None = None
    snapshot_interval: float | None = 0.1
    output_dir: str | None = None
    tag_aliases: Mapping[int, str] | None = None
    augmented_stress: bool = False
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "bcs", {BoundaryTag.parse(k): v for k, v in dict(self.bcs).items()})
        object.__setattr__(self, "process", DamageProcess.parse(self.process))

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def constants(self) -> ElasticConstants:
        return ElasticConstants(self.lam, self.mu)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def check(self, mesh: Mesh | None = None) -> None:
        """Raise :class:`ConfigError` if an invariant is violated."""
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if not (isinstance(self.steps, (int, np.integer)) and self.steps >= 1):
            raise ConfigError("steps must be a positive integer")
        if (self.mesh_n is None) == (self.mesh_file is None):
            raise ConfigError("exactly one of mesh_n and mesh_file must be set")
        if self.mesh_n is not None and self.mesh_n < 1:
            raise ConfigError("mesh_n must be >= 1")
        if not 0.0 < self.omega_cap < 1.0:
            raise ConfigError("omega_cap must lie in (0, 1)")
        if not 0.0 <= self.initial_damage <= self.omega_cap:
            raise ConfigError("initial_damage must lie in [0, omega_cap]")
        if self.alpha < 1.0:
            raise ConfigError("alpha must be >= 1")
        if not (self.lam > 0 and self.mu > 0):
            raise ConfigError("Lame constants must be positive")
        if self.snapshot_interval is not None and not self.snapshot_interval > 0:
            raise ConfigError("snapshot_interval must be positive")
        for tag, bc in self.bcs.items():
            if not isinstance(bc, (Dirichlet, Neumann, Robin)):
                raise ConfigError(f"{tag.label}: not a boundary condition: {bc!r}")
            if isinstance(bc, Dirichlet) and bc.ubar.is_traction:
                raise ConfigError(f"{tag.label}: Dirichlet data must be a displacement (u0/u1/u2)")
            if isinstance(bc, Neumann) and not bc.tau.is_traction:
                raise ConfigError(f"{tag.label}: Neumann data must be a traction (tau0/tau1/tau2)")
            if isinstance(bc, Robin) and (bc.ubar.is_traction or not bc.tau.is_traction):
                raise ConfigError(f"{tag.label}: Robin needs displacement ubar and traction tau")
        if mesh is not None:
            missing = mesh.tags_present() - set(self.bcs)
            if missing:
                raise ConfigError("no boundary condition for " + ", ".join(t.label for t in sorted(missing)))

    def load_mesh(self) -> Mesh:
        if self.mesh_file is not None:
            aliases = None
            if self.tag_aliases is not None:
                aliases = {int(k): BoundaryTag.parse(v) for k, v in self.tag_aliases.items()}
            return load_gmsh(resolve_mesh_path(self.mesh_file), tag_aliases=aliases)
        return generate_unit_square(int(self.mesh_n))


def resolve_mesh_path(name: str) -> Path:
    """Plain paths pass through; ``package:<file>`` refers to bundled meshes."""
    if name.startswith("package:"):
        return Path(str(resources.files("kachanov") / "data" / name.split(":", 1)[1]))
    return Path(name)


# --- run record ----------------------------------------------------------------

COMPLETED = "Completed"
HALTED = "HaltedSubstantialDamage"


@dataclass
class RunRecord:
    scenario: str
    t: list[float] = field(default_factory=list)
    h1_u: list[float] = field(default_factory=list)
    linf_d: list[float] = field(default_factory=list)
    cg_iters: list[int] = field(default_factory=list)
    degenerate: list[bool] = field(default_factory=list)
    status: str = COMPLETED
    t_halt: float | None = None
    snapshots: list[str] = field(default_factory=list)
    u: np.ndarray | None = None
    d: np.ndarray | None = None
    mesh: Mesh | None = None
    fields: list[tuple[np.ndarray, np.ndarray]] | None = None

    def __len__(self) -> int:
        return len(self.t)

    def append(self, t, h1, linf, iters, degenerate) -> None:
        self.t.append(float(t))
        self.h1_u.append(float(h1))
        self.linf_d.append(float(linf))
        self.cg_iters.append(int(iters))
        self.degenerate.append(bool(degenerate))

    @property
    def halted(self) -> bool:
        return self.status == HALTED


# --- the time loop -------------------------------------------------------------

class MomentumSolver:
    """Assembles and solves the quasi-static balance for given damage and time."""

    def __init__(self, mesh: Mesh, s: Scenario):
        self.mesh = mesh
        self.s = s
        self.space = VectorSpace(mesh)
        self.op = ElasticityOperator(mesh, s.lam, s.mu)
        self.tractions = {tag: bc.tau for tag, bc in s.bcs.items() if isinstance(bc, Neumann) and not bc.tau.is_zero}
        self.robin = {tag: bc for tag, bc in s.bcs.items() if isinstance(bc, Robin)}
        self.robin_mass = None
        for tag, bc in self.robin.items():
            m = bc.beta * edge_mass(mesh, mesh.edges_with_tag(tag))
            self.robin_mass = m if self.robin_mass is None else self.robin_mass + m
        # later tags win on shared corner nodes
        dof_data: dict[int, tuple[BoundaryTag, int]] = {}
        for tag in sorted(t for t, bc in s.bcs.items() if isinstance(bc, Dirichlet)):
            for node in mesh.vertices_with_tag(tag):
                dof_data[2 * int(node)] = (tag, 0)
                dof_data[2 * int(node) + 1] = (tag, 1)
        self.dirichlet_dofs = np.array(sorted(dof_data), dtype=np.int64)
        self._dirichlet_src = [dof_data[k] for k in self.dirichlet_dofs]
        self.deflation = None
        if not len(self.dirichlet_dofs) and not self.robin:
            self.deflation = rigid_body_modes(mesh)
        body = np.asarray(s.body_force, dtype=float)
        self.body = None if not np.any(body) else (lambda t, x: np.broadcast_to(body, (len(x), 2)))

    def dirichlet_values(self, t: float) -> np.ndarray:
        cache = {tag: self.s.bcs[tag].ubar.value(t) for tag in {src[0] for src in self._dirichlet_src}}
        return np.array([cache[tag][comp] for tag, comp in self._dirichlet_src])

    def system(self, d, t: float) -> tuple[SparseSym, np.ndarray]:
        A = self.op.assemble(d)
        b = assemble_load(self.mesh, self.body, self.tractions, t)
        if self.robin:
            A = SparseSym.from_scipy(A.to_scipy() + self.robin_mass, check=False)
            for tag, bc in self.robin.items():
                edges = self.mesh.edges_with_tag(tag)
                b += bc.beta * edge_load(self.mesh, edges, bc.ubar, t)
                b += edge_load(self.mesh, edges, bc.tau, t)
        if len(self.dirichlet_dofs):
            A, b = apply_dirichlet(A, b, (self.dirichlet_dofs, self.dirichlet_values(t)))
        return A, b

    def solve(self, d, t: float, x0=None):
        A, b = self.system(d, t)
        return cg_solve(A, b, tol=self.s.tol, max_iter=self.s.max_iter, deflate=self.deflation, x0=x0)


def _on_grid(t: float, interval: float) -> bool:
    k = round(t / interval)
    return abs(t - k * interval) <= 1e-9 * max(1.0, abs(t))


def run(s: Scenario, mesh: Mesh | None = None, keep_fields: bool = False) -> RunRecord:
    """Run a scenario to its horizon or until some node reaches the damage cap.

    ``mesh`` overrides the scenario's mesh source (used by the nested
    convergence studies).  With ``keep_fields`` every step's nodal
    displacement and damage are kept on the record.
    """
    if mesh is None:
        try:
            mesh = s.load_mesh()
        except OSError as exc:
            raise ConfigError(f"cannot read mesh: {exc}") from exc
    s.check(mesh)
    c = s.constants
    dt = s.dt
    solver = MomentumSolver(mesh, s)
    project = GradientProjector(mesh)
    norms = NormEvaluator(mesh)
    out_dir = Path(s.output_dir) if s.output_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    rec = RunRecord(s.name, mesh=mesh, fields=[] if keep_fields else None)
    d = DamageField.constant(mesh.n_vertices, s.initial_damage, s.omega_cap)

    def emit(n, t, u, iters, degenerate, force_snapshot=False):
        rec.append(t, norms.h1(u), d.linf(), iters, degenerate)
        if keep_fields:
            rec.fields.append((u.copy(), d.values.copy()))
        if out_dir is not None and s.snapshot_interval is not None and (
                force_snapshot or _on_grid(t, s.snapshot_interval)):
            path = out_dir / f"snapshot_{n:05d}.vtk"
            write_vtk(path, mesh, u, d.values)
            rec.snapshots.append(str(path))

    # initial solve provides the gradient for the first damage update
    res = solver.solve(d.values, 0.0)
    u = res.x
    w = project(u)
    emit(0, 0.0, u, res.iterations, False, force_snapshot=(s.steps == 0))

    for n in range(1, s.steps + 1):
        t_prev = (n - 1) * dt
        t = n * dt
        d, report = euler_step(d, w, s.process, s.alpha, t_prev, dt, c, s.augmented_stress)
        res = solver.solve(d.values, t, x0=u)
        u = res.x
        w = project(u)
        last = report.degenerate or n == s.steps
        emit(n, t, u, res.iterations, report.degenerate, force_snapshot=last)
        if report.degenerate:
            rec.status = HALTED
            rec.t_halt = t
            log.info("%s: damage cap %.4g reached at t=%.4g", s.name, s.omega_cap, t)
            break
    rec.u = u
    rec.d = d.values.copy()
    return rec


# --- catalog -------------------------------------------------------------------

def _neumann(text: str) -> Neumann:
    return Neumann(BoundaryData.parse(text))


def _dirichlet(text: str) -> Dirichlet:
    return Dirichlet(BoundaryData.parse(text))


def _robin(ubar: str, tau: str = "tau0") -> Robin:
    return Robin(BETA_ROBIN, BoundaryData.parse(ubar), BoundaryData.parse(tau))


G0, G1, G2 = BoundaryTag.GAMMA0, BoundaryTag.GAMMA1, BoundaryTag.GAMMA2

OMEGA1_MESH = "package:omega1.msh"
OMEGA2_MESH = "package:omega2.msh"


def catalog() -> list[Scenario]:
    """The eleven named test cases with the default material constants."""
    pull2 = {G0: _neumann("-tau2"), G1: _neumann("tau0"), G2: _neumann("tau2")}
    pull1 = {G0: _neumann("-tau1"), G1: _neumann("tau0"), G2: _neumann("tau1")}
    clamp1 = {G0: _dirichlet("u0"), G1: _neumann("tau0"), G2: _dirichlet("u1")}
    clamp2 = {G0: _dirichlet("u0"), G1: _neumann("tau0"), G2: _dirichlet("u2")}
    robin = {G0: _robin("u0"), G1: _neumann("tau0"), G2: _robin("u2")}
    return [
        Scenario("TC00S00", pull2, DamageProcess("g1"), description="Convergence in space"),
        Scenario("TC00S01", pull2, DamageProcess("g1"), description="Convergence in time"),
        Scenario("TC01S00", pull1, DamageProcess("g0"), description="Linear load 1"),
        Scenario("TC01S01", pull1, DamageProcess("g1"), description="Linear load 2"),
        Scenario("TC02S00", pull2, DamageProcess("g0"), description="Dynamic load 1"),
        Scenario("TC02S01", pull2, DamageProcess("g1"), description="Dynamic load 2"),
        Scenario("TC03S00", clamp1, DamageProcess("g2"), description="Dirichlet 1"),
        Scenario("TC03S01", clamp2, DamageProcess("g2"), description="Dirichlet 2"),
        Scenario("TC03S02", robin, DamageProcess("g2"), description="Robin"),
        Scenario("TC03S03", clamp2, DamageProcess("g2"), mesh_n=None, mesh_file=OMEGA1_MESH,
                 description="Domain 1 (stand-in geometry)"),
        Scenario("TC03S04", clamp2, DamageProcess("g2"), mesh_n=None, mesh_file=OMEGA2_MESH,
                 description="Domain 2 (stand-in geometry)"),
    ]


def scenario(name: str) -> Scenario:
    for s in catalog():
        if s.name == name:
            return s
    raise KeyError(name)


def scenario_names() -> list[str]:
    return [s.name for s in catalog()]


# --- output files --------------------------------------------------------------

def write_vtk(path, mesh: Mesh, u, d) -> None:
    """Legacy ASCII VTK unstructured grid with displacement and damage."""
    u = np.asarray(getattr(u, "values", u), dtype=float).reshape(-1, 2)
    d = np.asarray(getattr(d, "values", d), dtype=float)
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", "kachanov damage simulation", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    lines.append(f"POINT_DATA {nv}")
    lines.append("VECTORS displacement double")
    lines += [f"{ux:.17g} {uy:.17g} 0" for ux, uy in u]
    lines.append("SCALARS damage double 1")
    lines.append("LOOKUP_TABLE default")
    lines += [f"{v:.17g}" for v in d]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk(path) -> dict[str, np.ndarray]:
    """Read back the subset written by :func:`write_vtk`."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    out: dict[str, np.ndarray] = {}
    i = 4
    while i < len(tokens):
        head = tokens[i].split()
        if not head:
            i += 1
            continue
        key = head[0]
        if key == "POINTS":
            n = int(head[1])
            out["points"] = np.array([[float(v) for v in tokens[i + 1 + k].split()] for k in range(n)])
            i += n + 1
        elif key == "CELLS":
            n = int(head[1])
            out["cells"] = np.array([[int(v) for v in tokens[i + 1 + k].split()[1:]] for k in range(n)])
            i += n + 1
        elif key == "CELL_TYPES":
            n = int(head[1])
            out["cell_types"] = np.array([int(tokens[i + 1 + k]) for k in range(n)])
            i += n + 1
        elif key == "POINT_DATA":
            npts = int(head[1])
            i += 1
        elif key == "VECTORS":
            out[head[1]] = np.array([[float(v) for v in tokens[i + 1 + k].split()] for k in range(npts)])
            i += npts + 1
        elif key == "SCALARS":
            out[head[1]] = np.array([float(tokens[i + 2 + k]) for k in range(npts)])
            i += npts + 2
        else:
            raise ValueError(f"unexpected VTK line {tokens[i]!r}")
    return out


CSV_HEADER = ["t", "h1_u", "linf_d", "cg_iters", "degenerate"]


def write_norms_csv(path, r: RunRecord) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for t, h1, linf, it, deg in zip(r.t, r.h1_u, r.linf_d, r.cg_iters, r.degenerate):
            w.writerow([f"{t:.6f}", f"{h1:.12e}", f"{linf:.12e}", it, int(deg)])


def read_norms_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in CSV_HEADER}


def default_output_dir() -> str:
    return os.environ.get("KACHANOV_OUT_DIR", "out")

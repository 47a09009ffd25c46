"""Observed convergence rates in space and time and a local consistency probe.

No closed-form solution exists for the coupled problem, so every study
compares against a self-generated reference: one extra uniform refinement
in space (nested, so prolongation is exact) or a sixteen times smaller
step in time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .damage import DamageField, DamageProcess, euler_step
from .fem import NormEvaluator
from .material import ElasticConstants
from .mesh import generate_unit_square, prolong, refine_uniform
from .simulation import Scenario, run

EXACT_TOL = 1e-9
STUDY_HORIZON = 4.0


class DegenerateRun(RuntimeError):
    pass


@dataclass
class ConvergenceReport:
    axis: str
    labels: list[str]
    resolutions: list[float]
    err_u: list[float]
    err_d: list[float]
    rate_u: float | None
    rate_d: float | None
    reference: str
    flags: list[str] = field(default_factory=list)

    @property
    def rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.resolutions, self.err_u, self.err_d))

    def ratios(self, which: str = "u") -> list[float]:
        err = self.err_u if which == "u" else self.err_d
        return [a / b if b > 0 else math.inf for a, b in zip(err[:-1], err[1:])]

    @property
    def exact_u(self) -> bool:
        return self.rate_u is None

    @property
    def exact_d(self) -> bool:
        return self.rate_d is None

    def table(self) -> str:
        name = "h" if self.axis == "space" else "dt"
        lines = [f"{'level':>5} {name:>12} {'err_u_h1':>14} {'err_d_linf':>14}"]
        for k, (r, eu, ed) in enumerate(self.rows):
            lines.append(f"{k:>5} {r:>12.6g} {eu:>14.6e} {ed:>14.6e}")
        lines.append(f"rate u: {_fmt_rate(self.rate_u)}   rate d: {_fmt_rate(self.rate_d)}")
        lines.append(f"reference: {self.reference}")
        if self.flags:
            lines.append("flags: " + ", ".join(self.flags))
        return "\n".join(lines)


def _fmt_rate(rate: float | None) -> str:
    return "exact" if rate is None else f"{rate:.4f}"


def fit_rate(resolutions, errors, exact_tol: float = EXACT_TOL) -> float | None:
    """Least-squares slope of log2(error) against log2(resolution).

    Returns ``None`` when every error is at or below ``exact_tol``, in which
    case there is no discretization error to fit.
    """
    e = np.asarray(errors, dtype=float)
    if np.all(e <= exact_tol):
        return None
    r = np.asarray(resolutions, dtype=float)
    x = np.log2(r)
    y = np.log2(np.maximum(e, np.finfo(float).tiny))
    return float(np.polyfit(x, y, 1)[0])


def _steps(t_end: float, dt: float) -> int:
    k = round(t_end / dt)
    if k < 1 or abs(k * dt - t_end) > 1e-9 * t_end:
        raise ValueError(f"dt={dt} does not divide the horizon {t_end}")
    return int(k)


def _study_scenario(base: Scenario, t_end: float, dt: float) -> Scenario:
    return base.replace(T=t_end, steps=_steps(t_end, dt), output_dir=None)


def _require_complete(rec, what: str) -> None:
    if rec.halted:
        raise DegenerateRun(f"{what} reached the damage cap at t={rec.t_halt:g}")


def spatial_study(base: Scenario, levels: int = 3, dt_fixed: float = 0.01, n0: int | None = None,
                  t_end: float = STUDY_HORIZON, check_reference: bool = False) -> ConvergenceReport:
    """Errors of nested meshes n0, 2 n0, ..., 2^levels n0 against 2^(levels+1) n0.

    The displacement error is the H1 norm, on the reference mesh, of the
    prolonged coarse displacement minus the reference one at ``t_end``; the
    damage error is the largest nodal difference on the coarse nodes.
    """
    if levels < 3:
        raise ValueError("a spatial study needs at least 3 levels")
    if base.mesh_file is not None:
        raise ValueError("spatial studies need the builtin square mesh")
    n0 = base.mesh_n if n0 is None else n0
    s = _study_scenario(base, t_end, dt_fixed)
    meshes = [generate_unit_square(n0)]
    for _ in range(levels + (2 if check_reference else 1)):
        meshes.append(refine_uniform(meshes[-1]))
    recs = []
    for k, m in enumerate(meshes):
        rec = run(s, mesh=m)
        _require_complete(rec, f"level {k} (n={n0 * 2 ** k})")
        recs.append(rec)

    def errors(k: int, ref: int) -> tuple[float, float]:
        u = recs[k].u.reshape(-1, 2)
        for m in meshes[k + 1:ref + 1]:
            u = prolong(m, u)
        diff = u.ravel() - recs[ref].u
        eu = NormEvaluator(meshes[ref]).h1(diff)
        nc = meshes[k].n_vertices
        ed = float(np.max(np.abs(recs[k].d - recs[ref].d[:nc])))
        return eu, ed

    ref = levels + 1
    rows = [errors(k, ref) for k in range(levels + 1)]
    hs = [meshes[k].h for k in range(levels + 1)]
    report = ConvergenceReport(
        axis="space",
        labels=[f"n={n0 * 2 ** k}" for k in range(levels + 1)],
        resolutions=hs,
        err_u=[r[0] for r in rows],
        err_d=[r[1] for r in rows],
        rate_u=fit_rate(hs, [r[0] for r in rows]),
        rate_d=fit_rate(hs, [r[1] for r in rows]),
        reference=f"nested refinement n={n0 * 2 ** ref}, dt={dt_fixed:g}, t_end={t_end:g}",
    )
    if check_reference:
        finer = errors(levels, ref + 1)
        _flag_reference(report, rows[-1], finer)
    return report


def _flag_reference(report: ConvergenceReport, coarse_ref, fine_ref) -> None:
    for a, b in zip(coarse_ref, fine_ref):
        if b > EXACT_TOL and abs(a - b) > 0.1 * b:
            report.flags.append("ReferenceTooCoarse")
            return


def temporal_study(base: Scenario, dts=(0.2, 0.1, 0.05, 0.025), n_fixed: int | None = None,
                   t_end: float = STUDY_HORIZON, check_reference: bool = False) -> ConvergenceReport:
    """Errors of a halving sequence of steps against a run with min(dts)/16.

    Errors are maxima over the time points shared with the reference: the
    nodal maximum for damage and the H1 norm for displacement.
    """
    dts = [float(v) for v in dts]
    if len(dts) < 3:
        raise ValueError("a temporal study needs at least 3 step sizes")
    for a, b in zip(dts[:-1], dts[1:]):
        if not math.isclose(a, 2.0 * b, rel_tol=1e-12):
            raise ValueError("step sizes must form a halving sequence")
    for dt in dts:
        _steps(t_end, dt)
    if base.mesh_file is None and n_fixed is not None:
        base = base.replace(mesh_n=n_fixed)
    mesh = base.load_mesh()
    norms = NormEvaluator(mesh)
    dt_ref = min(dts) / 16.0

    def solve(dt):
        rec = run(_study_scenario(base, t_end, dt), mesh=mesh, keep_fields=True)
        _require_complete(rec, f"dt={dt:g}")
        return rec

    def errors(rec, dt, ref, dtr):
        stride = round(dt / dtr)
        eu = ed = 0.0
        for k, (u, d) in enumerate(rec.fields):
            ur, drf = ref.fields[k * stride]
            eu = max(eu, norms.h1(u - ur))
            ed = max(ed, float(np.max(np.abs(d - drf))))
        return eu, ed

    ref = solve(dt_ref)
    recs = [solve(dt) for dt in dts]
    rows = [errors(r, dt, ref, dt_ref) for r, dt in zip(recs, dts)]
    report = ConvergenceReport(
        axis="time",
        labels=[f"dt={dt:g}" for dt in dts],
        resolutions=dts,
        err_u=[r[0] for r in rows],
        err_d=[r[1] for r in rows],
        rate_u=fit_rate(dts, [r[0] for r in rows]),
        rate_d=fit_rate(dts, [r[1] for r in rows]),
        reference=f"dt={dt_ref:g} on {mesh.n_vertices} vertices, t_end={t_end:g}",
    )
    if check_reference:
        ref2 = solve(dt_ref / 2.0)
        finer = errors(recs[-1], dts[-1], ref2, dt_ref / 2.0)
        _flag_reference(report, rows[-1], finer)
    return report


@dataclass
class ProbeResult:
    dts: list[float]
    errors: list[float]
    order: float | None

    def ratios(self) -> list[float]:
        return [a / b if b > 0 else math.inf for a, b in zip(self.errors[:-1], self.errors[1:])]


def consistency_probe(p: DamageProcess, grad, d0, dts, alpha: float = 1.0,
                      c: ElasticConstants | None = None, t0: float = 0.0,
                      substeps: int = 1024) -> ProbeResult:
    """Local error of one Euler step with the displacement gradient frozen.

    The reference integrates the same damage ODE over the step with
    ``substeps`` Euler sub-steps.  Returns the errors and their fitted order.
    """
    c = ElasticConstants() if c is None else c
    grad = np.atleast_2d(np.asarray(grad, dtype=float))
    if grad.shape[-2:] == (2, 2):
        grad = grad.reshape(-1, 4)
    d0 = np.broadcast_to(np.asarray(d0, dtype=float), (grad.shape[0],)).copy()
    start = DamageField(d0, cap=1.0 - 1e-12)
    errs = []
    for dt in dts:
        one, _ = euler_step(start, grad, p, alpha, t0, dt, c)
        ref = start
        h = dt / substeps
        for k in range(substeps):
            ref, _ = euler_step(ref, grad, p, alpha, t0 + k * h, h, c)
        errs.append(float(np.max(np.abs(one.values - ref.values))))
    order = fit_rate(dts, errs, exact_tol=1e-15)
    return ProbeResult([float(v) for v in dts], errs, order)


def write_convergence_csv(path, report: ConvergenceReport) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("level,h_or_dt,err_u_h1,err_d_linf\n")
        for k, (r, eu, ed) in enumerate(report.rows):
            fh.write(f"{k},{r:.12g},{eu:.12e},{ed:.12e}\n")
        fh.write(f"# rate_u={_fmt_rate(report.rate_u)} rate_d={_fmt_rate(report.rate_d)}\n")

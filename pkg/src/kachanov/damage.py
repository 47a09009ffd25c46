"""Damage fields, damage-process models and the explicit Euler update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .material import (ElasticConstants, as_stress, hydrostatic, plane_strain_szz,
                       strain_from_gradient, stress, von_mises)

OMEGA_CAP = 0.999
G1_COEFF = 0.008
G2_FACTOR = 0.00625

MODELS = ("g0", "g1", "g2", "const")


@dataclass(frozen=True)
class DamageProcess:
    """Nonnegative damage source g(t, x, grad u).

    ``model`` is one of ``g0`` (no damage), ``g1`` (Kachanov-type stress
    measure), ``g2`` (``g1`` scaled by 0.00625) or ``const`` (unit rate, for
    probing the integrator).  ``scale`` multiplies the result, which gives the
    custom variants.
    """

    model: str = "g1"
    scale: float = 1.0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown damage process {self.model!r}; choose from {MODELS}")
        if not self.scale >= 0.0:
            raise ValueError("scale must be nonnegative")

    @classmethod
    def parse(cls, spec: "str | DamageProcess") -> "DamageProcess":
        if isinstance(spec, DamageProcess):
            return spec
        if "*" in spec:
            factor, model = spec.split("*", 1)
            return cls(model.strip(), float(factor))
        return cls(spec.strip())

    @property
    def name(self) -> str:
        return self.model if self.scale == 1.0 else f"{self.scale:g}*{self.model}"


def g_from_stress(p: DamageProcess, s, c: ElasticConstants, augmented: bool = False) -> np.ndarray:
    """Evaluate the process on given stresses ``(..., 3)`` or ``(..., 2, 2)``."""
    s = as_stress(s)
    shape = s.shape[:-1]
    if p.model == "g0" or p.scale == 0.0:
        return np.zeros(shape)
    if p.model == "const":
        return np.full(shape, p.scale)
    szz = plane_strain_szz(s, c) if augmented else None
    seq = von_mises(s, szz)
    sh = hydrostatic(s, szz)
    nu = c.nu
    g = G1_COEFF * (2.0 / 3.0 * (1.0 + nu) * seq ** 2 + 3.0 * (1.0 - 2.0 * nu) * sh ** 2)
    if p.model == "g2":
        g = G2_FACTOR * g
    return p.scale * g


def eval_g(p: DamageProcess, t: float, grad, d, c: ElasticConstants, augmented: bool = False) -> np.ndarray:
    """g at nodal gradients ``grad`` and nodal damage ``d``.

    The stress fed to the process is the damaged one, sigma(sym grad, d).
    None of the catalog models depend on ``t`` explicitly.
    """
    eps = strain_from_gradient(grad)
    s = stress(eps, d, c)
    return g_from_stress(p, s, c, augmented)


@dataclass(frozen=True, eq=False)
class DamageField:
    """Nodal P1 damage values in [0, cap]."""

    values: np.ndarray
    cap: float = OMEGA_CAP

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if not 0.0 < self.cap < 1.0:
            raise ValueError("damage cap must lie in (0, 1)")
        if np.any(v < 0.0) or np.any(v > self.cap) or not np.all(np.isfinite(v)):
            raise ValueError("damage values must lie in [0, cap]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, n: int, value: float = 0.0, cap: float = OMEGA_CAP) -> "DamageField":
        return cls(np.full(n, value), cap)

    def linf(self) -> float:
        return float(np.abs(self.values).max()) if len(self.values) else 0.0


@dataclass(frozen=True)
class StepReport:
    max_increment: float
    max_damage: float
    degenerate: bool


def euler_step(d: DamageField, w, p: DamageProcess, alpha: float, t: float, dt: float,
               c: ElasticConstants, augmented: bool = False) -> tuple[DamageField, StepReport]:
    """One explicit Euler step of d' = (1 - d)^(-alpha) g, clamped at the cap.

    ``w`` holds the nodal displacement gradients from the previous step, as
    an ``(N, 4)`` array or anything with a ``values`` attribute of that shape.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    if alpha < 1.0:
        raise ValueError("alpha must be >= 1")
    grad = getattr(w, "values", w)
    old = d.values
    g = eval_g(p, t, grad, old, c, augmented)
    rate = (1.0 - old) ** (-alpha) * g
    new = np.minimum(d.cap, old + dt * rate)
    # monotone even if rounding pushed a capped node below its old value
    new = np.maximum(new, old)
    inc = new - old
    report = StepReport(
        max_increment=float(inc.max()) if len(inc) else 0.0,
        max_damage=float(new.max()) if len(new) else 0.0,
        degenerate=bool(np.any(new >= d.cap)),
    )
    return DamageField(new, d.cap), report

"""Damaged isotropic stresses and the scalar stress measures driving damage.

Stresses and strains are stored in Voigt-like order ``(xx, yy, xy)`` with
the tensor (not engineering) shear component.  All functions broadcast
over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ElasticConstants:
    lam: float = 121.15
    mu: float = 80.77

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ValueError(f"Lame constants must be positive, got lam={self.lam}, mu={self.mu}")

    @property
    def nu(self) -> float:
        """Poisson ratio."""
        return self.lam / (2.0 * (self.lam + self.mu))


def strain_from_gradient(grad: np.ndarray) -> np.ndarray:
    """Symmetric part of a displacement gradient.

    ``grad`` is either ``(..., 2, 2)`` or flattened ``(..., 4)`` ordered
    ``(dux/dx, dux/dy, duy/dx, duy/dy)``.
    """
    g = np.asarray(grad, dtype=float)
    if g.shape[-2:] == (2, 2):
        g = g.reshape(g.shape[:-2] + (4,))
    return np.stack([g[..., 0], g[..., 3], 0.5 * (g[..., 1] + g[..., 2])], axis=-1)


def stress(eps: np.ndarray, d, c: ElasticConstants) -> np.ndarray:
    """sigma = (1 - d) (lam tr(eps) I + 2 mu eps) for 2x2 strains."""
    eps = np.asarray(eps, dtype=float)
    d = np.asarray(d, dtype=float)
    tr = eps[..., 0] + eps[..., 1]
    s = 2.0 * c.mu * eps
    s[..., 0] += c.lam * tr
    s[..., 1] += c.lam * tr
    return (1.0 - d)[..., None] * s


def as_stress(s) -> np.ndarray:
    """Accept ``(xx, yy, xy)`` triples or full 2x2 tensors."""
    s = np.asarray(s, dtype=float)
    if s.shape[-2:] == (2, 2):
        s = np.stack([s[..., 0, 0], s[..., 1, 1], s[..., 0, 1]], axis=-1)
    return s


def hydrostatic(s, sigma_zz=None) -> np.ndarray:
    """One third of the trace.  In-plane entries only unless ``sigma_zz`` is given."""
    s = as_stress(s)
    tr = s[..., 0] + s[..., 1]
    if sigma_zz is not None:
        tr = tr + sigma_zz
    return tr / 3.0


def von_mises(s, sigma_zz=None) -> np.ndarray:
    """sqrt(3/2 dev:dev) with dev = s - hydrostatic(s) I.

    Without ``sigma_zz`` the contraction runs over the 2x2 tensor only, so a
    plane hydrostatic state diag(p, p) still has a deviatoric residue.
    """
    s = as_stress(s)
    sh = hydrostatic(s, sigma_zz)
    dxx = s[..., 0] - sh
    dyy = s[..., 1] - sh
    ddot = dxx ** 2 + dyy ** 2 + 2.0 * s[..., 2] ** 2
    if sigma_zz is not None:
        ddot = ddot + (sigma_zz - sh) ** 2
    return np.sqrt(1.5 * ddot)


def plane_strain_szz(s, c: ElasticConstants) -> np.ndarray:
    s = as_stress(s)
    return c.nu * (s[..., 0] + s[..., 1])

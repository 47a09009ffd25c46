"""P1 Lagrange discretization of the damaged elasticity problem.

Vector unknowns use the interleaved layout ``(u0x, u0y, u1x, u1y, ...)``.
Element integrals use the three-point edge-midpoint rule on triangles and
two-point Gauss on boundary edges, both exact for the integrands that occur
with linear elements and linear damage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .linalg import SparseSym, cg_solve
from .mesh import BoundaryTag, Mesh

VectorFunction = Callable[[float, np.ndarray], np.ndarray]

_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


class DegenerateTriangle(ValueError):
    pass


# --- spaces and fields ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScalarSpace:
    mesh: Mesh

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_vertices


@dataclass(frozen=True, eq=False)
class VectorSpace:
    mesh: Mesh

    @property
    def n_dofs(self) -> int:
        return 2 * self.mesh.n_vertices

    def node_dofs(self, nodes) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=np.int64)
        return np.stack([2 * nodes, 2 * nodes + 1], axis=-1).reshape(-1)

    def constrained_mask(self, tags: Iterable[BoundaryTag]) -> np.ndarray:
        mask = np.zeros(self.n_dofs, dtype=bool)
        for tag in tags:
            mask[self.node_dofs(self.mesh.vertices_with_tag(tag))] = True
        return mask


@dataclass(frozen=True, eq=False)
class DisplacementField:
    mesh: Mesh
    values: np.ndarray

    @property
    def ux(self) -> np.ndarray:
        return self.values[0::2]

    @property
    def uy(self) -> np.ndarray:
        return self.values[1::2]

    def nodal(self) -> np.ndarray:
        return self.values.reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class GradientField:
    """Nodal values of (dux/dx, dux/dy, duy/dx, duy/dy), one row per vertex."""

    mesh: Mesh
    values: np.ndarray

    def component(self, k: int) -> np.ndarray:
        return self.values[:, k]


# --- geometry ------------------------------------------------------------------

def p1_geometry(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Areas ``(M,)`` and constant basis gradients ``(M, 3, 2)`` per triangle."""
    p = mesh.vertices[mesh.triangles]
    return _geometry(p)


def _geometry(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x, y = p[..., 0], p[..., 1]
    det = (x[..., 1] - x[..., 0]) * (y[..., 2] - y[..., 0]) - (x[..., 2] - x[..., 0]) * (y[..., 1] - y[..., 0])
    if np.any(det <= 0.0):
        raise DegenerateTriangle("triangle with nonpositive area")
    bx = np.stack([y[..., 1] - y[..., 2], y[..., 2] - y[..., 0], y[..., 0] - y[..., 1]], axis=-1)
    by = np.stack([x[..., 2] - x[..., 1], x[..., 0] - x[..., 2], x[..., 1] - x[..., 0]], axis=-1)
    grads = np.stack([bx, by], axis=-1) / det[..., None, None]
    return 0.5 * det, grads


def _strain_matrix(grads: np.ndarray) -> np.ndarray:
    """B with rows (eps_xx, eps_yy, gamma_xy) and interleaved columns."""
    m = grads.shape[:-2]
    B = np.zeros(m + (3, 6))
    B[..., 0, 0::2] = grads[..., 0]
    B[..., 1, 1::2] = grads[..., 1]
    B[..., 2, 0::2] = grads[..., 1]
    B[..., 2, 1::2] = grads[..., 0]
    return B


def _elasticity_matrix(lam, mu) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    D = np.zeros(np.broadcast(lam, mu).shape + (3, 3))
    D[..., 0, 0] = D[..., 1, 1] = lam + 2.0 * mu
    D[..., 0, 1] = D[..., 1, 0] = lam
    D[..., 2, 2] = mu
    return D


def element_stiffness(tri, lam: float, mu: float, d_nodes=(0.0, 0.0, 0.0)) -> np.ndarray:
    """6x6 plane-strain stiffness of one triangle with linear damage.

    The factor (1 - d) is linear and the strains are constant, so its
    integral is the area times the mean nodal value of 1 - d.
    """
    area, grads = _geometry(np.asarray(tri, dtype=float)[None])
    B = _strain_matrix(grads)[0]
    d_nodes = np.asarray(d_nodes, dtype=float)
    k = area[0] * np.mean(1.0 - d_nodes) * (B.T @ _elasticity_matrix(lam, mu) @ B)
    return 0.5 * (k + k.T)


class _Scatter:
    """Cached CSR pattern for summing per-element blocks."""

    def __init__(self, n: int, conn: np.ndarray):
        k = conn.shape[1]
        rows = np.repeat(conn, k, axis=1).ravel()
        cols = np.tile(conn, (1, k)).ravel()
        keys = rows * n + cols
        uniq, self.inverse = np.unique(keys, return_inverse=True)
        self.n = n
        self.indices = (uniq % n).astype(np.int32)
        counts = np.bincount(uniq // n, minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.nnz = len(uniq)

    def __call__(self, blocks: np.ndarray) -> SparseSym:
        data = np.bincount(self.inverse, weights=blocks.ravel(), minlength=self.nnz)
        return SparseSym(self.n, self.indptr, self.indices, data)


class ElasticityOperator:
    """Assembles the damaged stiffness matrix on a fixed mesh.

    Undamaged element matrices are computed once; each assembly scales them
    by the element mean of 1 - d.
    """

    def __init__(self, mesh: Mesh, lam, mu):
        self.mesh = mesh
        area, grads = p1_geometry(mesh)
        B = _strain_matrix(grads)
        D = _elasticity_matrix(lam, mu)
        if D.ndim == 2:
            D = np.broadcast_to(D, (mesh.n_triangles, 3, 3))
        k0 = area[:, None, None] * np.einsum("mki,mkl,mlj->mij", B, D, B)
        self.k0 = 0.5 * (k0 + k0.transpose(0, 2, 1))
        conn = np.stack([2 * mesh.triangles, 2 * mesh.triangles + 1], axis=-1).reshape(-1, 6)
        self._scatter = _Scatter(2 * mesh.n_vertices, conn)

    def assemble(self, damage=None) -> SparseSym:
        if damage is None:
            factor = np.ones(self.mesh.n_triangles)
        else:
            d = np.asarray(getattr(damage, "values", damage), dtype=float)
            factor = 1.0 - d[self.mesh.triangles].mean(axis=1)
        return self._scatter(factor[:, None, None] * self.k0)


def assemble_elasticity(mesh: Mesh, lam, mu, damage=None) -> SparseSym:
    """Global stiffness for the form (1 - d)(lam tr eps I + 2 mu eps) : eps(v).

    ``lam`` and ``mu`` are scalars or per-triangle arrays.
    """
    return ElasticityOperator(mesh, lam, mu).assemble(damage)


def mass_matrix(mesh: Mesh) -> SparseSym:
    """Scalar P1 mass matrix, area/12 [[2,1,1],[1,2,1],[1,1,2]] per element."""
    area = np.abs(mesh.signed_areas())
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _Scatter(mesh.n_vertices, mesh.triangles)(area[:, None, None] * local)


# --- loads and boundary conditions ---------------------------------------------

def _eval_vector(fn: VectorFunction | None, t: float, x: np.ndarray) -> np.ndarray:
    if fn is None:
        return np.zeros((len(x), 2))
    return np.broadcast_to(np.asarray(fn(t, x), dtype=float), (len(x), 2))


def edge_load(mesh: Mesh, edges: np.ndarray, fn: VectorFunction | None, t: float) -> np.ndarray:
    """Integral of fn . phi over the given edges (two-point Gauss)."""
    b = np.zeros(2 * mesh.n_vertices)
    if fn is None or len(edges) == 0:
        return b
    pa = mesh.vertices[edges[:, 0]]
    pb = mesh.vertices[edges[:, 1]]
    length = np.linalg.norm(pb - pa, axis=1)
    for xi in _GAUSS2:
        val = _eval_vector(fn, t, (1.0 - xi) * pa + xi * pb) * (0.5 * length)[:, None]
        for node, phi in ((edges[:, 0], 1.0 - xi), (edges[:, 1], xi)):
            np.add.at(b, 2 * node, phi * val[:, 0])
            np.add.at(b, 2 * node + 1, phi * val[:, 1])
    return b


def assemble_load(mesh: Mesh, f: VectorFunction | None, traction: Mapping[BoundaryTag, VectorFunction | None],
                  t: float) -> np.ndarray:
    """Right-hand side: volume force plus tractions on tagged edges."""
    b = np.zeros(2 * mesh.n_vertices)
    if f is not None:
        area = np.abs(mesh.signed_areas())
        tri = mesh.triangles
        for i, j in ((0, 1), (1, 2), (2, 0)):
            mid = 0.5 * (mesh.vertices[tri[:, i]] + mesh.vertices[tri[:, j]])
            val = _eval_vector(f, t, mid) * (area / 3.0)[:, None]
            for node in (tri[:, i], tri[:, j]):
                np.add.at(b, 2 * node, 0.5 * val[:, 0])
                np.add.at(b, 2 * node + 1, 0.5 * val[:, 1])
    for tag, fn in traction.items():
        b += edge_load(mesh, mesh.edges_with_tag(tag), fn, t)
    return b


def apply_dirichlet(A: SparseSym, b: np.ndarray, constraints) -> tuple[SparseSym, np.ndarray]:
    """Symmetric elimination of prescribed dofs.

    ``constraints`` maps dof -> value, or is a pair ``(dofs, values)``.
    Constrained rows and columns are zeroed with a unit diagonal and the
    right-hand side is lifted accordingly.
    """
    if isinstance(constraints, Mapping):
        dofs = np.fromiter(constraints.keys(), dtype=np.int64, count=len(constraints))
        vals = np.fromiter(constraints.values(), dtype=float, count=len(constraints))
    else:
        dofs = np.asarray(constraints[0], dtype=np.int64)
        vals = np.asarray(constraints[1], dtype=float)
    b = np.array(b, dtype=float)
    if len(dofs) == 0:
        return A, b
    n = A.n
    lift = np.zeros(n)
    lift[dofs] = vals
    b -= A @ lift
    b[dofs] = vals
    keep = np.ones(n)
    keep[dofs] = 0.0
    K = sp.diags(keep) @ A.to_scipy() @ sp.diags(keep) + sp.diags(1.0 - keep)
    return SparseSym.from_scipy(K, check=False), b


def edge_mass(mesh: Mesh, edges: np.ndarray) -> sp.csr_matrix:
    """Vector edge mass matrix, l/6 [[2,1],[1,2]] per edge and component."""
    n = 2 * mesh.n_vertices
    if len(edges) == 0:
        return sp.csr_matrix((n, n))
    length = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
    local = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    rows, cols, vals = [], [], []
    for comp in (0, 1):
        dof = 2 * edges + comp
        for i in range(2):
            for j in range(2):
                rows.append(dof[:, i])
                cols.append(dof[:, j])
                vals.append(length * local[i, j])
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()


def add_robin(A: SparseSym, b: np.ndarray, mesh: Mesh, beta_r: float, ubar: VectorFunction | None,
              tau: VectorFunction | None, tags: Iterable[BoundaryTag], t: float) -> tuple[SparseSym, np.ndarray]:
    """Add the boundary terms of sigma nu + beta_r (u - ubar) = tau on ``tags``."""
    if not beta_r > 0.0:
        raise ValueError("beta_r must be positive")
    b = np.array(b, dtype=float)
    K = A.to_scipy().copy()
    for tag in tags:
        edges = mesh.edges_with_tag(tag)
        K = K + beta_r * edge_mass(mesh, edges)
        b += beta_r * edge_load(mesh, edges, ubar, t)
        b += edge_load(mesh, edges, tau, t)
    return SparseSym.from_scipy(K, check=False), b


# --- projection and norms ------------------------------------------------------

class GradientProjector:
    """L2 projection of the elementwise displacement gradient onto P1."""

    def __init__(self, mesh: Mesh, tol: float = 1e-12):
        self.mesh = mesh
        self.tol = tol
        self.mass = mass_matrix(mesh)
        self.area, self.grads = p1_geometry(mesh)
        nt = mesh.n_triangles
        rows = mesh.triangles.ravel()
        cols = np.repeat(np.arange(nt), 3)
        vals = np.repeat(self.area / 3.0, 3)
        # cell -> node load: g_i = sum over T containing i of |T|/3 * grad_T
        self._lump = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_vertices, nt))

    def cell_gradients(self, u: np.ndarray) -> np.ndarray:
        """Constant gradient per triangle, shape ``(M, 4)``."""
        uv = np.asarray(u, dtype=float).reshape(-1, 2)[self.mesh.triangles]  # (M, 3, 2)
        g = np.einsum("mac,mad->mcd", uv, self.grads)  # g[m, comp, dir]
        return g.reshape(-1, 4)

    def __call__(self, u) -> GradientField:
        vals = np.asarray(getattr(u, "values", u), dtype=float)
        rhs = self._lump @ self.cell_gradients(vals)
        out = np.empty((self.mesh.n_vertices, 4))
        for k in range(4):
            out[:, k] = cg_solve(self.mass, rhs[:, k], tol=self.tol).x
        return GradientField(self.mesh, out)


def project_gradient(u: DisplacementField, tol: float = 1e-12) -> GradientField:
    return GradientProjector(u.mesh, tol)(u)


def h1_norm(mesh: Mesh, u) -> float:
    """sqrt(int |u|^2 + int |grad u|^2), exact for P1."""
    return NormEvaluator(mesh).h1(u)


def linf_norm(d) -> float:
    vals = np.asarray(getattr(d, "values", d), dtype=float)
    return float(np.abs(vals).max()) if vals.size else 0.0


class NormEvaluator:
    """Cached H1 norm for repeated evaluation on one mesh."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.mass = mass_matrix(mesh).to_scipy()
        self.area, self.grads = p1_geometry(mesh)

    def h1(self, u) -> float:
        vals = np.asarray(getattr(u, "values", u), dtype=float)
        l2 = sum(float(vals[c::2] @ (self.mass @ vals[c::2])) for c in (0, 1))
        uv = vals.reshape(-1, 2)[self.mesh.triangles]
        g = np.einsum("mac,mad->mcd", uv, self.grads)
        semi = float(np.sum(self.area * np.sum(g ** 2, axis=(1, 2))))
        return float(np.sqrt(max(l2 + semi, 0.0)))

"""Sparse symmetric matrices and a Jacobi-preconditioned conjugate gradient.

CSR storage and the sparse matrix-vector product are delegated to
``scipy.sparse``; the Krylov iteration, the preconditioner and the
nullspace deflation used for traction-only problems live here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np
import scipy.sparse as sp


class LinalgError(Exception):
    pass


class IndexOutOfRange(LinalgError, IndexError):
    pass


class NotSymmetric(LinalgError, ValueError):
    pass


class ZeroDiagonal(LinalgError):
    pass


class NoConvergence(LinalgError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"CG did not converge in {iterations} iterations (relative residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True, eq=False)
class SparseSym:
    """Symmetric matrix in CSR form, full pattern stored."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    _csr: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        csr = sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))
        object.__setattr__(self, "_csr", csr)

    @classmethod
    def from_scipy(cls, a, check: bool = True) -> "SparseSym":
        a = sp.csr_matrix(a, copy=True)
        a.sum_duplicates()
        a.sort_indices()
        out = cls(a.shape[0], a.indptr.copy(), a.indices.copy(), a.data.copy())
        if check:
            out.check_symmetric()
        return out

    def check_symmetric(self, rtol: float = 1e-12) -> None:
        a = self._csr
        scale = np.abs(a.data).max() if a.nnz else 0.0
        diff = a - a.T
        worst = np.abs(diff.data).max() if diff.nnz else 0.0
        if worst > rtol * scale:
            raise NotSymmetric(f"|A - A^T| = {worst:.3e} exceeds {rtol:.0e} * max|A|")

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr

    def toarray(self) -> np.ndarray:
        return self._csr.toarray()

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def norm(self) -> float:
        """Largest absolute entry."""
        return float(np.abs(self.data).max()) if len(self.data) else 0.0

    def __matmul__(self, x):
        return self._csr @ x

    def __add__(self, other: "SparseSym") -> "SparseSym":
        return SparseSym.from_scipy(self._csr + other.to_scipy(), check=False)

    def scaled(self, s: float) -> "SparseSym":
        return SparseSym(self.n, self.indptr, self.indices, self.data * s)


def assemble_from_triplets(n: int, triplets: Iterable[tuple[int, int, float]] | None = None, *,
                           rows=None, cols=None, vals=None, check: bool = True) -> SparseSym:
    """Sum (i, j, value) triplets into a :class:`SparseSym`.

    Either pass ``triplets`` or the three parallel arrays ``rows``, ``cols``
    and ``vals``.  Duplicate entries are summed.
    """
    if triplets is not None:
        trip = list(triplets)
        rows = np.array([t[0] for t in trip], dtype=np.int64)
        cols = np.array([t[1] for t in trip], dtype=np.int64)
        vals = np.array([t[2] for t in trip], dtype=float)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
        raise IndexOutOfRange(f"triplet index outside [0, {n})")
    a = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return SparseSym.from_scipy(a, check=check)


@dataclass(frozen=True)
class DeflationSpace:
    """Orthonormal basis (columns of ``basis``) removed from CG iterates."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        gram = b.T @ b
        if not np.allclose(gram, np.eye(b.shape[1]), atol=1e-12, rtol=0.0):
            raise ValueError("deflation basis is not orthonormal")
        object.__setattr__(self, "basis", b)

    @property
    def vectors(self) -> list[np.ndarray]:
        return [self.basis[:, k] for k in range(self.basis.shape[1])]

    def project_out(self, v: np.ndarray) -> np.ndarray:
        return v - self.basis @ (self.basis.T @ v)


def rigid_body_modes(mesh, dof_map: str = "interleaved") -> DeflationSpace:
    """Orthonormalized translations and infinitesimal rotation of a 2D body."""
    if dof_map != "interleaved":
        raise ValueError("only the interleaved vector layout is supported")
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    nv = len(x)
    modes = np.zeros((2 * nv, 3))
    modes[0::2, 0] = 1.0
    modes[1::2, 1] = 1.0
    # centring keeps the Gram-Schmidt step well conditioned
    modes[0::2, 2] = -(y - y.mean())
    modes[1::2, 2] = x - x.mean()
    q, _ = np.linalg.qr(modes)
    # QR may flip signs; fix them so the output is reproducible
    q *= np.sign(np.sum(q * modes, axis=0))
    return DeflationSpace(q)


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float


def cg_solve(A: SparseSym, b: np.ndarray, tol: float = 1e-10, max_iter: int | None = None,
             deflate: DeflationSpace | None = None, x0: np.ndarray | None = None) -> CGResult:
    """Solve ``A x = b`` by Jacobi-preconditioned conjugate gradients.

    With ``deflate`` the components of ``b`` along the deflation vectors are
    removed first and all iterates stay orthogonal to them, so ``A`` only
    needs to be positive definite on the orthogonal complement.  The
    returned residual is relative to the (projected) right-hand side.
    """
    n = A.n
    b = np.asarray(b, dtype=float)
    if max_iter is None:
        max_iter = 10 * n
    diag = A.diagonal()
    if np.any(diag == 0.0):
        raise ZeroDiagonal(f"zero diagonal entry at row {int(np.flatnonzero(diag == 0.0)[0])}")
    inv_diag = 1.0 / diag

    if deflate is not None:
        proj = deflate.project_out
    else:
        def proj(v):
            return v

    b = proj(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0)
    x = np.zeros(n) if x0 is None else proj(np.asarray(x0, dtype=float).copy())
    r = b - A @ x
    if deflate is not None:
        r = proj(r)
    res = np.linalg.norm(r) / bnorm
    if res <= tol:
        return CGResult(x, 0, res)
    k = 0
    while True:
        z = proj(inv_diag * r)
        p = z.copy()
        rz = r @ z
        while k < max_iter:
            k += 1
            q = A @ p
            pq = p @ q
            if pq <= 0.0:
                raise NoConvergence(k, res)
            alpha = rz / pq
            x += alpha * p
            r -= alpha * q
            if deflate is not None:
                r = proj(r)
            res = np.linalg.norm(r) / bnorm
            if res <= tol:
                break
            z = proj(inv_diag * r)
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        else:
            raise NoConvergence(max_iter, res)
        if deflate is not None:
            x = proj(x)
        # the recursive residual can drift; confirm against the true one
        r = proj(b - A @ x)
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return CGResult(x, k, res)
        if k >= max_iter:
            raise NoConvergence(k, res)

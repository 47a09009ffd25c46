"""Generate the two bundled stand-in meshes for the perforated domains.

Both are the unit square (outer boundary Gamma1) with two inner holes: the
lower one tagged Gamma0, the upper one Gamma2.  ``omega1.msh`` has
rectangular holes with sharp corners, ``omega2.msh`` has elliptic holes
of the same extent.  They are geometric stand-ins only.

    python3 scripts/make_standin_meshes.py [--out src/kachanov/data]
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from kachanov.mesh import BoundaryTag, Mesh, validate, write_gmsh

H = 0.025
CENTERS = ((0.5, 0.25), (0.5, 0.75))
HALF = (0.2, 0.075)


def _square(h):
    k = int(round(1.0 / h))
    s = np.linspace(0.0, 1.0, k + 1)[:-1]
    return np.concatenate([np.c_[s, 0 * s], np.c_[1 + 0 * s, s], np.c_[1 - s, 1 + 0 * s], np.c_[0 * s, 1 - s]])


def _rect(c, half, h):
    (cx, cy), (a, b) = c, half
    nx, ny = int(round(2 * a / h)), max(int(round(2 * b / h)), 2)
    sx = np.linspace(-a, a, nx + 1)[:-1]
    sy = np.linspace(-b, b, ny + 1)[:-1]
    pts = np.concatenate([np.c_[sx, -b + 0 * sx], np.c_[a + 0 * sy, sy], np.c_[-sx, b + 0 * sx], np.c_[-a + 0 * sy, -sy]])
    return pts + (cx, cy)


def _ellipse(c, half, h):
    (cx, cy), (a, b) = c, half
    perim = np.pi * (3 * (a + b) - np.sqrt((3 * a + b) * (a + 3 * b)))
    th = np.linspace(0.0, 2 * np.pi, int(round(perim / h)) + 1)[:-1]
    return np.c_[cx + a * np.cos(th), cy + b * np.sin(th)]


def _inside(p, shape, c, half, pad=0.0):
    (cx, cy), (a, b) = c, half
    x, y = (p[:, 0] - cx) / (a + pad), (p[:, 1] - cy) / (b + pad)
    if shape == "rect":
        return (np.abs(x) < 1) & (np.abs(y) < 1)
    return x * x + y * y < 1


def build(shape: str, h: float = H, seed: int = 7) -> Mesh:
    hole = _rect if shape == "rect" else _ellipse
    bnd = [_square(h)] + [hole(c, HALF, h) for c in CENTERS]
    rng = np.random.default_rng(seed)
    g = np.arange(h, 1.0 - 0.5 * h, h)
    X, Y = np.meshgrid(g, g)
    inner = np.c_[X.ravel(), Y.ravel()] + rng.uniform(-0.15 * h, 0.15 * h, (X.size, 2))
    keep = np.ones(len(inner), bool)
    for c in CENTERS:
        keep &= ~_inside(inner, shape, c, HALF, pad=0.6 * h)
    pts = np.concatenate(bnd + [inner[keep]])
    tri = Delaunay(pts).simplices
    cent = pts[tri].mean(axis=1)
    drop = np.zeros(len(tri), bool)
    for c in CENTERS:
        drop |= _inside(cent, shape, c, HALF)
    tri = tri[~drop]
    a, b, c3 = (pts[tri[:, k]] for k in range(3))
    area = (b[:, 0] - a[:, 0]) * (c3[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c3[:, 0] - a[:, 0])
    tri[area < 0] = tri[area < 0][:, [0, 2, 1]]

    e = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    edges = uniq[counts == 1]
    if len(edges) != sum(len(p) for p in bnd):
        raise RuntimeError("triangulation does not conform to the hole boundaries")
    mid = pts[edges].mean(axis=1)
    outer = (np.min(np.abs(np.c_[mid, 1 - mid]), axis=1) < 1e-12)
    tags = np.where(outer, BoundaryTag.GAMMA1, np.where(mid[:, 1] < 0.5, BoundaryTag.GAMMA0, BoundaryTag.GAMMA2))
    m = Mesh(pts, tri, edges, tags.astype(np.int64))
    problems = validate(m)
    if problems:
        raise RuntimeError("; ".join(map(str, problems)))
    return m


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src" / "kachanov" / "data"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, shape in (("omega1.msh", "rect"), ("omega2.msh", "ellipse")):
        m = build(shape)
        (out / name).write_text(write_gmsh(m))
        print(f"{name}: {m.n_vertices} vertices, {m.n_triangles} triangles, h={m.h:.4f}")


if __name__ == "__main__":
    main()

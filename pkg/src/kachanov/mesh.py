"""Triangulations of 2D domains with tagged boundary segments.

Meshes are built from a structured unit-square generator, loaded from
MSH 2.2 ASCII files, or obtained by uniform (red) refinement of another
mesh.  A refined mesh keeps its parent's vertices as a prefix, which makes
nested prolongation exact.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


class BoundaryTag(enum.IntEnum):
    GAMMA0 = 0
    GAMMA1 = 1
    GAMMA2 = 2

    @classmethod
    def parse(cls, name: str | int | "BoundaryTag") -> "BoundaryTag":
        if isinstance(name, BoundaryTag):
            return name
        if isinstance(name, int):
            return cls(name)
        key = name.strip().upper().replace("_", "")
        for tag in cls:
            if tag.name.replace("_", "") == key:
                return tag
        raise ValueError(f"unknown boundary tag {name!r}")

    @property
    def label(self) -> str:
        return f"Gamma{int(self)}"


DEFAULT_TAG_ALIASES: dict[int, BoundaryTag] = {
    10: BoundaryTag.GAMMA0,
    11: BoundaryTag.GAMMA1,
    12: BoundaryTag.GAMMA2,
}


def check_aliases(aliases: Mapping[int, BoundaryTag]) -> dict[int, BoundaryTag]:
    """Normalize an alias map and reject non-injective ones."""
    out = {int(k): BoundaryTag.parse(v) for k, v in aliases.items()}
    if len(set(out.values())) != len(out):
        raise ValueError(f"tag alias map is not injective: {out}")
    return out


class MeshError(Exception):
    pass


class MalformedFile(MeshError):
    pass


class UnknownTag(MeshError):
    pass


class NonPlanar(MeshError):
    pass


class InvalidTopology(MeshError):
    pass


@dataclass(frozen=True)
class Violation:
    kind: str
    index: int
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind}[{self.index}] {self.detail}".rstrip()


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangle mesh.

    ``boundary_edges`` holds vertex-index pairs and ``edge_tags`` the
    matching :class:`BoundaryTag` values.  ``midpoint_parents`` is set on
    meshes produced by :func:`refine_uniform`: row ``k`` lists the two parent
    vertices whose midpoint is vertex ``n_parent + k``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    midpoint_parents: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _readonly(np.asarray(self.vertices, dtype=float).reshape(-1, 2)))
        object.__setattr__(self, "triangles", _readonly(np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)))
        object.__setattr__(self, "boundary_edges", _readonly(np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)))
        object.__setattr__(self, "edge_tags", _readonly(np.asarray(self.edge_tags, dtype=np.int64).reshape(-1)))
        if self.midpoint_parents is not None:
            object.__setattr__(
                self, "midpoint_parents",
                _readonly(np.asarray(self.midpoint_parents, dtype=np.int64).reshape(-1, 2)))
        if len(self.edge_tags) != len(self.boundary_edges):
            raise ValueError("edge_tags must match boundary_edges in length")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def h(self) -> float:
        """Longest edge length over all triangles."""
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
        return float(lengths.max())

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edges_with_tag(self, tag: BoundaryTag) -> np.ndarray:
        return self.boundary_edges[self.edge_tags == int(tag)]

    def vertices_with_tag(self, tag: BoundaryTag) -> np.ndarray:
        return np.unique(self.edges_with_tag(tag))

    def tags_present(self) -> set[BoundaryTag]:
        return {BoundaryTag(int(t)) for t in np.unique(self.edge_tags)}

    def tag_counts(self) -> dict[BoundaryTag, int]:
        return {tag: int(np.sum(self.edge_tags == int(tag))) for tag in BoundaryTag}


def generate_unit_square(n: int) -> Mesh:
    """Structured triangulation of [0,1]^2 with n cells per side.

    Every cell is split along its lower-left to upper-right diagonal.
    Bottom edges are tagged Gamma0, top edges Gamma2, the sides Gamma1.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    s = np.arange(n + 1) / n
    x, y = np.meshgrid(s, s)
    vertices = np.column_stack([x.ravel(), y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00, v10, v11, v01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    k = np.arange(n)
    bottom = np.column_stack([vid(k, 0), vid(k + 1, 0)])
    right = np.column_stack([vid(n, k), vid(n, k + 1)])
    top = np.column_stack([vid(k + 1, n), vid(k, n)])
    left = np.column_stack([vid(0, k + 1), vid(0, k)])
    edges = np.vstack([bottom, right, top, left])
    tags = np.concatenate([
        np.full(n, BoundaryTag.GAMMA0), np.full(n, BoundaryTag.GAMMA1),
        np.full(n, BoundaryTag.GAMMA2), np.full(n, BoundaryTag.GAMMA1),
    ])
    return Mesh(vertices, triangles, edges, tags)


def _edge_keys(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return lo * n + hi


def refine_uniform(m: Mesh) -> Mesh:
    """Red refinement: every triangle is split into four by its edge midpoints.

    Parent vertices keep their indices; midpoints are appended in order of
    the sorted undirected edge list.
    """
    nv = m.n_vertices
    t = m.triangles
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    all_keys = np.concatenate([_edge_keys(a, b, nv), _edge_keys(b, c, nv), _edge_keys(c, a, nv)])
    keys, inverse = np.unique(all_keys, return_inverse=True)
    nt = len(t)
    mab = nv + inverse[:nt]
    mbc = nv + inverse[nt:2 * nt]
    mca = nv + inverse[2 * nt:]
    parents = np.column_stack([keys // nv, keys % nv])
    vertices = np.vstack([m.vertices, 0.5 * (m.vertices[parents[:, 0]] + m.vertices[parents[:, 1]])])
    triangles = np.stack([
        np.column_stack([a, mab, mca]),
        np.column_stack([mab, b, mbc]),
        np.column_stack([mca, mbc, c]),
        np.column_stack([mab, mbc, mca]),
    ], axis=1).reshape(-1, 3)

    e = m.boundary_edges
    ekeys = _edge_keys(e[:, 0], e[:, 1], nv)
    pos = np.minimum(np.searchsorted(keys, ekeys), len(keys) - 1)
    if len(e) and not np.all(keys[pos] == ekeys):
        raise InvalidTopology("boundary edge is not an edge of any triangle")
    emid = nv + pos
    edges = np.stack([np.column_stack([e[:, 0], emid]), np.column_stack([emid, e[:, 1]])], axis=1).reshape(-1, 2)
    tags = np.repeat(m.edge_tags, 2)
    return Mesh(vertices, triangles, edges, tags, midpoint_parents=parents)


def prolong(m_fine: Mesh, values: np.ndarray) -> np.ndarray:
    """Interpolate nodal P1 values from the parent of ``m_fine`` onto ``m_fine``.

    ``values`` has the parent's vertex count along axis 0; the result is the
    exact P1 interpolant on the refined mesh.
    """
    if m_fine.midpoint_parents is None:
        raise ValueError("mesh was not produced by refine_uniform")
    p = m_fine.midpoint_parents
    values = np.asarray(values)
    if values.shape[0] != m_fine.n_vertices - len(p):
        raise ValueError("value count does not match the parent mesh")
    mid = 0.5 * (values[p[:, 0]] + values[p[:, 1]])
    return np.concatenate([values, mid], axis=0)


def validate(m: Mesh) -> list[Violation]:
    """Check the mesh invariants; an empty list means the mesh is valid."""
    out: list[Violation] = []
    nv = m.n_vertices
    if m.triangles.size and (m.triangles.min() < 0 or m.triangles.max() >= nv):
        bad = np.flatnonzero(((m.triangles < 0) | (m.triangles >= nv)).any(axis=1))
        return [Violation("IndexOutOfRange", int(i), "triangle references a missing vertex") for i in bad]
    if m.boundary_edges.size and (m.boundary_edges.min() < 0 or m.boundary_edges.max() >= nv):
        bad = np.flatnonzero(((m.boundary_edges < 0) | (m.boundary_edges >= nv)).any(axis=1))
        return [Violation("IndexOutOfRange", int(i), "edge references a missing vertex") for i in bad]

    for i in np.flatnonzero(m.signed_areas() <= 0.0):
        out.append(Violation("NegativeArea", int(i), "triangle is clockwise or degenerate"))

    t = m.triangles
    all_keys = np.concatenate([_edge_keys(t[:, 0], t[:, 1], nv),
                               _edge_keys(t[:, 1], t[:, 2], nv),
                               _edge_keys(t[:, 2], t[:, 0], nv)])
    keys, counts = np.unique(all_keys, return_counts=True)
    for k in keys[counts > 2]:
        out.append(Violation("NonManifoldEdge", int(k // nv), f"edge ({k // nv},{k % nv}) shared by >2 triangles"))

    bkeys = _edge_keys(m.boundary_edges[:, 0], m.boundary_edges[:, 1], nv)
    valid_tags = {int(tag) for tag in BoundaryTag}
    for i, tag in enumerate(m.edge_tags):
        if int(tag) not in valid_tags:
            out.append(Violation("UnknownTag", i, f"tag {int(tag)}"))
    uniq_b, first, bcounts = np.unique(bkeys, return_index=True, return_counts=True)
    for k, i0 in zip(uniq_b[bcounts > 1], first[bcounts > 1]):
        out.append(Violation("DuplicateTag", int(i0), f"edge ({k // nv},{k % nv}) tagged more than once"))

    count_of = dict(zip(keys.tolist(), counts.tolist()))
    for i, k in enumerate(bkeys.tolist()):
        if count_of.get(k, 0) != 1:
            out.append(Violation("NotBoundary", i, "tagged edge is not on the boundary"))
    tagged = set(uniq_b.tolist())
    for k in keys[counts == 1].tolist():
        if k not in tagged:
            out.append(Violation("MissingTag", int(k // nv), f"boundary edge ({k // nv},{k % nv}) has no tag"))
    return out


# --- MSH 2.2 ASCII -----------------------------------------------------------

def _sections(text: str) -> dict[str, list[str]]:
    lines = [ln.strip() for ln in text.splitlines()]
    sections: dict[str, list[str]] = {}
    i = 0
    while i < len(lines):
        ln = lines[i]
        if not ln:
            i += 1
            continue
        if not ln.startswith("$") or ln.startswith("$End"):
            raise MalformedFile(f"line {i + 1}: expected a section header, got {ln!r}")
        name = ln[1:]
        end = f"$End{name}"
        try:
            j = lines.index(end, i + 1)
        except ValueError:
            raise MalformedFile(f"section ${name} is not closed") from None
        if name in sections:
            raise MalformedFile(f"duplicate section ${name}")
        sections[name] = [x for x in lines[i + 1:j] if x]
        i = j + 1
    return sections


def read_gmsh(
    text: str | bytes,
    tag_aliases: Mapping[int, BoundaryTag] | None = None,
    check: bool = True,
) -> Mesh:
    """Parse an MSH 2.2 ASCII mesh.

    Line elements (type 1) become tagged boundary edges, using their first
    (physical) tag and ``tag_aliases``; triangles (type 2) form the domain.
    Clockwise triangles are reoriented.  With ``check=True`` the loaded mesh
    must pass :func:`validate`, otherwise :class:`InvalidTopology` is raised.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("ascii")
        except UnicodeDecodeError:
            raise MalformedFile("not an ASCII file") from None
    aliases = check_aliases(DEFAULT_TAG_ALIASES if tag_aliases is None else tag_aliases)
    sec = _sections(text)
    for name in ("MeshFormat", "Nodes", "Elements"):
        if name not in sec:
            raise MalformedFile(f"missing ${name} section")
    fmt = sec["MeshFormat"][0].split() if sec["MeshFormat"] else []
    if len(fmt) < 2 or fmt[0] not in ("2.2", "2.2.0") or fmt[1] != "0":
        raise MalformedFile(f"unsupported mesh format {' '.join(fmt)!r}; need 2.2 ASCII")

    try:
        nodes = sec["Nodes"]
        nn = int(nodes[0])
        if len(nodes) != nn + 1:
            raise MalformedFile(f"$Nodes declares {nn} nodes, found {len(nodes) - 1}")
        ids = np.empty(nn, dtype=np.int64)
        xyz = np.empty((nn, 3))
        for k, ln in enumerate(nodes[1:]):
            parts = ln.split()
            if len(parts) != 4:
                raise MalformedFile(f"bad node line {ln!r}")
            ids[k] = int(parts[0])
            xyz[k] = [float(v) for v in parts[1:]]
    except (ValueError, IndexError) as exc:
        raise MalformedFile(f"bad $Nodes section: {exc}") from None
    if len(np.unique(ids)) != nn:
        raise MalformedFile("duplicate node ids")
    if np.any(xyz[:, 2] != 0.0):
        raise NonPlanar(f"{int(np.sum(xyz[:, 2] != 0.0))} node(s) have nonzero z")
    index_of = {int(nid): k for k, nid in enumerate(ids)}

    tris, edges, tags = [], [], []
    try:
        elems = sec["Elements"]
        ne = int(elems[0])
        if len(elems) != ne + 1:
            raise MalformedFile(f"$Elements declares {ne} elements, found {len(elems) - 1}")
        for ln in elems[1:]:
            parts = [int(v) for v in ln.split()]
            etype, ntags = parts[1], parts[2]
            phys = parts[3:3 + ntags]
            conn = parts[3 + ntags:]
            if etype == 1:
                if len(conn) != 2:
                    raise MalformedFile(f"line element with {len(conn)} nodes")
                if not phys or phys[0] not in aliases:
                    raise UnknownTag(f"line element {parts[0]} has physical tag "
                                     f"{phys[0] if phys else None} without an alias")
                edges.append([index_of[c] for c in conn])
                tags.append(int(aliases[phys[0]]))
            elif etype == 2:
                if len(conn) != 3:
                    raise MalformedFile(f"triangle element with {len(conn)} nodes")
                tris.append([index_of[c] for c in conn])
            # points (15) and other entities carry no geometry for us
    except KeyError as exc:
        raise MalformedFile(f"element references unknown node {exc.args[0]}") from None
    except (ValueError, IndexError) as exc:
        raise MalformedFile(f"bad $Elements section: {exc}") from None
    if not tris:
        raise MalformedFile("no triangle elements")

    vertices = xyz[:, :2]
    tris = np.array(tris, dtype=np.int64)
    p = vertices[tris]
    area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    cw = area2 < 0
    tris[cw] = tris[cw][:, [0, 2, 1]]
    mesh = Mesh(vertices, tris, np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(tags, dtype=np.int64))
    if check:
        problems = validate(mesh)
        if problems:
            shown = "; ".join(str(v) for v in problems[:5])
            raise InvalidTopology(f"{len(problems)} violation(s): {shown}")
    return mesh


def load_gmsh(path, tag_aliases: Mapping[int, BoundaryTag] | None = None, check: bool = True) -> Mesh:
    with open(path, "rb") as fh:
        return read_gmsh(fh.read(), tag_aliases=tag_aliases, check=check)


def write_gmsh(m: Mesh, tag_aliases: Mapping[int, BoundaryTag] | None = None) -> str:
    """Serialize to MSH 2.2 ASCII (nodes 1-based, coordinates with 17 digits)."""
    aliases = check_aliases(DEFAULT_TAG_ALIASES if tag_aliases is None else tag_aliases)
    physical = {tag: alias for alias, tag in aliases.items()}
    buf = io.StringIO()
    buf.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
    buf.write(f"$Nodes\n{m.n_vertices}\n")
    for k, (x, y) in enumerate(m.vertices):
        buf.write(f"{k + 1} {x:.17g} {y:.17g} 0\n")
    buf.write("$EndNodes\n")
    buf.write(f"$Elements\n{len(m.boundary_edges) + m.n_triangles}\n")
    eid = 1
    for (a, b), tag in zip(m.boundary_edges, m.edge_tags):
        ph = physical[BoundaryTag(int(tag))]
        buf.write(f"{eid} 1 2 {ph} {ph} {a + 1} {b + 1}\n")
        eid += 1
    for a, b, c in m.triangles:
        buf.write(f"{eid} 2 2 1 1 {a + 1} {b + 1} {c + 1}\n")
        eid += 1
    buf.write("$EndElements\n")
    return buf.getvalue()

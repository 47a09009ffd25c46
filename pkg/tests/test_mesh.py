import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kachanov.mesh import (BoundaryTag, InvalidTopology, MalformedFile, Mesh, NonPlanar, UnknownTag,
                           check_aliases, generate_unit_square, prolong, read_gmsh, refine_uniform,
                           validate, write_gmsh)

G0, G1, G2 = BoundaryTag.GAMMA0, BoundaryTag.GAMMA1, BoundaryTag.GAMMA2


def _edge_set(m):
    return {frozenset(e) for e in m.boundary_edges.tolist()}


def test_smallest_square():
    m = generate_unit_square(1)
    assert (m.n_vertices, m.n_triangles, len(m.boundary_edges)) == (4, 2, 4)
    assert m.tag_counts() == {G0: 1, G1: 2, G2: 1}


def test_counts_n2():
    m = generate_unit_square(2)
    assert (m.n_vertices, m.n_triangles) == (9, 8)
    assert m.h == pytest.approx(math.sqrt(2) / 2, rel=1e-15)


def test_n4_boundary_edge_lengths():
    m = generate_unit_square(4)
    assert (m.n_vertices, m.n_triangles) == (25, 32)
    e = m.boundary_edges
    lengths = np.linalg.norm(m.vertices[e[:, 0]] - m.vertices[e[:, 1]], axis=1)
    np.testing.assert_allclose(lengths, 0.25, rtol=1e-15)


def test_tags_by_side():
    m = generate_unit_square(3)
    for tag, check in ((G0, lambda p: p[:, 1] == 0), (G2, lambda p: p[:, 1] == 1),
                       (G1, lambda p: (p[:, 0] == 0) | (p[:, 0] == 1))):
        mid = m.vertices[m.edges_with_tag(tag)].mean(axis=1)
        assert np.all(check(mid))


@given(st.integers(1, 12))
def test_generated_meshes_are_valid(n):
    m = generate_unit_square(n)
    assert validate(m) == []
    assert m.n_vertices == (n + 1) ** 2 and m.n_triangles == 2 * n * n
    assert m.h == pytest.approx(math.sqrt(2) / n, rel=1e-14)
    assert np.all(m.signed_areas() > 0)


def test_bad_n():
    with pytest.raises(ValueError):
        generate_unit_square(0)


def test_refine_matches_generator():
    fine = refine_uniform(generate_unit_square(1))
    ref = generate_unit_square(2)
    assert fine.n_vertices == ref.n_vertices and fine.n_triangles == ref.n_triangles
    key = lambda p: tuple(np.round(p, 12))
    assert {key(p) for p in fine.vertices} == {key(p) for p in ref.vertices}
    tri = lambda m: {frozenset(key(m.vertices[v]) for v in t) for t in m.triangles}
    assert tri(fine) == tri(ref)


def test_refine_twice_h():
    m = refine_uniform(refine_uniform(generate_unit_square(2)))
    assert m.h == pytest.approx(math.sqrt(2) / 8, rel=1e-14)


@given(st.integers(1, 6))
def test_refinement_properties(n):
    m = generate_unit_square(n)
    f = refine_uniform(m)
    assert f.n_triangles == 4 * m.n_triangles
    np.testing.assert_array_equal(f.vertices[:m.n_vertices], m.vertices)
    assert f.signed_areas().sum() == pytest.approx(m.signed_areas().sum(), rel=1e-12)
    assert validate(f) == []
    assert f.tag_counts() == {t: 2 * c for t, c in m.tag_counts().items()}


def test_prolong_reproduces_linear(rng):
    m = generate_unit_square(3)
    f = refine_uniform(m)
    a, b, c = rng.normal(size=3)
    lin = lambda p: a + b * p[:, 0] + c * p[:, 1]
    np.testing.assert_allclose(prolong(f, lin(m.vertices)), lin(f.vertices), atol=1e-14)
    with pytest.raises(ValueError):
        prolong(m, lin(m.vertices))


def test_validate_clockwise():
    m = generate_unit_square(2)
    tri = m.triangles.copy()
    tri[3] = tri[3][[0, 2, 1]]
    bad = Mesh(m.vertices, tri, m.boundary_edges, m.edge_tags)
    found = validate(bad)
    assert [v.kind for v in found] == ["NegativeArea"] and found[0].index == 3


def test_validate_missing_tag():
    m = generate_unit_square(2)
    bad = Mesh(m.vertices, m.triangles, m.boundary_edges[1:], m.edge_tags[1:])
    assert [v.kind for v in validate(bad)] == ["MissingTag"]


def test_validate_interior_edge_tagged():
    m = generate_unit_square(1)
    edges = np.vstack([m.boundary_edges, [[0, 3]]])
    bad = Mesh(m.vertices, m.triangles, edges, np.append(m.edge_tags, int(G1)))
    assert "NotBoundary" in [v.kind for v in validate(bad)]


def test_alias_map_must_be_injective():
    with pytest.raises(ValueError):
        check_aliases({10: G0, 11: G0})


# hand-written 2x2 square, as a mesh generator would export it
SQUARE2 = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
9
1 0 0 0
2 0.5 0 0
3 1 0 0
4 0 0.5 0
5 0.5 0.5 0
6 1 0.5 0
7 0 1 0
8 0.5 1 0
9 1 1 0
$EndNodes
$Elements
16
1 1 2 10 1 1 2
2 1 2 10 1 2 3
3 1 2 11 2 3 6
4 1 2 11 2 6 9
5 1 2 12 3 9 8
6 1 2 12 3 8 7
7 1 2 11 4 7 4
8 1 2 11 4 4 1
9 2 2 1 1 1 2 5
10 2 2 1 1 1 5 4
11 2 2 1 1 2 3 6
12 2 2 1 1 2 6 5
13 2 2 1 1 4 5 8
14 2 2 1 1 4 8 7
15 2 2 1 1 5 6 9
16 2 2 1 1 5 9 8
$EndElements
"""

ONE_TRIANGLE = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
3
1 0 0 0
2 1 0 0
3 0 1 0
$EndNodes
$Elements
4
1 1 2 10 1 1 2
2 1 2 11 1 2 3
3 1 2 12 1 3 1
4 2 2 1 1 1 2 3
$EndElements
"""


def test_read_hand_written_square():
    m = read_gmsh(SQUARE2)
    ref = generate_unit_square(2)
    assert (m.n_vertices, m.n_triangles) == (ref.n_vertices, ref.n_triangles)
    assert m.tag_counts() == ref.tag_counts()
    assert m.h == pytest.approx(ref.h)


def test_read_single_triangle():
    m = read_gmsh(ONE_TRIANGLE)
    assert m.n_vertices == 3 and m.n_triangles == 1
    assert m.tag_counts() == {G0: 1, G1: 1, G2: 1}


def test_read_reorients_clockwise():
    text = ONE_TRIANGLE.replace("4 2 2 1 1 1 2 3", "4 2 2 1 1 1 3 2")
    m = read_gmsh(text)
    assert m.signed_areas()[0] > 0


def test_dangling_node_reference():
    text = ONE_TRIANGLE.replace("3 1 2 12 1 3 1", "3 1 2 12 1 3 99")
    with pytest.raises(MalformedFile):
        read_gmsh(text)


def test_unknown_physical_tag():
    with pytest.raises(UnknownTag):
        read_gmsh(ONE_TRIANGLE.replace("2 1 2 11 1 2 3", "2 1 2 77 1 2 3"))


def test_custom_aliases():
    text = ONE_TRIANGLE.replace("1 1 2 10", "1 1 2 5")
    m = read_gmsh(text, tag_aliases={5: G0, 11: G1, 12: G2})
    assert m.tag_counts()[G0] == 1


def test_nonplanar():
    with pytest.raises(NonPlanar):
        read_gmsh(ONE_TRIANGLE.replace("3 0 1 0", "3 0 1 0.5"))


@pytest.mark.parametrize("text", [
    "",
    "$MeshFormat\n4.1 0 8\n$EndMeshFormat\n",
    ONE_TRIANGLE.replace("$EndNodes\n", ""),
    ONE_TRIANGLE.replace("4\n1 1 2", "7\n1 1 2"),
])
def test_malformed(text):
    with pytest.raises(MalformedFile):
        read_gmsh(text)


def test_missing_tag_is_invalid_topology():
    text = ONE_TRIANGLE.replace("4\n1 1 2 10 1 1 2\n", "3\n")
    with pytest.raises(InvalidTopology):
        read_gmsh(text)
    m = read_gmsh(text, check=False)
    assert [v.kind for v in validate(m)] == ["MissingTag"]


@given(st.integers(1, 6), st.booleans())
def test_round_trip(n, refine):
    m = generate_unit_square(n)
    if refine:
        m = refine_uniform(m)
    back = read_gmsh(write_gmsh(m))
    np.testing.assert_array_equal(back.vertices, m.vertices)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_array_equal(back.boundary_edges, m.boundary_edges)
    np.testing.assert_array_equal(back.edge_tags, m.edge_tags)


def test_bundled_standin_meshes_are_valid():
    from kachanov.simulation import resolve_mesh_path
    from kachanov.mesh import load_gmsh
    for name in ("omega1.msh", "omega2.msh"):
        m = load_gmsh(resolve_mesh_path(f"package:{name}"))
        assert validate(m) == []
        assert m.tags_present() == {G0, G1, G2}
        # lower inner boundary is Gamma0, upper is Gamma2
        assert m.vertices[m.vertices_with_tag(G0), 1].max() < 0.5
        assert m.vertices[m.vertices_with_tag(G2), 1].min() > 0.5

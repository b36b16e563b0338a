import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fixture_path
from wgfem.geometry import VACUUM, ElectricWall, Region, ResonatorGeometry, load_geometry, rectangle, tag_exterior
from wgfem.mesh import (
    EDGES,
    QUAD9_REF,
    QUADRATURE,
    TRI6_REF,
    MeshError,
    build_mesh,
    import_mesh,
    map_mesh,
    refine_geometry,
    serialize_mesh,
    shape_eval,
    shape_functions,
)


def geo_of(*regions):
    return ResonatorGeometry(tuple(regions), tag_exterior(regions, ElectricWall("can")), 1.0)


def test_single_patch_counts():
    m = map_mesh(geo_of(rectangle(1, 0, 2, 1, VACUUM, 3, 2)))
    assert m.n_elements == 6
    assert m.n_nodes == 35
    assert {e.kind for e in m.elements} == {"quad9"}


def test_two_patches_share_nodes():
    m = map_mesh(geo_of(rectangle(1, 0, 2, 1, VACUUM, 1, 1), rectangle(2, 0, 3, 1, VACUUM, 1, 1)))
    assert m.n_elements == 2
    assert m.n_nodes == 15
    m.check_conformity()


def test_opposite_counts_differ():
    r = Region(((1, 0), (2, 0), (2, 1), (1, 1)), VACUUM, (2, 3, 2, 2))
    with pytest.raises(MeshError, match="opposite edge counts differ"):
        map_mesh(geo_of(r))


def test_t_junction_rejected():
    a = rectangle(1, 0, 2, 2, VACUUM, 1, 1)
    b = rectangle(2, 0, 3, 1, VACUUM, 1, 1)
    c = rectangle(2, 1, 3, 2, VACUUM, 1, 1)
    with pytest.raises(MeshError):
        map_mesh(geo_of(a, b, c))


def test_every_tagged_edge_covered():
    geo = geo_of(rectangle(1, 0, 2, 1, VACUUM, 3, 2))
    m = map_mesh(geo)
    assert len(m.boundary_edges) == 2 * (3 + 2)
    assert {b.segment for b in m.boundary_edges} == set(geo.boundary_tags)


QUAD1 = """
node 0 1 0
node 1 2 0
node 2 2 1
node 3 1 1
node 4 1.5 0
node 5 2 0.5
node 6 1.5 1
node 7 1 0.5
node 8 1.5 0.5
elem 0 quad9 0 0 1 2 3 4 5 6 7 8
bedge 0 0 can
bedge 0 1 can
bedge 0 2 can
bedge 0 3 can
"""


def test_import_one_element():
    geo = geo_of(rectangle(1, 0, 2, 1, VACUUM, 1, 1))
    m = import_mesh(QUAD1, geo)
    assert (m.n_nodes, m.n_elements) == (9, 1)
    assert len(m.boundary_edges) == 4


def test_import_undefined_node():
    geo = geo_of(rectangle(1, 0, 2, 1, VACUUM, 1, 1))
    with pytest.raises(MeshError, match="undefined node 99"):
        import_mesh(QUAD1.replace("5 6 7 8\n", "5 6 7 99\n"), geo)


def test_import_negative_jacobian():
    geo = geo_of(rectangle(1, 0, 2, 1, VACUUM, 1, 1))
    flipped = QUAD1.replace("elem 0 quad9 0 0 1 2 3 4 5 6 7 8", "elem 0 quad9 0 3 2 1 0 6 5 4 7 8")
    with pytest.raises(MeshError, match="Jacobian"):
        import_mesh(flipped, geo)


def test_import_untagged_edge():
    geo = geo_of(rectangle(1, 0, 2, 1, VACUUM, 1, 1))
    # the left edge sits off every geometry segment, so no tag can be inherited
    moved = QUAD1.replace("node 0 1 0", "node 0 1.2 0").replace("node 3 1 1", "node 3 1.2 1")
    moved = moved.replace("node 7 1 0.5", "node 7 1.2 0.5").replace("bedge 0 3 can\n", "")
    with pytest.raises(MeshError, match="no boundary condition"):
        import_mesh(moved, geo)


def test_serialize_round_trip():
    geo = geo_of(rectangle(1, 0, 2, 1, VACUUM, 2, 3), rectangle(2, 0, 3, 1, VACUUM, 2, 3))
    m = map_mesh(geo)
    m2 = import_mesh(serialize_mesh(m), geo)
    assert np.array_equal(m.nodes, m2.nodes)
    assert [e.nodes for e in m.elements] == [e.nodes for e in m2.elements]
    assert m2.area() == pytest.approx(m.area(), rel=1e-14)


def test_toroid_fixture_imports():
    geo, _ = load_geometry(fixture_path("toroid"))
    m = build_mesh(geo)
    assert {e.kind for e in m.elements} == {"tri6"}
    assert m.n_elements == 9584
    m.check_conformity()
    assert m.area() == pytest.approx(sum(r.area() for r in geo.regions), rel=1e-12)


@pytest.mark.parametrize("kind", ["quad9", "tri6"])
def test_nodal_interpolation(kind):
    ref = QUAD9_REF if kind == "quad9" else TRI6_REF
    N, _ = shape_functions(kind, ref)
    assert np.allclose(N, np.eye(len(ref)), atol=1e-15)


def test_center_node():
    N, _ = shape_eval("quad9", (0.0, 0.0))
    assert N[8] == 1.0 and np.all(N[:8] == 0.0)


def test_gauss_exactness():
    q = QUADRATURE["quad9"]
    val = np.sum(q.weights * q.points[:, 0] ** 4 * q.points[:, 1] ** 4)
    assert abs(val - 0.16) < 1e-14


def test_triangle_rule_degree5():
    q = QUADRATURE["tri6"]
    # int over the unit triangle of r^a s^b = a! b! / (a + b + 2)!
    from math import factorial

    for a in range(6):
        for b in range(6 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            got = np.sum(q.weights * q.points[:, 0] ** a * q.points[:, 1] ** b)
            assert abs(got - exact) < 1e-15


def _ref_point(kind, u, v):
    if kind == "quad9":
        return (2 * u - 1, 2 * v - 1)
    return (u * (1 - v), v * (1 - u) * 0.999)


@settings(max_examples=60, deadline=None)
@given(kind=st.sampled_from(["quad9", "tri6"]), u=st.floats(0, 1), v=st.floats(0, 1))
def test_partition_of_unity(kind, u, v):
    N, dN = shape_eval(kind, _ref_point(kind, u, v))
    assert abs(N.sum() - 1) < 1e-14
    assert np.all(np.abs(dN.sum(axis=0)) < 1e-14)


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(["quad9", "tri6"]), u=st.floats(0.05, 0.95), v=st.floats(0.05, 0.95))
def test_gradient_vs_finite_difference(kind, u, v):
    p = np.array(_ref_point(kind, u, v))
    _, dN = shape_eval(kind, p)
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (shape_eval(kind, p + e)[0] - shape_eval(kind, p - e)[0]) / (2 * h)
        assert np.allclose(fd, dN[:, k], atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(a=st.integers(0, 2), b=st.integers(0, 2), r=st.floats(-1, 1), s=st.floats(-1, 1))
def test_quad9_reproduces_biquadratics(a, b, r, s):
    coeffs = QUAD9_REF[:, 0] ** a * QUAD9_REF[:, 1] ** b
    N, _ = shape_eval("quad9", (r, s))
    assert abs(N @ coeffs - r**a * s**b) < 1e-13


@settings(max_examples=15, deadline=None)
@given(nx=st.integers(1, 4), ny=st.integers(1, 4), skew=st.floats(-0.3, 0.3))
def test_refinement_quadruples(nx, ny, skew):
    r = Region(((1, 0), (2, 0), (2 + skew, 1), (1, 1)), VACUUM, (nx, ny, nx, ny))
    geo = geo_of(r)
    m1, m2 = map_mesh(geo), map_mesh(refine_geometry(geo, 2))
    assert m2.n_elements == 4 * m1.n_elements
    assert m2.area() == pytest.approx(m1.area(), rel=1e-12)
    assert m1.area() == pytest.approx(r.area(), rel=1e-12)
    m2.check_conformity()


def test_edges_are_listed_ccw():
    for kind, ref in (("quad9", QUAD9_REF), ("tri6", TRI6_REF)):
        for a, mid, b in EDGES[kind]:
            assert np.allclose(ref[mid], 0.5 * (ref[a] + ref[b]))

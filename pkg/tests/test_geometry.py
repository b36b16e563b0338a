import math

import pytest
from hypothesis import given, settings, strategies as st

from conftest import fixture_path
from wgfem.geometry import (
    VACUUM,
    ElectricWall,
    GeometryError,
    MagneticWall,
    Material,
    RadiationMatch,
    ResonatorGeometry,
    SolverSettings,
    load_geometry,
    make_cylindrical_cavity,
    parse_geometry,
    rectangle,
    serialize_geometry,
    tag_exterior,
    validate,
)

UNIT_SQUARE = """
length_unit = 1.0
boundaries = [
  { region = 0, edges = [0, 1, 2, 3], condition = "ElectricWall" },
]
[[regions]]
material = "vacuum"
vertices = [[1, 0], [2, 0], [2, 1], [1, 1]]
divisions = [2, 2]
"""


def test_unit_square_parses():
    geo, s = parse_geometry(UNIT_SQUARE)
    assert len(geo.regions) == 1
    assert len(geo.boundary_tags) == 4
    assert all(isinstance(bc, ElectricWall) for bc in geo.boundary_tags.values())
    assert s == SolverSettings()


def test_negative_x_rejected():
    with pytest.raises(GeometryError, match="x coordinate negative"):
        parse_geometry(UNIT_SQUARE.replace("[1, 0], [2, 0]", "[-0.1, 0], [2, 0]"))


def test_unknown_material():
    with pytest.raises(GeometryError, match="unknown material"):
        parse_geometry(UNIT_SQUARE.replace('"vacuum"', '"unobtainium"'))


def test_parse_error_has_position():
    with pytest.raises(GeometryError, match="line"):
        parse_geometry("length_unit = = 1")


def test_missing_length_unit():
    with pytest.raises(GeometryError, match="length_unit"):
        parse_geometry(UNIT_SQUARE.replace("length_unit = 1.0", ""))


def test_untagged_external_edge():
    with pytest.raises(GeometryError, match="no boundary condition"):
        parse_geometry(UNIT_SQUARE.replace("[0, 1, 2, 3]", "[0, 1, 2]"))


def test_double_tag_rejected():
    text = UNIT_SQUARE.replace(
        "]\n[[regions]]", '  { region = 0, edge = 1, condition = "MagneticWall" },\n]\n[[regions]]'
    )
    with pytest.raises(GeometryError, match="more than once"):
        parse_geometry(text)


def test_overlap_rejected():
    a = rectangle(0, 0, 1, 1, VACUUM, 1, 1)
    b = rectangle(0.5, 0.5, 1.5, 1.5, VACUUM, 1, 1)
    with pytest.raises(GeometryError, match="overlap"):
        validate(ResonatorGeometry((a, b), {}, 1.0))


def test_clockwise_rejected():
    r = rectangle(0, 0, 1, 1, VACUUM, 1, 1)
    cw = type(r)(tuple(reversed(r.vertices)), VACUUM, (1, 1, 1, 1))
    with pytest.raises(GeometryError, match="counter-clockwise"):
        validate(ResonatorGeometry((cw,), tag_exterior([cw], ElectricWall()), 1.0))


def test_interface_cannot_carry_wall():
    a = rectangle(0, 0, 1, 1, VACUUM, 1, 1)
    b = rectangle(1, 0, 2, 1, VACUUM, 1, 1)
    tags = tag_exterior([a, b], ElectricWall())
    tags[(0, 1)] = MagneticWall()
    with pytest.raises(GeometryError, match="internal interface"):
        validate(ResonatorGeometry((a, b), tags, 1.0))


def test_on_axis_edge_may_stay_untagged():
    geo = make_cylindrical_cavity(1.0, 1.0)
    assert (0, 3) not in geo.boundary_tags
    assert len(geo.boundary_tags) == 3


def test_cavity_constructor():
    geo = make_cylindrical_cavity(1.0, 1.0, 1.0, axis_offset=1e-3)
    assert len(geo.regions) == 1 and geo.regions[0].material == VACUUM
    assert len(geo.boundary_tags) == 4
    geo = make_cylindrical_cavity(0.5, 2.0, 9.0)
    m = geo.regions[0].material
    assert (m.eps_perp, m.eps_para) == (9.0, 9.0) and m.isotropic
    with pytest.raises(GeometryError):
        make_cylindrical_cavity(0.0, 1.0, 1.0)


def test_material_bounds():
    Material("ok", 1 - 1e-13, 1.0)
    with pytest.raises(GeometryError):
        Material("bad", 0.5, 1.0)


def test_settings_bounds():
    with pytest.raises(GeometryError):
        SolverSettings(M=-1)
    with pytest.raises(GeometryError):
        SolverSettings(n_modes=0)


def test_radiation_match_parsing():
    text = UNIT_SQUARE.replace(
        '{ region = 0, edges = [0, 1, 2, 3], condition = "ElectricWall" }',
        '{ region = 0, edges = [0, 2, 3], condition = "ElectricWall" },\n'
        '  { region = 0, edge = 1, condition = "RadiationMatch", match_frequency_hz = 1e9, mix_angle_deg = 30 }',
    )
    geo, _ = parse_geometry(text)
    bc = geo.boundary_tags[(0, 1)]
    assert isinstance(bc, RadiationMatch)
    assert bc.mix_angle == pytest.approx(math.pi / 6)
    assert bc.tangent_toggle == "magnetic"
    with pytest.raises(GeometryError, match="match_frequency"):
        parse_geometry(text.replace(", match_frequency_hz = 1e9", ""))


def test_uwa_fixture():
    geo, s = load_geometry(fixture_path("uwa"))
    mats = geo.materials
    assert set(mats) == {"sapphire", "vacuum"}
    assert (mats["sapphire"].eps_perp, mats["sapphire"].eps_para) == (9.2725, 11.3486)
    assert len(geo.regions) > 2
    xs = [x for r in geo.regions if r.material.name == "sapphire" for x, _ in r.vertices]
    assert max(xs) == pytest.approx(49.97e-3 / 2, rel=1e-12)
    assert s.M == 14


@pytest.mark.parametrize(
    "name", ["cylinder", "sapphire_cylinder", "uwa", "microdisk", "microdisk_wall", "microdisk_match",
             "bragg", "toroid", "npl"]
)
def test_fixtures_round_trip(name):
    geo, s = load_geometry(fixture_path(name))
    geo2, s2 = parse_geometry(serialize_geometry(geo, s))
    assert s2 == s
    assert len(geo2.regions) == len(geo.regions)
    for r1, r2 in zip(geo.regions, geo2.regions):
        assert r1.material == r2.material and r1.divisions == r2.divisions and r1.corners == r2.corners
        assert all(math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-15)
                   for p, q in zip(r1.vertices, r2.vertices) for a, b in zip(p, q))
    assert geo2.boundary_tags == geo.boundary_tags


coords = st.floats(0.1, 10.0, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(x0=coords, w=coords, y0=st.floats(-5, 5), h=coords, e1=st.floats(1, 20), e2=st.floats(1, 20),
       n=st.integers(1, 5))
def test_round_trip_property(x0, w, y0, h, e1, e2, n):
    mat = Material("m", e1, e2)
    r = rectangle(x0, y0, x0 + w, y0 + h, mat, n, n + 1)
    tags = tag_exterior([r], ElectricWall("can"), {(0, 0): MagneticWall("mirror")})
    geo = ResonatorGeometry((r,), tags, 1.0)
    validate(geo)
    settings_ = SolverSettings(M=n, n_modes=3, shift_frequency=1e9, alpha=0.5)
    geo2, s2 = parse_geometry(serialize_geometry(geo, settings_))
    assert geo2.regions == geo.regions
    assert geo2.boundary_tags == geo.boundary_tags
    assert s2 == settings_


@settings(max_examples=30, deadline=None)
@given(dx=st.floats(0.0, 0.9), dy=st.floats(0.0, 0.9))
def test_overlap_detection_property(dx, dy):
    a = rectangle(1, 0, 2, 1, VACUUM, 1, 1)
    b = rectangle(1 + dx, dy, 2 + dx, 1 + dy, VACUUM, 1, 1)
    with pytest.raises(GeometryError, match="overlap"):
        validate(ResonatorGeometry((a, b), {}, 1.0))

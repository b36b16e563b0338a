"""Regenerate the geometry fixtures in fixtures/.

Run from the repository root:  python3 scripts/make_fixtures.py
Triangle meshes (toroid, NPL) need the optional `triangle` package.
Dimensions that the source publication leaves open are recorded in each
fixture's [metadata] table.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from wgfem.geometry import (
    VACUUM,
    ElectricWall,
    MagneticWall,
    Material,
    RadiationMatch,
    Region,
    ResonatorGeometry,
    SolverSettings,
    make_cylindrical_cavity,
    serialize_geometry,
    tag_exterior,
    validate,
)
from wgfem.mesh import import_mesh, serialize_mesh

OUT = Path(__file__).resolve().parent.parent / "fixtures"

SAPPHIRE_4K = (9.2725, 11.3486)
MM, UM = 1e-3, 1e-6


def quad(vertices, material, nx, ny, name=""):
    return Region(tuple((float(x), float(y)) for x, y in vertices), material, (nx, ny, nx, ny), name=name)


def write(name, geometry, settings, mesh_text=None):
    validate(geometry)
    if mesh_text is not None:
        (OUT / f"{name}.mesh").write_text(mesh_text)
    (OUT / f"{name}.toml").write_text(serialize_geometry(geometry, settings))
    print("wrote", name)


def scaled_regions(regions, unit):
    """Regions given in file units -> metres (geometry objects always hold SI)."""
    return tuple(
        Region(tuple((x * unit, y * unit) for x, y in r.vertices), r.material, r.divisions, r.corners, r.name)
        for r in regions
    )


# ---------------------------------------------------------------- cylinder


def cylinder():
    g = make_cylindrical_cavity(1.0, 1.0, divisions=(16, 16))
    g = ResonatorGeometry(g.regions, g.boundary_tags, 1.0, None,
                          {"description": "empty PEC right cylinder, a = d = 1 m"})
    write("cylinder", g, SolverSettings(M=0, n_modes=4))


# ---------------------------------------------------------------- sapphire-loaded cylinder


def sapphire_cylinder():
    """Sapphire puck r = 10 mm, h = 10 mm centred in a copper can r = 15 mm, h = 20 mm."""
    sap = Material("sapphire", *SAPPHIRE_4K)
    xs, ys = (0, 10, 15), (0, 5, 15, 20)
    nx, ny = (6, 4), (3, 6, 3)
    regions = []
    for j in range(3):
        for i in range(2):
            mat = sap if (i, j) == (0, 1) else VACUUM
            regions.append(quad([(xs[i], ys[j]), (xs[i + 1], ys[j]), (xs[i + 1], ys[j + 1]), (xs[i], ys[j + 1])],
                                mat, nx[i], ny[j]))
    regions = scaled_regions(regions, MM)
    g = ResonatorGeometry(regions, tag_exterior(regions, ElectricWall("can")), MM, None,
                          {"description": "sapphire puck in a cylindrical can (synthetic-fit fixture)"})
    write("sapphire_cylinder", g, SolverSettings(M=1, n_modes=4))


# ---------------------------------------------------------------- UWA sloping shoulders


def uwa():
    sap = Material("sapphire", *SAPPHIRE_4K)
    R, r_sh, side, sh = 49.97 / 2, 19.988, 19.986, 4.996
    r_sp = 5.0  # assumed spindle radius
    Rc, Hc = 44.0, 66.0  # assumed can
    yc = Hc / 2
    y = [0, yc - side / 2 - sh, yc - side / 2, yc + side / 2, yc + side / 2 + sh, Hc]
    ny = [10, 6, 20, 6, 10]
    c0, c1, c2 = 3, 16, 14
    inner = [r_sh, R, R, r_sh]  # sapphire outer radius at y[1..4]
    regions = []
    for j in range(5):
        y0, y1 = y[j], y[j + 1]
        regions.append(quad([(0, y0), (r_sp, y0), (r_sp, y1), (0, y1)], sap, c0, ny[j]))
        if j in (0, 4):
            xb = r_sh
            regions.append(quad([(r_sp, y0), (xb, y0), (xb, y1), (r_sp, y1)], VACUUM, c1, ny[j]))
            regions.append(quad([(xb, y0), (Rc, y0), (Rc, y1), (xb, y1)], VACUUM, c2, ny[j]))
        else:
            xb0, xb1 = inner[j - 1], inner[j]
            regions.append(quad([(r_sp, y0), (xb0, y0), (xb1, y1), (r_sp, y1)], sap, c1, ny[j]))
            regions.append(quad([(xb0, y0), (Rc, y0), (Rc, y1), (xb1, y1)], VACUUM, c2, ny[j]))
    regions = scaled_regions(regions, MM)
    meta = {
        "description": "UWA sloping-shoulder cryogenic sapphire resonator, WGE 14,0,0 near 11.9 GHz",
        "sapphire": "OD 49.97 mm, sidewall 19.986 mm, shoulders 4.996 mm axial, shoulder inner radius 19.988 mm",
        "assumed_spindle_radius_mm": r_sp,
        "assumed_can_radius_mm": Rc,
        "assumed_can_height_mm": Hc,
        "assumption_note": "can dimensions are not published; sapphire centred axially in the can",
    }
    g = ResonatorGeometry(regions, tag_exterior(regions, ElectricWall("can")), MM, None, meta)
    write("uwa", g, SolverSettings(M=14, n_modes=4, shift_frequency=11.9e9))


# ---------------------------------------------------------------- microdisk


MD_R, MD_T, MD_ANGLE = 1.06, 0.255, math.radians(26.0)
MD_EPS = 3.36**2


def _microdisk_core(x_left, y_band, x_mid, cols, bands):
    """Disk plus a surrounding rectangular block [x_left, 1.5] x [-y_band, y_band] (um)."""
    disk = Material("gaalas", MD_EPS, MD_EPS)
    h = MD_T / 2
    x_bot, x_top = MD_R + h * math.tan(MD_ANGLE), MD_R - h * math.tan(MD_ANGLE)
    rows = [(-y_band, -h, x_bot, x_bot, VACUUM), (-h, h, x_bot, x_top, disk), (h, y_band, x_top, x_top, VACUUM)]
    out = []
    for (y0, y1, xa, xb, mat), nb in zip(rows, bands):
        out.append(quad([(x_left, y0), (x_mid, y0), (x_mid, y1), (x_left, y1)], mat, cols[0], nb))
        out.append(quad([(x_mid, y0), (xa, y0), (xb, y1), (x_mid, y1)], mat, cols[1], nb))
        out.append(quad([(xa, y0), (1.5, y0), (1.5, y1), (xb, y1)], VACUUM, cols[2], nb))
    return out


def microdisk():
    cols, bands = (4, 10, 10), (10, 6, 10)
    core = _microdisk_core(0.02, 1.0, 0.6, cols, bands)
    # far bands above and below the core block
    far = []
    for y0, y1 in ((-5.0, -1.0), (1.0, 5.0)):
        h = MD_T / 2
        xs = (0.02, 0.6, MD_R + h * math.tan(MD_ANGLE) if y0 < 0 else MD_R - h * math.tan(MD_ANGLE), 1.5)
        for i in range(3):
            far.append(quad([(xs[i], y0), (xs[i + 1], y0), (xs[i + 1], y1), (xs[i], y1)], VACUUM, cols[i], 10))
    regions = scaled_regions(core + far, UM)
    meta = {
        "description": "conical GaAlAs microdisk, TE p=1 m=11 near 1263.6 nm",
        "disk": "median diameter 2.12 um, thickness 255 nm, sidewall 26 deg to the axis, n = 3.36",
        "domain": "x 0.02..1.5 um, y -5..5 um, electric walls",
    }
    g = ResonatorGeometry(regions, tag_exterior(regions, ElectricWall("box")), UM, None, meta)
    write("microdisk", g, SolverSettings(M=11, n_modes=4, shift_frequency=2.373e14))


def microdisk_radiation(kind):
    """Half-disk domain of 12 um diameter centred at x = 0.01 um, outer arc either wall or match."""
    x0, Rs = 0.01, 6.0
    cols, bands = (4, 12, 12), (10, 8, 10)
    core = _microdisk_core(x0, 1.0, 0.6, cols, bands)
    n_r = 16
    h = MD_T / 2
    x_bot, x_top = MD_R + h * math.tan(MD_ANGLE), MD_R - h * math.tan(MD_ANGLE)

    def arc(a0, a1, n):
        t = np.linspace(a0, a1, n + 1)
        return [(x0 + Rs * math.cos(a), Rs * math.sin(a)) for a in t]

    sub = 4  # polygon vertices per element along the arc
    # the ring between the core block and the arc: one patch per block edge, arc shares in
    # proportion to element counts so neighbouring patches agree on counts
    box = [(x0, -1.0), (0.6, -1.0), (x_bot, -1.0), (1.5, -1.0), (1.5, -h), (1.5, h), (1.5, 1.0),
           (x_top, 1.0), (0.6, 1.0), (x0, 1.0)]
    counts = list(cols) + list(bands) + list(cols[::-1])
    spans = [(-math.pi / 2, -math.pi / 4, cols), (-math.pi / 4, math.pi / 4, bands),
             (math.pi / 4, math.pi / 2, cols[::-1])]
    angles = [-math.pi / 2]
    for a0, a1, cs in spans:
        for c in cs:
            angles.append(angles[-1] + (a1 - a0) * c / sum(cs))
    ring = []
    for i, n in enumerate(counts):
        a, b = box[i], box[i + 1]
        pts = arc(angles[i], angles[i + 1], n * sub)
        ring.append(Region(tuple(pts + [b, a]), VACUUM, (n, n_r, n, n_r),
                           (0, len(pts) - 1, len(pts), len(pts) + 1)))
    regions = scaled_regions(core + ring, UM)
    if kind == "wall":
        outer = ElectricWall("sphere")
    else:
        outer = RadiationMatch(2.3725e14, math.pi / 4, "magnetic", "sphere")
    tags = tag_exterior(regions, outer)
    for (ri, k) in list(tags):
        a, b = regions[ri].edge(k)
        if abs(a[0] - x0 * UM) < 1e-12 and abs(b[0] - x0 * UM) < 1e-12:
            tags[(ri, k)] = ElectricWall("axis")
    meta = {
        "description": f"microdisk inside a 12 um half-disk; outer boundary {kind}",
        "outer_boundary_label": "sphere",
        "arc_chord_error_um": Rs * (1 - math.cos(max(np.diff(angles) / np.array(counts)) / (2 * sub))),
    }
    g = ResonatorGeometry(regions, tags, UM, None, meta)
    write(f"microdisk_{kind}", g, SolverSettings(M=11, n_modes=4, shift_frequency=2.3725e14))


# ---------------------------------------------------------------- Bragg cavity


def bragg():
    """Alumina:air third-order Bragg cavity: three nested alumina L-shells in a square can.

    Quarter-wave layers at 8.09 GHz; electric wall on the mirror plane y = 0.
    """
    alumina = Material("alumina", 9.75, 9.75)
    lam = 299792458.0 / 8.0873e9 * 1e3  # mm
    t_air, t_al = lam / 4, lam / 4 / math.sqrt(9.75)
    widths = [t_air * 1.5] + [t_al, t_air] * 3
    n_el = [9] + [3, 6] * 3
    edges = np.concatenate([[0.0], np.cumsum(widths)])
    regions = []
    for j in range(len(widths)):
        for i in range(len(widths)):
            mat = alumina if max(i, j) % 2 == 1 else VACUUM
            regions.append(quad([(edges[i], edges[j]), (edges[i + 1], edges[j]), (edges[i + 1], edges[j + 1]),
                                 (edges[i], edges[j + 1])], mat, n_el[i], n_el[j]))
    regions = scaled_regions(regions, MM)
    tags = tag_exterior(regions, ElectricWall("can"))
    for (ri, k) in list(tags):
        a, b = regions[ri].edge(k)
        if a[1] == 0.0 and b[1] == 0.0:
            tags[(ri, k)] = ElectricWall("mirror")
    meta = {
        "description": "3rd-order Bragg-cavity alumina:air resonator, upper half (mirror plane y = 0)",
        "assumption_note": "layer thicknesses are quarter waves at 8.0873 GHz; eps_alumina = 9.75 assumed",
    }
    g = ResonatorGeometry(regions, tags, MM, None, meta)
    write("bragg", g, SolverSettings(M=0, n_modes=6, shift_frequency=8.0e9))


# ---------------------------------------------------------------- triangle meshes


def _triangulate(regions, max_area, min_angle=30):
    """Quadratic triangulation of a set of polygons; returns mesh text in file units."""
    import triangle

    verts, index, segs = [], {}, []

    def vid(p):
        key = (round(p[0], 9), round(p[1], 9))
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    seeds = []
    for ri, r in enumerate(regions):
        ids = [vid(p) for p in r.vertices]
        for k in range(len(ids)):
            segs.append(tuple(sorted((ids[k], ids[(k + 1) % len(ids)]))))
        poly = r.polygon()
        pt = poly.representative_point()
        seeds.append([pt.x, pt.y, ri, max_area[ri]])
    segs = sorted(set(segs))
    data = {"vertices": np.array(verts), "segments": np.array(segs), "regions": np.array(seeds)}
    t = triangle.triangulate(data, f"pq{min_angle}Aao2")
    P, T, attr = t["vertices"], t["triangles"], t["triangle_attributes"][:, 0].astype(int)
    lines = [f"node {i} {x!r} {y!r}" for i, (x, y) in enumerate(P.tolist())]
    for e, (tri, ri) in enumerate(zip(T, attr)):
        c = [int(v) for v in tri]
        # triangle puts the midpoint of the edge opposite corner k at slot 3 + k
        conn = [c[0], c[1], c[2], c[5], c[3], c[4]]
        for a, m, b in ((0, 3, 1), (1, 4, 2), (2, 5, 0)):
            assert np.allclose(P[conn[m]], 0.5 * (P[conn[a]] + P[conn[b]]))
        lines.append(f"elem {e} tri6 {ri} " + " ".join(map(str, conn)))
    return "\n".join(lines) + "\n"


def _circle(cx, cy, r, n, a0=0.0):
    t = a0 + 2 * math.pi * np.arange(n) / n
    return [(cx + r * math.cos(a), cy + r * math.sin(a)) for a in t]


def toroid():
    """Silica toroid, D = 16 um, d = 3 um, in the 8 x 8 um window x 4..12, y -4..4; no web modelled."""
    silica = Material("silica", 2.090, 2.090)
    n_circ = 192
    circle = _circle(8.0, 0.0, 1.5, n_circ, -math.pi / 2)
    q = n_circ // 4
    disk = Region(tuple(circle), silica, (q, q, q, q), (0, q, 2 * q, 3 * q), "toroid")
    # vacuum split by y = 0 into two simple polygons; circle[q] = (9.5, 0), circle[3q] = (6.5, 0)
    upper = [circle[q], (12.0, 0.0), (12.0, 4.0), (4.0, 4.0), (4.0, 0.0)] + [circle[k] for k in range(3 * q, q, -1)]
    lower = [circle[3 * q], (4.0, 0.0), (4.0, -4.0), (12.0, -4.0), (12.0, 0.0)] + [
        circle[k % n_circ] for k in range(q, -q, -1)
    ]
    top = Region(tuple(upper), VACUUM, (1, 1, 1, 1), (1, 2, 3, 4), "upper")
    bottom = Region(tuple(lower), VACUUM, (1, 1, 1, 1), (1, 2, 3, 4), "lower")
    regions = [disk, top, bottom]
    text = _triangulate(regions, [0.0025, 0.02, 0.02])
    regions_si = scaled_regions(regions, UM)
    geo = ResonatorGeometry(tuple(regions_si), tag_exterior(regions_si, ElectricWall("window")), UM, None, {})
    mesh = import_mesh(text, geo)
    meta = {
        "description": "silica toroid D = 16 um, d = 3 um, TE p=1 m=93 near 3.5327e14 Hz",
        "assumption_note": "the supporting web is omitted; the window boundary is an electric wall",
        "circle_chord_error_um": 1.5 * (1 - math.cos(math.pi / n_circ)),
        "elements": mesh.n_elements,
    }
    geo = ResonatorGeometry(tuple(regions_si), geo.boundary_tags, UM, "toroid.mesh", meta)
    write("toroid", geo, SolverSettings(M=93, n_modes=6, shift_frequency=3.5327e14), serialize_mesh(mesh))


NPL_SHRINK_PERP, NPL_SHRINK_PARA, NPL_SHRINK_CU = 1 - 5.99e-4, 1 - 7.21e-4, 1 - 3.26e-3


def npl():
    """NPL Cs-fountain sapphire ring with web and copper post (room-temperature mm, shrunk to 4.2 K)."""
    sap = Material("sapphire", *SAPPHIRE_4K)
    Ro, Ri, h, web = 46.0 / 2, 20.0 / 2, 25.1, 3.0
    c_out, c_in = 3.0, 1.0  # assumed chamfers (45 deg)
    r_post = 4.0  # assumed
    Rc, Hc = 35.0, 45.0  # assumed can (copper)
    # shrink: sapphire radially / axially, copper isotropically; ring centred in the can
    sx, sy, sc = NPL_SHRINK_PERP, NPL_SHRINK_PARA, NPL_SHRINK_CU
    Rc, Hc, r_post = Rc * sc, Hc * sc, r_post * sc
    Ro, Ri, c_out_x, c_in_x = Ro * sx, Ri * sx, c_out * sx, c_in * sx
    h, web, c_out_y, c_in_y = h * sy, web * sy, c_out * sy, c_in * sy
    yc = Hc / 2
    yb, yt = yc - h / 2, yc + h / 2
    ring = [
        (r_post, yc - web / 2), (Ri, yc - web / 2), (Ri, yb + c_in_y), (Ri + c_in_x, yb),
        (Ro - c_out_x, yb), (Ro, yb + c_out_y), (Ro, yt - c_out_y), (Ro - c_out_x, yt),
        (Ri + c_in_x, yt), (Ri, yt - c_in_y), (Ri, yc + web / 2), (r_post, yc + web / 2),
    ]
    sapphire = Region(tuple(ring), sap, (1, 1, 1, 1), (0, 3, 6, 9), "ring")
    vac = [(r_post, 0.0), (Rc, 0.0), (Rc, Hc), (0.0, Hc), (0.0, yc + web / 2)] + ring[::-1]
    vacuum = Region(tuple(vac), VACUUM, (1, 1, 1, 1), (0, 1, 2, 3), "vacuum")
    regions = [sapphire, vacuum]
    text = _triangulate(regions, [0.35, 1.2])
    regions_si = scaled_regions(regions, MM)
    geo = ResonatorGeometry(tuple(regions_si), tag_exterior(regions_si, ElectricWall("copper")), MM, None, {})
    mesh = import_mesh(text, geo)
    meta = {
        "description": "NPL cryogenic sapphire ring resonator (web + copper post), dimensions shrunk to 4.2 K",
        "room_temperature_mm": "ring OD 46.0, ID 20.0, height 25.1, web 3.0 centred",
        "assumed_mm": f"outer chamfer {c_out} x 45deg, inner chamfer {c_in} x 45deg, post radius 4.0, "
                      "can radius 35.0, can height 45.0",
        "shrink_sapphire_perp": NPL_SHRINK_PERP,
        "shrink_sapphire_para": NPL_SHRINK_PARA,
        "shrink_copper": NPL_SHRINK_CU,
        "elements": mesh.n_elements,
    }
    geo = ResonatorGeometry(tuple(regions_si), geo.boundary_tags, MM, "npl.mesh", meta)
    write("npl", geo, SolverSettings(M=9, n_modes=16), serialize_mesh(mesh))


# published NPL measurements: label, frequency [GHz], width [Hz], turnover [K], Kramers split [Hz]
NPL_MEASURED = [
    ("S2_6", "6.954664", "285", "", "780"),
    ("S2_7", "7.696176", "82.5", "<4.2", "158"),
    ("S4_6", "8.430800", "", "", ""),
    ("S2_8", "8.449908", "44.5", "<4.2", "418"),
    ("N2_8", "9.037458", "", "4.8", ""),
    ("N1_11", "9.148385", "9", "5.0", "57"),
    ("S2_9", "9.204722", "15.5", "<4.2", "88"),
    ("S1_10", "9.267650", "12", "5.2", "180"),
    ("N4_8", "9.421207", "80", "5.0", ""),
    ("S3_8", "9.800335", "84", "4.8", "1850"),
    ("S1_11", "9.901866", "10", "5.0", "160"),
    ("S2_10", "9.957880", "24", "<4.2", ""),
    ("S4_8", "10.27242", "153", "5.0", ""),
    ("S1_12", "10.53863", "9.5", "4.9", "24"),
    ("S1_13", "11.17728", "24.5", "4.9", "42"),
    ("S2_12", "11.44918", "10", "5.2", ""),
]


def npl_measured():
    lines = ["label,freq_hz,width_hz,turnover_k,kramers_hz"]
    for label, f, w, t, k in NPL_MEASURED:
        hz = repr(round(float(f) * 1e9, 3))
        lines.append(f"{label},{hz},{w},{t},{k}")
    (OUT / "npl_measured.csv").write_text("\n".join(lines) + "\n")
    print("wrote npl_measured.csv")


# published perpendicular filling per measured line, used to pick the simulated mode within each M
NPL_PERP_FILLING = {
    "S2_6": 0.860, "S2_7": 0.930, "S4_6": 0.453, "S2_8": 0.951, "N2_8": 0.674, "N1_11": 0.071,
    "S2_9": 0.960, "S1_10": 0.251, "N4_8": 0.287, "S3_8": 0.437, "S1_11": 0.223, "S2_10": 0.965,
    "S4_8": 0.730, "S1_12": 0.200, "S1_13": 0.181, "S2_12": 0.972,
}


def npl_identification():
    """Lock each measured label to a simulated mode of the same M.

    Score = |perp filling difference| / 0.05 + |relative frequency difference| / 0.01, assigned
    greedily and injectively; the family letter in the label fixes M, the filling picks the family.
    """
    from wgfem.fitting import Identification, sweep_modes, write_identification_csv
    from wgfem.geometry import load_geometry
    from wgfem.mesh import build_mesh

    geo, _ = load_geometry(OUT / "npl.toml")
    mesh = build_mesh(geo)
    Ms = sorted({int(label.split("_")[1]) for label, *_ in NPL_MEASURED})
    catalog = sweep_modes(geo, mesh, Ms, 16)
    scored = []
    for label, f, *_ in NPL_MEASURED:
        M, f = int(label.split("_")[1]), float(f) * 1e9
        for c in catalog:
            if c.M != M:
                continue
            perp = c.filling[("sapphire", "radial")] + c.filling[("sapphire", "azimuthal")]
            score = abs(perp - NPL_PERP_FILLING[label]) / 0.05 + abs(c.frequency / f - 1) / 0.01
            scored.append((score, label, (c.M, c.index)))
    mapping, used = {}, set()
    for _, label, key in sorted(scored):
        if label not in mapping and key not in used:
            mapping[label] = key
            used.add(key)
    ordered = {label: mapping[label] for label, *_ in NPL_MEASURED}
    (OUT / "npl_identification.csv").write_text(write_identification_csv(Identification(ordered)))
    print("wrote npl_identification.csv")


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    cylinder()
    sapphire_cylinder()
    uwa()
    microdisk()
    microdisk_radiation("wall")
    microdisk_radiation("match")
    bragg()
    toroid()
    npl()
    npl_measured()
    npl_identification()

"""Axisymmetric resonator cross-sections: materials, regions, wall conditions.

A geometry lives in the medial half-plane (x >= 0 radial, y axial).  Regions
are simple counter-clockwise polygons, each meshed as a mapped quadrilateral
patch whose four sides run between designated corner vertices.  Geometry
files are TOML; see ``docs/geometry_format.md`` for the grammar.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import tomli
import tomli_w
from shapely.geometry import Polygon

EPS_TOL = 1e-12
AXIS_TOL = 1e-12


class GeometryError(ValueError):
    """Raised for invalid geometry input (parse or validation)."""


@dataclass(frozen=True)
class Material:
    name: str
    eps_perp: float
    eps_para: float

    def __post_init__(self):
        if self.eps_perp < 1 - EPS_TOL or self.eps_para < 1 - EPS_TOL:
            raise GeometryError(f"material {self.name!r}: permittivities must be >= 1")

    @property
    def isotropic(self) -> bool:
        return self.eps_perp == self.eps_para


VACUUM = Material("vacuum", 1.0, 1.0)


@dataclass(frozen=True)
class ElectricWall:
    label: str = ""
    kind = "ElectricWall"


@dataclass(frozen=True)
class MagneticWall:
    label: str = ""
    kind = "MagneticWall"


@dataclass(frozen=True)
class RadiationMatch:
    """Mixed impedance condition; mix_angle 0 -> electric, pi/2 -> magnetic content."""

    match_frequency: float
    mix_angle: float = math.pi / 4
    tangent_toggle: str = "magnetic"
    label: str = ""
    kind = "RadiationMatch"

    def __post_init__(self):
        if self.tangent_toggle not in ("magnetic", "electric"):
            raise GeometryError("tangent_toggle must be 'magnetic' or 'electric'")
        if not self.match_frequency > 0:
            raise GeometryError("RadiationMatch needs a positive match_frequency")

    def with_frequency(self, mf: float) -> "RadiationMatch":
        return RadiationMatch(mf, self.mix_angle, self.tangent_toggle, self.label)


BoundaryCondition = Union[ElectricWall, MagneticWall, RadiationMatch]
BC_KINDS = ("ElectricWall", "MagneticWall", "RadiationMatch")


@dataclass(frozen=True)
class Region:
    vertices: tuple[tuple[float, float], ...]
    material: Material
    divisions: tuple[int, int, int, int]
    corners: tuple[int, int, int, int] = (0, 1, 2, 3)
    name: str = ""

    @property
    def n_edges(self) -> int:
        return len(self.vertices)

    def edge(self, k: int) -> tuple[tuple[float, float], tuple[float, float]]:
        return self.vertices[k], self.vertices[(k + 1) % self.n_edges]

    def side_edges(self, side: int) -> list[int]:
        """Polygon edge indices making up patch side `side` (0..3)."""
        start, stop = self.corners[side], self.corners[(side + 1) % 4]
        out, k = [], start
        while True:
            out.append(k)
            k = (k + 1) % self.n_edges
            if k == stop:
                return out

    def polygon(self) -> Polygon:
        return Polygon(self.vertices)

    def area(self) -> float:
        v = np.asarray(self.vertices)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class SolverSettings:
    M: int = 0
    n_modes: int = 6
    shift_frequency: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.M < 0:
            raise GeometryError("azimuthal order M must be >= 0")
        if self.n_modes < 1:
            raise GeometryError("n_modes must be >= 1")
        if not self.alpha >= 0:
            raise GeometryError("alpha must be >= 0")
        if self.shift_frequency < 0:
            raise GeometryError("shift_frequency must be >= 0")


@dataclass(frozen=True)
class ResonatorGeometry:
    regions: tuple[Region, ...]
    boundary_tags: dict  # (region index, edge index) -> BoundaryCondition
    length_unit: float = 1.0
    mesh_file: str | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def materials(self) -> dict[str, Material]:
        out = {}
        for r in self.regions:
            out.setdefault(r.material.name, r.material)
        return out

    def with_materials(self, **mats: Material) -> "ResonatorGeometry":
        """Copy with named materials replaced (used by permittivity fitting)."""
        regions = tuple(
            Region(r.vertices, mats.get(r.material.name, r.material), r.divisions, r.corners, r.name)
            for r in self.regions
        )
        return ResonatorGeometry(regions, dict(self.boundary_tags), self.length_unit, self.mesh_file, self.metadata)

    def with_boundaries(self, tags: dict) -> "ResonatorGeometry":
        return ResonatorGeometry(self.regions, dict(tags), self.length_unit, self.mesh_file, self.metadata)

    def scaled(self, s: float) -> "ResonatorGeometry":
        regions = tuple(
            Region(tuple((s * x, s * y) for x, y in r.vertices), r.material, r.divisions, r.corners, r.name)
            for r in self.regions
        )
        return ResonatorGeometry(regions, dict(self.boundary_tags), self.length_unit, self.mesh_file, self.metadata)


# ---------------------------------------------------------------- validation


def _key(p, tol):
    return (round(p[0] / tol), round(p[1] / tol))


def _on_axis(a, b) -> bool:
    return abs(a[0]) <= AXIS_TOL and abs(b[0]) <= AXIS_TOL


def shared_edges(regions) -> set[tuple[int, int]]:
    """(region, edge) pairs whose segment appears reversed in another region."""
    scale = max(max(abs(c) for v in r.vertices for c in v) for r in regions) or 1.0
    tol = 1e-9 * scale
    seen: dict = {}
    for ri, r in enumerate(regions):
        for k in range(r.n_edges):
            a, b = r.edge(k)
            seen.setdefault((_key(a, tol), _key(b, tol)), []).append((ri, k))
    out = set()
    for (ka, kb), owners in seen.items():
        rev = seen.get((kb, ka))
        if rev:
            out.update(o for o in owners if any(o[0] != q[0] for q in rev))
    return out


def validate(geometry: ResonatorGeometry) -> None:
    regions = geometry.regions
    if not regions:
        raise GeometryError("geometry has no regions")
    for ri, r in enumerate(regions):
        if r.n_edges < 3:
            raise GeometryError(f"region {ri} needs at least 3 vertices")
        for vi, (x, y) in enumerate(r.vertices):
            if x < 0:
                raise GeometryError(f"region {ri} vertex {vi}: x coordinate negative ({x})")
            if not (math.isfinite(x) and math.isfinite(y)):
                raise GeometryError(f"region {ri} vertex {vi}: non-finite coordinate")
        if len(set(r.corners)) != 4 or any(not 0 <= c < r.n_edges for c in r.corners):
            raise GeometryError(f"region {ri}: corners must be 4 distinct vertex indices")
        if list(r.corners) != sorted(r.corners):
            raise GeometryError(f"region {ri}: corners must be listed in polygon order")
        if any(d < 1 for d in r.divisions):
            raise GeometryError(f"region {ri}: divisions must be positive integers")
        poly = r.polygon()
        if not poly.is_valid or not poly.exterior.is_simple:
            raise GeometryError(f"region {ri}: polygon is not simple")
        if r.area() <= 0:
            raise GeometryError(f"region {ri}: polygon must be counter-clockwise")
    for i in range(len(regions)):
        pi = regions[i].polygon()
        for j in range(i + 1, len(regions)):
            if pi.intersection(regions[j].polygon()).area > 1e-18 / geometry.length_unit**2:
                raise GeometryError(f"regions {i} and {j} overlap")

    shared = shared_edges(regions)
    for (ri, k), bc in geometry.boundary_tags.items():
        if not (0 <= ri < len(regions)) or not (0 <= k < regions[ri].n_edges):
            raise GeometryError(f"boundary tag refers to missing edge (region {ri}, edge {k})")
        if (ri, k) in shared:
            raise GeometryError(f"region {ri} edge {k} is an internal interface and cannot carry a wall")
    for ri, r in enumerate(regions):
        for k in range(r.n_edges):
            if (ri, k) in shared or (ri, k) in geometry.boundary_tags:
                continue
            if _on_axis(*r.edge(k)):
                continue
            raise GeometryError(f"region {ri} edge {k} is external but has no boundary condition")


# ---------------------------------------------------------------- file format


def _bc_from_table(t: dict, where: str) -> BoundaryCondition:
    kind = t.get("condition")
    label = t.get("label", "")
    if kind == "ElectricWall":
        return ElectricWall(label)
    if kind == "MagneticWall":
        return MagneticWall(label)
    if kind == "RadiationMatch":
        if "match_frequency_hz" not in t:
            raise GeometryError(f"{where}: RadiationMatch without match_frequency_hz")
        if "mix_angle_deg" in t:
            angle = math.radians(float(t["mix_angle_deg"]))
        else:
            angle = float(t.get("mix_angle", math.pi / 4))
        return RadiationMatch(float(t["match_frequency_hz"]), angle, t.get("tangent_toggle", "magnetic"), label)
    raise GeometryError(f"{where}: unknown condition {kind!r}")


def parse_geometry(text: str) -> tuple[ResonatorGeometry, SolverSettings]:
    """Parse a TOML geometry document into a validated geometry and solver settings."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise GeometryError(f"parse error: {exc}") from None

    try:
        unit = float(doc["length_unit"])
    except KeyError:
        raise GeometryError("missing mandatory key 'length_unit'") from None
    if not unit > 0:
        raise GeometryError("length_unit must be positive")

    materials = {"vacuum": VACUUM}
    for name, t in doc.get("materials", {}).items():
        if "eps" in t:
            eps_perp = eps_para = float(t["eps"])
        else:
            try:
                eps_perp, eps_para = float(t["eps_perp"]), float(t["eps_para"])
            except KeyError:
                raise GeometryError(f"material {name!r}: need eps or eps_perp/eps_para") from None
        materials[name] = Material(name, eps_perp, eps_para)

    regions = []
    for ri, t in enumerate(doc.get("regions", [])):
        where = f"region {ri}"
        if t.get("material") not in materials:
            raise GeometryError(f"{where}: unknown material {t.get('material')!r}")
        verts = t.get("vertices")
        if not verts or any(len(v) != 2 for v in verts):
            raise GeometryError(f"{where}: vertices must be a list of [x, y] pairs")
        verts = tuple((float(x) * unit, float(y) * unit) for x, y in verts)
        corners = tuple(int(c) for c in t.get("corners", range(4)))
        if len(verts) > 4 and "corners" not in t:
            raise GeometryError(f"{where}: polygons with more than 4 vertices need 'corners'")
        divisions = t.get("divisions", [1, 1, 1, 1])
        if len(divisions) == 2:
            divisions = [divisions[0], divisions[1], divisions[0], divisions[1]]
        if len(divisions) != 4 or len(corners) != 4:
            raise GeometryError(f"{where}: need 4 corners and 2 or 4 divisions")
        for vi, (x, _) in enumerate(verts):
            if x < 0:
                raise GeometryError(f"{where} vertex {vi}: x coordinate negative ({x / unit})")
        regions.append(Region(verts, materials[t["material"]], tuple(int(d) for d in divisions), corners, t.get("name", "")))

    tags: dict = {}
    for bi, t in enumerate(doc.get("boundaries", [])):
        where = f"boundary {bi}"
        ri = int(t.get("region", -1))
        if not 0 <= ri < len(regions):
            raise GeometryError(f"{where}: region index {ri} out of range")
        bc = _bc_from_table(t, where)
        if "edges" in t:
            edges = [int(e) for e in t["edges"]]
        elif "edge" in t:
            edges = [int(t["edge"])]
        elif "side" in t:
            if not 0 <= int(t["side"]) < 4:
                raise GeometryError(f"{where}: side must be 0..3")
            edges = regions[ri].side_edges(int(t["side"]))
        else:
            raise GeometryError(f"{where}: need 'edge', 'edges' or 'side'")
        for k in edges:
            if (ri, k) in tags:
                raise GeometryError(f"region {ri} edge {k} tagged more than once")
            tags[(ri, k)] = bc

    s = doc.get("solver", {})
    settings = SolverSettings(
        M=int(s.get("M", 0)),
        n_modes=int(s.get("n_modes", 6)),
        shift_frequency=float(s.get("shift_frequency_hz", 0.0)),
        alpha=float(s.get("alpha", 1.0)),
    )
    geometry = ResonatorGeometry(
        tuple(regions), tags, unit, doc.get("mesh", {}).get("file"), doc.get("metadata", {})
    )
    validate(geometry)
    return geometry, settings


def serialize_geometry(geometry: ResonatorGeometry, settings: SolverSettings | None = None) -> str:
    unit = geometry.length_unit
    doc: dict = {"length_unit": unit}
    if geometry.metadata:
        doc["metadata"] = geometry.metadata
    if geometry.mesh_file:
        doc["mesh"] = {"file": geometry.mesh_file}
    doc["materials"] = {
        m.name: {"eps_perp": m.eps_perp, "eps_para": m.eps_para} for m in geometry.materials.values()
    }
    doc["regions"] = [
        {
            "name": r.name,
            "material": r.material.name,
            "vertices": [[x / unit, y / unit] for x, y in r.vertices],
            "corners": list(r.corners),
            "divisions": list(r.divisions),
        }
        for r in geometry.regions
    ]
    bounds = []
    for (ri, k), bc in sorted(geometry.boundary_tags.items()):
        t = {"region": ri, "edge": k, "condition": bc.kind}
        if bc.label:
            t["label"] = bc.label
        if isinstance(bc, RadiationMatch):
            t.update(
                match_frequency_hz=bc.match_frequency,
                mix_angle=bc.mix_angle,
                tangent_toggle=bc.tangent_toggle,
            )
        bounds.append(t)
    doc["boundaries"] = bounds
    if settings is not None:
        doc["solver"] = {
            "M": settings.M,
            "n_modes": settings.n_modes,
            "shift_frequency_hz": settings.shift_frequency,
            "alpha": settings.alpha,
        }
    return tomli_w.dumps(doc)


def load_geometry(path) -> tuple[ResonatorGeometry, SolverSettings]:
    from pathlib import Path

    path = Path(path)
    geometry, settings = parse_geometry(path.read_text())
    if geometry.mesh_file:
        resolved = str((path.parent / geometry.mesh_file).resolve())
        geometry = ResonatorGeometry(
            geometry.regions, geometry.boundary_tags, geometry.length_unit, resolved, geometry.metadata
        )
    return geometry, settings


# ---------------------------------------------------------------- generators


def rectangle(x0, y0, x1, y1, material, nx, ny, name="") -> Region:
    return Region(((x0, y0), (x1, y0), (x1, y1), (x0, y1)), material, (nx, ny, nx, ny), name=name)


def make_cylindrical_cavity(
    radius: float,
    height: float,
    eps: float = 1.0,
    divisions: tuple[int, int] = (16, 16),
    axis_offset: float = 0.0,
) -> ResonatorGeometry:
    """PEC right cylinder filled with an isotropic dielectric.

    The edge on the axis (axis_offset == 0) is left untagged; any offset
    edge is an electric wall.
    """
    if radius <= 0 or height <= 0:
        raise GeometryError("cavity radius and height must be positive")
    if eps < 1:
        raise GeometryError("eps must be >= 1")
    if not 0 <= axis_offset < radius:
        raise GeometryError("axis offset must lie in [0, radius)")
    mat = VACUUM if eps == 1.0 else Material("fill", float(eps), float(eps))
    region = rectangle(axis_offset, 0.0, radius, height, mat, divisions[0], divisions[1], "cavity")
    tags = {(0, k): ElectricWall("can") for k in range(3)}
    if axis_offset > 0:
        tags[(0, 3)] = ElectricWall("can")
    geometry = ResonatorGeometry((region,), tags, 1.0)
    validate(geometry)
    return geometry


def tag_exterior(regions, condition, overrides=None) -> dict:
    """Tag every external, off-axis edge with `condition`.

    overrides maps (region, edge) to a different condition.
    """
    shared = shared_edges(regions)
    tags = {}
    for ri, r in enumerate(regions):
        for k in range(r.n_edges):
            if (ri, k) in shared or _on_axis(*r.edge(k)):
                continue
            tags[(ri, k)] = condition
    tags.update(overrides or {})
    return tags

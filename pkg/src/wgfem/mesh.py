"""Quadratic Lagrange meshes over the medial half-plane.

Local node ordering (shared by the mapped mesher, the importer and the VTK
exporter, which uses cell types 28 and 22):

    quad9, reference square [-1, 1]^2        tri6, reference triangle
        3 --- 6 --- 2                            2
        |           |                            | \\
        7     8     5                            5   4
        |           |                            |     \\
        0 --- 4 --- 1                            0 - 3 - 1

Local edges run counter-clockwise: quad9 (0,4,1) (1,5,2) (2,6,3) (3,7,0);
tri6 (0,3,1) (1,4,2) (2,5,0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree
from shapely.geometry import LineString

from .geometry import (
    AXIS_TOL,
    BC_KINDS,
    ElectricWall,
    GeometryError,
    MagneticWall,
    ResonatorGeometry,
    shared_edges,
)


class MeshError(ValueError):
    """Raised when a mesh cannot be built or fails validation."""


QUAD9_REF = np.array(
    [(-1, -1), (1, -1), (1, 1), (-1, 1), (0, -1), (1, 0), (0, 1), (-1, 0), (0, 0)], dtype=float
)
TRI6_REF = np.array([(0, 0), (1, 0), (0, 1), (0.5, 0), (0.5, 0.5), (0, 0.5)], dtype=float)
REF_NODES = {"quad9": QUAD9_REF, "tri6": TRI6_REF}
EDGES = {
    "quad9": ((0, 4, 1), (1, 5, 2), (2, 6, 3), (3, 7, 0)),
    "tri6": ((0, 3, 1), (1, 4, 2), (2, 5, 0)),
}
N_NODES = {"quad9": 9, "tri6": 6}


# ---------------------------------------------------------------- shape functions


def _lagrange1d(s):
    s = np.asarray(s, dtype=float)
    val = np.stack([0.5 * s * (s - 1), 1 - s * s, 0.5 * s * (s + 1)], axis=-1)
    der = np.stack([s - 0.5, -2 * s, s + 0.5], axis=-1)
    return val, der


# position of each quad9 node in the 1D (-1, 0, 1) -> (0, 1, 2) index grid
_Q9_IJ = [(0, 0), (2, 0), (2, 2), (0, 2), (1, 0), (2, 1), (1, 2), (0, 1), (1, 1)]


def shape_functions(kind: str, pts) -> tuple[np.ndarray, np.ndarray]:
    """Values (npts, nn) and reference gradients (npts, nn, 2) at points (npts, 2)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    r, s = pts[:, 0], pts[:, 1]
    if kind == "quad9":
        lr, dr = _lagrange1d(r)
        ls, ds = _lagrange1d(s)
        i = np.array([ij[0] for ij in _Q9_IJ])
        j = np.array([ij[1] for ij in _Q9_IJ])
        N = lr[:, i] * ls[:, j]
        dN = np.stack([dr[:, i] * ls[:, j], lr[:, i] * ds[:, j]], axis=-1)
        return N, dN
    if kind == "tri6":
        L = np.stack([1 - r - s, r, s], axis=-1)
        dL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        N = np.empty((len(r), 6))
        dN = np.empty((len(r), 6, 2))
        for a in range(3):
            N[:, a] = L[:, a] * (2 * L[:, a] - 1)
            dN[:, a] = (4 * L[:, a] - 1)[:, None] * dL[a]
        for m, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
            N[:, 3 + m] = 4 * L[:, a] * L[:, b]
            dN[:, 3 + m] = 4 * (L[:, b][:, None] * dL[a] + L[:, a][:, None] * dL[b])
        return N, dN
    raise MeshError(f"unknown element kind {kind!r}")


def shape_eval(kind: str, point) -> tuple[np.ndarray, np.ndarray]:
    """Shape values (nn,) and reference gradients (nn, 2) at one reference point."""
    N, dN = shape_functions(kind, [point])
    return N[0], dN[0]


# ---------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray


def _gauss_square(n: int) -> QuadratureRule:
    g, w = np.polynomial.legendre.leggauss(n)
    P = np.array([(a, b) for b in g for a in g])
    W = np.array([wa * wb for wb in w for wa in w])
    return QuadratureRule(P, W)


def _triangle7() -> QuadratureRule:
    r15 = math.sqrt(15.0)
    a, b = (6 - r15) / 21, (9 + 2 * r15) / 21
    c, d = (6 + r15) / 21, (9 - 2 * r15) / 21
    wa, wc = (155 - r15) / 2400, (155 + r15) / 2400
    P = np.array([(1 / 3, 1 / 3), (a, a), (b, a), (a, b), (c, c), (d, c), (c, d)])
    W = np.array([9 / 80, wa, wa, wa, wc, wc, wc])
    return QuadratureRule(P, W)


QUADRATURE = {"quad9": _gauss_square(3), "tri6": _triangle7()}


def edge_rule(n: int = 4) -> QuadratureRule:
    """Gauss rule on the unit interval [0, 1]."""
    g, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (g + 1), 0.5 * w)


def edge_reference_points(kind: str, local_edge: int, t) -> np.ndarray:
    """Reference coordinates along a local edge, t in [0, 1] from its first to last node."""
    a, _, b = EDGES[kind][local_edge]
    A, B = REF_NODES[kind][a], REF_NODES[kind][b]
    t = np.asarray(t, dtype=float)[:, None]
    return A + t * (B - A)


# ---------------------------------------------------------------- mesh types


@dataclass(frozen=True)
class Element:
    kind: str
    nodes: tuple[int, ...]
    region: int


@dataclass(frozen=True)
class BoundaryEdge:
    element: int
    local_edge: int
    condition: object
    segment: tuple[int, int] | None = None  # (region, polygon edge) when known


@dataclass
class ElementGroup:
    """Quadrature data for all elements of one kind (arrays indexed [element, qp, node])."""

    kind: str
    ids: np.ndarray
    conn: np.ndarray
    eps_perp: np.ndarray
    eps_para: np.ndarray
    N: np.ndarray
    x: np.ndarray
    y: np.ndarray
    wdet: np.ndarray
    dNx: np.ndarray
    dNy: np.ndarray


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    elements: tuple[Element, ...]
    boundary_edges: tuple[BoundaryEdge, ...]
    geometry: ResonatorGeometry

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def material(self, element: int):
        return self.geometry.regions[self.elements[element].region].material

    @cached_property
    def groups(self) -> list[ElementGroup]:
        return [self._group(kind) for kind in ("quad9", "tri6") if any(e.kind == kind for e in self.elements)]

    def _group(self, kind: str) -> ElementGroup:
        ids = np.array([i for i, e in enumerate(self.elements) if e.kind == kind])
        conn = np.array([self.elements[i].nodes for i in ids])
        mats = [self.material(i) for i in ids]
        rule = QUADRATURE[kind]
        N, dN = shape_functions(kind, rule.points)
        X = self.nodes[conn]  # (ne, nn, 2)
        J = np.einsum("ean,qad->eqnd", X, dN)  # J[e,q,n,d] = d x_n / d r_d
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        if np.any(det <= 0):
            bad = ids[np.any(det <= 0, axis=1)][0]
            raise MeshError(f"element {bad} has a nonpositive Jacobian determinant")
        inv00 = J[..., 1, 1] / det
        inv01 = -J[..., 0, 1] / det
        inv10 = -J[..., 1, 0] / det
        inv11 = J[..., 0, 0] / det
        # physical gradient: dN/dx = dN/dr * dr/dx + dN/ds * ds/dx
        dNx = dN[None, :, :, 0] * inv00[..., None] + dN[None, :, :, 1] * inv10[..., None]
        dNy = dN[None, :, :, 0] * inv01[..., None] + dN[None, :, :, 1] * inv11[..., None]
        xq = np.einsum("ea,qa->eq", X[..., 0], N)
        yq = np.einsum("ea,qa->eq", X[..., 1], N)
        return ElementGroup(
            kind,
            ids,
            conn,
            np.array([m.eps_perp for m in mats]),
            np.array([m.eps_para for m in mats]),
            N,
            xq,
            yq,
            det * rule.weights[None, :],
            dNx,
            dNy,
        )

    def area(self) -> float:
        return float(sum(g.wdet.sum() for g in self.groups))

    def element_gradients(self, element: int, ref_pts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Shape values, physical gradients (npts, nn, 2) and positions at reference points."""
        e = self.elements[element]
        N, dN = shape_functions(e.kind, ref_pts)
        X = self.nodes[list(e.nodes)]
        J = np.einsum("an,qad->qnd", X, dN)
        Jinv = np.linalg.inv(J)
        grad = np.einsum("qad,qdn->qan", dN, Jinv)
        return N, grad, N @ X

    def edge_nodes(self, be: BoundaryEdge) -> tuple[int, int, int]:
        e = self.elements[be.element]
        return tuple(e.nodes[i] for i in EDGES[e.kind][be.local_edge])

    def edge_quadrature(self, be: BoundaryEdge, n: int = 4):
        """(reference points, physical points, outward unit normals, line weights) along an edge."""
        e = self.elements[be.element]
        rule = edge_rule(n)
        ref = edge_reference_points(e.kind, be.local_edge, rule.points)
        N, dN = shape_functions(e.kind, ref)
        X = self.nodes[list(e.nodes)]
        a, _, b = EDGES[e.kind][be.local_edge]
        dref = REF_NODES[e.kind][b] - REF_NODES[e.kind][a]
        tangent = np.einsum("an,qad,d->qn", X, dN, dref)
        length = np.linalg.norm(tangent, axis=1)
        normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1) / length[:, None]
        return ref, N @ X, normal, rule.weights * length

    def edge_normal_at(self, be: BoundaryEdge, t) -> np.ndarray:
        """Outward unit normals at edge parameters t (local edge node t = 0, 0.5, 1)."""
        e = self.elements[be.element]
        ref = edge_reference_points(e.kind, be.local_edge, np.atleast_1d(t))
        _, dN = shape_functions(e.kind, ref)
        X = self.nodes[list(e.nodes)]
        a, _, b = EDGES[e.kind][be.local_edge]
        dref = REF_NODES[e.kind][b] - REF_NODES[e.kind][a]
        tangent = np.einsum("an,qad,d->qn", X, dN, dref)
        normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
        return normal / np.linalg.norm(normal, axis=1, keepdims=True)

    def unmatched_edges(self) -> list[tuple[int, int]]:
        """(element, local edge) pairs not shared with any other element."""
        count: dict = {}
        for ei, e in enumerate(self.elements):
            for le, ed in enumerate(EDGES[e.kind]):
                key = frozenset(e.nodes[i] for i in ed)
                count.setdefault(key, []).append((ei, le))
        return [v[0] for v in count.values() if len(v) == 1]

    def check_conformity(self) -> None:
        """Every element edge is shared by at most two elements, through identical nodes."""
        count: dict = {}
        for e in self.elements:
            for ed in EDGES[e.kind]:
                key = (min(e.nodes[ed[0]], e.nodes[ed[2]]), max(e.nodes[ed[0]], e.nodes[ed[2]]))
                count.setdefault(key, set()).add(e.nodes[ed[1]])
        for key, mids in count.items():
            if len(mids) != 1:
                raise MeshError(f"non-conforming edge between nodes {key}")


# ---------------------------------------------------------------- mapped meshing


def _side_points(poly: list, n: int) -> np.ndarray:
    """2n+1 points along a polyline: uniform per segment when possible, else by arc length."""
    P = np.asarray(poly, dtype=float)
    m = len(P) - 1
    if n % m == 0:
        k = n // m
        t = np.linspace(0, 1, 2 * k + 1)[:-1]
        pts = [P[s] + t[:, None] * (P[s + 1] - P[s]) for s in range(m)]
        return np.vstack(pts + [P[-1:]])
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.linspace(0, cum[-1], 2 * n + 1)
    return np.stack([np.interp(target, cum, P[:, 0]), np.interp(target, cum, P[:, 1])], axis=1)


def _patch(region) -> tuple[np.ndarray, int, int]:
    nx, ny = region.divisions[0], region.divisions[1]
    if region.divisions[0] != region.divisions[2] or region.divisions[1] != region.divisions[3]:
        raise MeshError(f"region {region.name or ''}: opposite edge counts differ {region.divisions}")
    V = region.vertices
    sides = []
    for s in range(4):
        idx = region.side_edges(s)
        poly = [V[k] for k in idx] + [V[(idx[-1] + 1) % len(V)]]
        sides.append(_side_points(poly, region.divisions[s]))
    B, R, T, L = sides[0], sides[1], sides[2][::-1], sides[3][::-1]
    c0, c1, c2, c3 = B[0], B[-1], T[-1], T[0]
    u = np.linspace(0, 1, 2 * nx + 1)[:, None, None]
    v = np.linspace(0, 1, 2 * ny + 1)[None, :, None]
    grid = (
        (1 - v) * B[:, None] + v * T[:, None] + (1 - u) * L[None, :] + u * R[None, :]
        - ((1 - u) * (1 - v) * c0 + u * (1 - v) * c1 + u * v * c2 + (1 - u) * v * c3)
    )
    return grid, nx, ny


def _merge_points(points: np.ndarray, tol: float) -> np.ndarray:
    """Map each point to a representative index (union of points closer than tol)."""
    parent = np.arange(len(points))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in cKDTree(points).query_pairs(tol):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    return np.array([find(i) for i in range(len(points))])


def _point_on_segment(p, a, b, tol) -> bool:
    a, b, p = np.asarray(a), np.asarray(b), np.asarray(p)
    d = b - a
    t = np.clip(np.dot(p - a, d) / np.dot(d, d), 0.0, 1.0)
    return np.linalg.norm(a + t * d - p) <= tol


def _scale(geometry: ResonatorGeometry) -> float:
    return max(abs(c) for r in geometry.regions for v in r.vertices for c in v) or 1.0


def _check_partial_overlaps(geometry: ResonatorGeometry, tol: float) -> None:
    """Region edges touching another region along part of their length are T-junctions."""
    shared = shared_edges(geometry.regions)
    rings = [r.polygon().exterior for r in geometry.regions]
    for ri, r in enumerate(geometry.regions):
        for k in range(r.n_edges):
            if (ri, k) in shared:
                continue
            seg = LineString(r.edge(k))
            for rj, ring in enumerate(rings):
                if rj != ri and seg.intersection(ring).length > tol:
                    raise MeshError(
                        f"region {ri} edge {k}: T-junction between regions (partially shared with region {rj})"
                    )


def _assemble_mesh(geometry, points, elements, candidates, tol) -> Mesh:
    _check_partial_overlaps(geometry, tol)
    """Merge coincident nodes, renumber densely and attach boundary tags.

    candidates: (element, local edge, region, polygon edge or None, explicit bc or None)
    """
    rep = _merge_points(points, tol)
    uniq, inverse = np.unique(rep, return_inverse=True)
    nodes = points[uniq]
    nodes[np.abs(nodes[:, 0]) <= AXIS_TOL * _scale(geometry), 0] = 0.0
    elements = [Element(k, tuple(int(inverse[n]) for n in conn), r) for k, conn, r in elements]
    mesh = Mesh(nodes, tuple(elements), (), geometry)
    mesh.check_conformity()
    outer = set(mesh.unmatched_edges())
    shared = shared_edges(geometry.regions)
    bedges = []
    for ei, le, ri, k, bc in candidates:
        if (ei, le) not in outer:
            continue
        e = mesh.elements[ei]
        ids = [e.nodes[i] for i in EDGES[e.kind][le]]
        a, mid, b = nodes[ids[0]], nodes[ids[1]], nodes[ids[2]]
        if k is None:
            k = _locate_segment(geometry, mid, tol)
        if k is not None and k in shared:
            raise MeshError(
                f"region {k[0]} edge {k[1]}: T-junction or adjacent regions disagree on shared-edge counts"
            )
        if bc is None and k is not None:
            bc = geometry.boundary_tags.get(k)
        if bc is None:
            if abs(a[0]) <= tol and abs(b[0]) <= tol:
                continue  # axis: no wall
            if k is None and _touches_other_region(geometry, mid, ri, tol):
                raise MeshError(f"element {ei} edge {le}: T-junction between regions")
            raise MeshError(f"element {ei} edge {le}: external edge has no boundary condition")
        bedges.append(BoundaryEdge(ei, le, bc, k))
    outer -= {(b.element, b.local_edge) for b in bedges}
    for ei, le in outer:
        e = mesh.elements[ei]
        ids = [e.nodes[i] for i in EDGES[e.kind][le]]
        if all(abs(nodes[i][0]) <= tol for i in ids):
            continue
        if _touches_other_region(geometry, nodes[ids[1]], e.region, tol):
            raise MeshError(f"element {ei} edge {le}: T-junction between regions")
        raise MeshError(f"element {ei} edge {le}: external edge has no boundary condition")
    mesh = Mesh(nodes, tuple(elements), tuple(bedges), geometry)
    _ = mesh.groups  # Jacobian check
    return mesh


def _locate_segment(geometry, p, tol):
    for ri, r in enumerate(geometry.regions):
        for k in range(r.n_edges):
            a, b = r.edge(k)
            if _point_on_segment(p, a, b, tol):
                if (ri, k) in geometry.boundary_tags:
                    return (ri, k)
    for ri, r in enumerate(geometry.regions):
        for k in range(r.n_edges):
            if _point_on_segment(p, *r.edge(k), tol):
                return (ri, k)
    return None


def _touches_other_region(geometry, p, ri, tol) -> bool:
    for rj, r in enumerate(geometry.regions):
        if rj == ri:
            continue
        if any(_point_on_segment(p, *r.edge(k), tol) for k in range(r.n_edges)):
            return True
    return False


def map_mesh(geometry: ResonatorGeometry) -> Mesh:
    """Structured quad9 mesh of every region by transfinite interpolation of its four sides."""
    tol = 1e-9 * _scale(geometry)
    points, elements, candidates = [], [], []
    offset = 0
    for ri, region in enumerate(geometry.regions):
        if region.area() <= 0:
            raise MeshError(f"region {ri}: degenerate (zero-area) patch")
        grid, nx, ny = _patch(region)
        W, H = grid.shape[0], grid.shape[1]
        points.append(grid.reshape(-1, 2))

        def gid(i, j):
            return offset + i * H + j

        side_segments = [region.side_edges(s) for s in range(4)]
        for j in range(ny):
            for i in range(nx):
                I, J = 2 * i, 2 * j
                conn = (
                    gid(I, J), gid(I + 2, J), gid(I + 2, J + 2), gid(I, J + 2),
                    gid(I + 1, J), gid(I + 2, J + 1), gid(I + 1, J + 2), gid(I, J + 1), gid(I + 1, J + 1),
                )
                ei = len(elements)
                elements.append(("quad9", conn, ri))
                for side, on in ((0, j == 0), (1, i == nx - 1), (2, j == ny - 1), (3, i == 0)):
                    if on:
                        mid = grid.reshape(-1, 2)[conn[4 + side] - offset]
                        k = next(
                            (k for k in side_segments[side] if _point_on_segment(mid, *region.edge(k), tol)),
                            side_segments[side][0],
                        )
                        candidates.append((ei, side, ri, (ri, k), None))
        offset += W * H
    return _assemble_mesh(geometry, np.vstack(points), elements, candidates, tol)


# ---------------------------------------------------------------- import / export


def _lookup_bc(name: str, geometry: ResonatorGeometry):
    for bc in geometry.boundary_tags.values():
        if bc.label and bc.label == name:
            return bc
    for bc in geometry.boundary_tags.values():
        if bc.kind == name:
            return bc
    if name == "ElectricWall":
        return ElectricWall()
    if name == "MagneticWall":
        return MagneticWall()
    if name in BC_KINDS:
        raise MeshError(f"boundary name {name!r} needs parameters from a geometry tag")
    raise MeshError(f"unknown boundary name {name!r}")


def import_mesh(text: str, geometry: ResonatorGeometry) -> Mesh:
    """Read the line-oriented node/elem/bedge format; coordinates are in geometry length units."""
    unit = geometry.length_unit
    node_ids, coords, elems, bedges_raw = {}, [], [], []
    elem_ids = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        try:
            if parts[0] == "node":
                nid, x, y = int(parts[1]), float(parts[2]) * unit, float(parts[3]) * unit
                if nid in node_ids:
                    raise MeshError(f"line {lineno}: duplicate node {nid}")
                if x < -AXIS_TOL * max(unit, 1.0):
                    raise MeshError(f"line {lineno}: node {nid} has x < 0")
                node_ids[nid] = len(coords)
                coords.append((max(x, 0.0), y))
            elif parts[0] == "elem":
                eid, kind, region = int(parts[1]), parts[2], int(parts[3])
                if kind not in N_NODES:
                    raise MeshError(f"line {lineno}: unknown element kind {kind!r}")
                conn = [int(p) for p in parts[4:]]
                if len(conn) != N_NODES[kind]:
                    raise MeshError(f"line {lineno}: {kind} needs {N_NODES[kind]} nodes")
                if not 0 <= region < len(geometry.regions):
                    raise MeshError(f"line {lineno}: region {region} not in geometry")
                elem_ids[eid] = len(elems)
                elems.append((kind, conn, region, lineno))
            elif parts[0] == "bedge":
                bedges_raw.append((int(parts[1]), int(parts[2]), parts[3], lineno))
            else:
                raise MeshError(f"line {lineno}: unknown record {parts[0]!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, MeshError):
                raise
            raise MeshError(f"line {lineno}: malformed record ({exc})") from None
    if not elems:
        raise MeshError("mesh file has no elements")
    elements = []
    for kind, conn, region, lineno in elems:
        missing = [n for n in conn if n not in node_ids]
        if missing:
            raise MeshError(f"line {lineno}: element cites undefined node {missing[0]}")
        elements.append((kind, tuple(node_ids[n] for n in conn), region))
    candidates = []
    tagged = set()
    for eid, le, name, lineno in bedges_raw:
        if eid not in elem_ids:
            raise MeshError(f"line {lineno}: bedge cites undefined element {eid}")
        ei = elem_ids[eid]
        if not 0 <= le < len(EDGES[elements[ei][0]]):
            raise MeshError(f"line {lineno}: bad local edge {le}")
        candidates.append((ei, le, elements[ei][2], None, _lookup_bc(name, geometry)))
        tagged.add((ei, le))
    for ei, (kind, _, region) in enumerate(elements):
        for le in range(len(EDGES[kind])):
            if (ei, le) not in tagged:
                candidates.append((ei, le, region, None, None))
    tol = 1e-9 * _scale(geometry)
    return _assemble_mesh(geometry, np.asarray(coords, dtype=float), elements, candidates, tol)


def serialize_mesh(mesh: Mesh) -> str:
    unit = mesh.geometry.length_unit
    lines = [f"node {i} {float(x / unit)!r} {float(y / unit)!r}" for i, (x, y) in enumerate(mesh.nodes)]
    for i, e in enumerate(mesh.elements):
        lines.append(f"elem {i} {e.kind} {e.region} " + " ".join(map(str, e.nodes)))
    for b in mesh.boundary_edges:
        lines.append(f"bedge {b.element} {b.local_edge} {b.condition.label or b.condition.kind}")
    return "\n".join(lines) + "\n"


def build_mesh(geometry: ResonatorGeometry) -> Mesh:
    """Mapped mesh, or the imported one when the geometry names a mesh file."""
    if geometry.mesh_file:
        from pathlib import Path

        try:
            text = Path(geometry.mesh_file).read_text()
        except OSError as exc:
            raise GeometryError(f"cannot read mesh file: {exc}") from None
        return import_mesh(text, geometry)
    return map_mesh(geometry)


def refine_geometry(geometry: ResonatorGeometry, factor: int) -> ResonatorGeometry:
    """Multiply every region's division counts by `factor`."""
    from .geometry import Region

    regions = tuple(
        Region(r.vertices, r.material, tuple(d * factor for d in r.divisions), r.corners, r.name)
        for r in geometry.regions
    )
    return ResonatorGeometry(regions, dict(geometry.boundary_tags), geometry.length_unit, geometry.mesh_file, geometry.metadata)

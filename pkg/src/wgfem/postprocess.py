"""Derived fields and scalar figures of merit for solved modes.

D is taken as curl H without the -i/(2 pi f) prefactor, so exported D and E
are in scaled units.  Every reported scalar is a ratio and is unaffected.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constants import C0, MU0
from .eigensolve import ModeSolution
from .geometry import ElectricWall
from .mesh import EDGES, REF_NODES, Mesh, shape_functions

DIRECTIONS = ("radial", "azimuthal", "axial")
QUANTITIES = (
    "AbsMagEnDens", "ElecEnDens", "DivH",
    "Hrad", "Hazi", "Haxi", "Drad", "Dazi", "Daxi", "Erad", "Eazi", "Eaxi",
)


class PostprocessError(ValueError):
    pass


@dataclass
class DerivedFields:
    """Fields at the quadrature points of one element group, arrays shaped (ne, nq)."""

    region: np.ndarray
    x: np.ndarray
    wdet: np.ndarray
    eps_perp: np.ndarray
    eps_para: np.ndarray
    H: tuple
    D: tuple
    div: np.ndarray

    @property
    def E(self):
        return (self.D[0] / self.eps_perp, self.D[1] / self.eps_perp, self.D[2] / self.eps_para)

    def elec_energy(self):
        """eps |E|^2 = eps_perp (|Erad|^2 + |Eazi|^2) + eps_para |Eaxi|^2."""
        E = self.E
        return self.eps_perp * (abs2(E[0]) + abs2(E[1])) + self.eps_para * abs2(E[2])

    def mag_energy(self):
        return abs2(self.H[0]) + abs2(self.H[1]) + abs2(self.H[2])


def abs2(a):
    return a.real**2 + a.imag**2 if np.iscomplexobj(a) else a * a


def _curl_div(M, x, H, Hx, Hy):
    hr, hp, hz = H
    drad = (M * hz - x * Hy[1]) / x
    dazi = -Hx[2] + Hy[0]
    daxi = (hp - M * hr + x * Hx[1]) / x
    div = (hr - M * hp + x * (Hx[0] + Hy[2])) / x
    return (drad, dazi, daxi), div


def derived_fields(mode: ModeSolution, mesh: Mesh) -> list[DerivedFields]:
    out = []
    h = mode.coefficients
    for g in mesh.groups:
        comps = [h[3 * g.conn + c] for c in range(3)]  # (ne, nn)
        H = tuple(np.einsum("qa,ea->eq", g.N, u) for u in comps)
        Hx = tuple(np.einsum("eqa,ea->eq", g.dNx, u) for u in comps)
        Hy = tuple(np.einsum("eqa,ea->eq", g.dNy, u) for u in comps)
        D, div = _curl_div(mode.M, g.x, H, Hx, Hy)
        region = np.array([mesh.elements[i].region for i in g.ids])
        out.append(
            DerivedFields(
                region[:, None].repeat(g.x.shape[1], 1), g.x, g.wdet,
                g.eps_perp[:, None], g.eps_para[:, None], H, D, div,
            )
        )
    return out


def _is_free_space(material) -> bool:
    return material.eps_perp == 1.0 and material.eps_para == 1.0


def _default_support(mesh: Mesh) -> set[int]:
    diel = {i for i, r in enumerate(mesh.geometry.regions) if not _is_free_space(r.material)}
    return diel or set(range(len(mesh.geometry.regions)))


def mode_volume(mode: ModeSolution, mesh: Mesh, support=None, standing_wave: bool = False) -> float:
    """2 pi int x eps|E|^2 over the support divided by the peak of eps|E|^2 (quadrature points).

    The peak is taken over the whole mesh. The standing-wave convention doubles
    the numerator and quadruples the peak, halving the volume.
    """
    support = _default_support(mesh) if support is None else set(support)
    if not support:
        raise PostprocessError("empty support selection for the mode volume")
    bad = [s for s in support if not 0 <= s < len(mesh.geometry.regions)]
    if bad:
        raise PostprocessError(f"support names unknown region {bad[0]}")
    num, peak = 0.0, 0.0
    for df in derived_fields(mode, mesh):
        w = df.elec_energy()
        mask = np.isin(df.region, list(support))
        num += 2 * math.pi * float(np.sum((df.wdet * df.x * w)[mask]))
        peak = max(peak, float(np.max(w)))
    if peak <= 0:
        raise PostprocessError("field is identically zero")
    V = num / peak
    return V / 2 if standing_wave else V


def filling_factors(mode: ModeSolution, mesh: Mesh) -> dict:
    """(material, direction) -> share of the electric energy; entries sum to 1."""
    parts: dict = {}
    total = 0.0
    regions = mesh.geometry.regions
    for df in derived_fields(mode, mesh):
        E = df.E
        dens = (df.eps_perp * abs2(E[0]), df.eps_perp * abs2(E[1]), df.eps_para * abs2(E[2]))
        for d, name in enumerate(DIRECTIONS):
            contrib = df.wdet * df.x * dens[d]
            for r in np.unique(df.region):
                key = (regions[r].material.name, name)
                val = float(np.sum(contrib[df.region == r]))
                parts[key] = parts.get(key, 0.0) + val
                total += val
    if total <= 0:
        raise PostprocessError("field is identically zero")
    return {k: v / total for k, v in sorted(parts.items())}


def dielectric_fraction(mode: ModeSolution, mesh: Mesh) -> float:
    """Share of the electric energy stored outside vacuum; picks resonator modes from box modes."""
    free = {m.name for m in mesh.geometry.materials.values() if _is_free_space(m)}
    return sum(v for (mat, _), v in filling_factors(mode, mesh).items() if mat not in free)


def _wall_edges(mesh: Mesh, labels=None):
    edges = [b for b in mesh.boundary_edges if isinstance(b.condition, ElectricWall)]
    if labels is not None:
        labels = {labels} if isinstance(labels, str) else set(labels)
        edges = [b for b in edges if b.condition.label in labels]
    return edges


def wall_integral(mode: ModeSolution, mesh: Mesh, labels=None) -> float:
    """int x (|Hazi|^2 + |Haxi nx - Hrad ny|^2) dl over the selected electric walls."""
    h = mode.coefficients
    total = 0.0
    for be in _wall_edges(mesh, labels):
        e = mesh.elements[be.element]
        ref, pts, normal, w = mesh.edge_quadrature(be)
        N, _ = shape_functions(e.kind, ref)
        idx = np.array(e.nodes)
        hr, hp, hz = (N @ h[3 * idx + c] for c in range(3))
        tang = hz * normal[:, 0] - hr * normal[:, 1]
        total += float(np.sum(w * pts[:, 0] * (abs2(hp) + abs2(tang))))
    return total


@dataclass(frozen=True)
class WallLoss:
    Lambda: float
    Q_wall: float


def characteristic_length(mode: ModeSolution, mesh: Mesh, labels=None) -> float:
    if not _wall_edges(mesh, labels):
        raise PostprocessError("no electric-wall segments to integrate over")
    vol = sum(float(np.sum(df.wdet * df.x * df.mag_energy())) for df in derived_fields(mode, mesh))
    wall = wall_integral(mode, mesh, labels)
    if wall < 1e-300:
        warnings.warn("field vanishes on the wall; characteristic length is infinite", RuntimeWarning)
        return math.inf
    return vol / wall


def wall_loss(mode: ModeSolution, mesh: Mesh, surface_resistance: float | None = None,
              conductivity: float | None = None, mu: float = MU0, labels=None) -> WallLoss:
    """Characteristic length and the conductor-loss Q of the selected electric walls."""
    if (surface_resistance is None) == (conductivity is None):
        raise PostprocessError("give exactly one of surface_resistance or conductivity")
    lam = characteristic_length(mode, mesh, labels)
    f = mode.frequency.real
    if conductivity is not None:
        if conductivity <= 0:
            raise PostprocessError("conductivity must be positive")
        q = math.sqrt(4 * math.pi * f * mu * conductivity) * lam
    else:
        if surface_resistance <= 0:
            raise PostprocessError("surface resistance must be positive")
        q = 2 * math.pi * f * mu / surface_resistance * lam
    return WallLoss(lam, q)


def q_rad_lower(mode: ModeSolution, mesh: Mesh, labels=None) -> float:
    """Retro-reflection bound (8 pi f / c) Lambda with the wall placed in the radiation zone."""
    return 8 * math.pi * mode.frequency.real / C0 * characteristic_length(mode, mesh, labels)


# ---------------------------------------------------------------- nodal export


def _nodal_values(mode: ModeSolution, mesh: Mesh, quantity: str) -> np.ndarray:
    if quantity not in QUANTITIES:
        raise PostprocessError(f"unknown quantity {quantity!r}; choose from {', '.join(QUANTITIES)}")
    h = mode.coefficients
    acc = np.zeros(mesh.n_nodes)
    cnt = np.zeros(mesh.n_nodes)
    for ei, e in enumerate(mesh.elements):
        ref = REF_NODES[e.kind].copy()
        centre = ref.mean(axis=0)
        X = mesh.nodes[list(e.nodes)]
        on_axis = X[:, 0] <= 0
        ref[on_axis] += 1e-6 * (centre - ref[on_axis])  # approach the axis from inside
        N, grad, pts = mesh.element_gradients(ei, ref)
        idx = np.array(e.nodes)
        comps = [h[3 * idx + c] for c in range(3)]
        H = tuple(N @ u for u in comps)
        Hx = tuple(grad[:, :, 0] @ u for u in comps)
        Hy = tuple(grad[:, :, 1] @ u for u in comps)
        D, div = _curl_div(mode.M, pts[:, 0], H, Hx, Hy)
        mat = mesh.material(ei)
        E = (D[0] / mat.eps_perp, D[1] / mat.eps_perp, D[2] / mat.eps_para)
        table = {
            "AbsMagEnDens": abs2(H[0]) + abs2(H[1]) + abs2(H[2]),
            "ElecEnDens": mat.eps_perp * (abs2(E[0]) + abs2(E[1])) + mat.eps_para * abs2(E[2]),
            "DivH": np.abs(div),
            "Hrad": H[0], "Hazi": H[1], "Haxi": H[2],
            "Drad": D[0], "Dazi": D[1], "Daxi": D[2],
            "Erad": E[0], "Eazi": E[1], "Eaxi": E[2],
        }
        v = table[quantity]
        acc[idx] += np.real(v) if not np.iscomplexobj(v) else np.abs(v) * np.sign(np.real(v) + 0.0)
        cnt[idx] += 1
    return acc / np.maximum(cnt, 1)


VTK_CELL = {"quad9": 28, "tri6": 22}


def export_fields(mode: ModeSolution, mesh: Mesh, quantity: str, path) -> Path:
    """Legacy ASCII VTK unstructured grid with the quantity as point data."""
    values = _nodal_values(mode, mesh, quantity)
    path = Path(path)
    lines = [
        "# vtk DataFile Version 3.0",
        f"{quantity} M={mode.M} f={mode.frequency.real:.9g}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [f"{x:.12g} {y:.12g} 0" for x, y in mesh.nodes]
    size = sum(len(e.nodes) + 1 for e in mesh.elements)
    lines.append(f"CELLS {mesh.n_elements} {size}")
    lines += [f"{len(e.nodes)} " + " ".join(map(str, e.nodes)) for e in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += [str(VTK_CELL[e.kind]) for e in mesh.elements]
    lines += [f"POINT_DATA {mesh.n_nodes}", f"SCALARS {quantity} double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.9g}" for v in values]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise PostprocessError(f"cannot write {path}: {exc}") from None
    return path


# ---------------------------------------------------------------- reports


@dataclass
class ModeReport:
    M: int
    f: complex
    divergence_rel: float
    V_mode: float
    Lambda: float
    Q_wall: float
    Q_rad_lower: float
    filling: dict = field(default_factory=dict)


def make_report(mode: ModeSolution, mesh: Mesh, surface_resistance=None, conductivity=None,
                support=None, wall_labels=None, radiation_labels=None, standing_wave=False) -> ModeReport:
    nan = float("nan")
    V = mode_volume(mode, mesh, support, standing_wave)
    lam = q_wall = q_low = nan
    if _wall_edges(mesh, wall_labels):
        lam = characteristic_length(mode, mesh, wall_labels)
        if surface_resistance is not None or conductivity is not None:
            q_wall = wall_loss(mode, mesh, surface_resistance, conductivity, labels=wall_labels).Q_wall
    if radiation_labels is not None and _wall_edges(mesh, radiation_labels):
        q_low = q_rad_lower(mode, mesh, radiation_labels)
    return ModeReport(mode.M, mode.frequency, mode.divergence_rel, V, lam, q_wall, q_low,
                      filling_factors(mode, mesh))


def g9(v) -> str:
    return f"{v:.9g}"


def report_csv(reports: list[ModeReport]) -> str:
    keys = sorted({k for r in reports for k in r.filling})
    header = ["M", "f_re_hz", "f_im_hz", "div_rel", "V_mode_m3", "Lambda_m", "Q_wall", "Q_rad_lower"]
    header += [f"filling:{m}:{d}" for m, d in keys]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in reports:
        row = [r.M, g9(r.f.real), g9(r.f.imag), g9(r.divergence_rel), g9(r.V_mode), g9(r.Lambda),
               g9(r.Q_wall), g9(r.Q_rad_lower)]
        row += [g9(r.filling.get(k, 0.0)) for k in keys]
        w.writerow(row)
    return buf.getvalue()

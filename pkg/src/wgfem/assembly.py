"""Sparse stiffness, mass and constraint matrices for one azimuthal order M.

Degrees of freedom are interleaved per node: dof = 3 * node + component with
components (rad, azi, axi) = (0, 1, 2).  The weak-form integrands are
transcribed as lists of bilinear terms

    (coefficient, test component, trial component, test factor, trial factor)

where a factor is N, Nx or Ny, each list carrying a weight 1/x, 1 or x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .constants import CBAR
from .geometry import ElectricWall, MagneticWall, RadiationMatch
from .mesh import EDGES, REF_NODES, Mesh

RAD, AZI, AXI = 0, 1, 2
COMPONENTS = ("rad", "azi", "axi")
N_COMP = 3

# local quantities a constraint row is expressed in
QUANTITIES = ("Hrad", "Hazi", "Haxi", "Hradx", "Hazix", "Haxix", "Hrady", "Haziy", "Haxiy")
REDUNDANCY_TOL = 1e-10
SMOOTH_NORMAL_DEG = 20.0


class AssemblyError(ValueError):
    pass


def dof(node, comp):
    return N_COMP * np.asarray(node) + comp


@dataclass(eq=False)
class AssembledSystem:
    """K h = lambda Mm h subject to C h = 0, with lambda = (2 pi f / c)^2."""

    K: sp.csr_matrix
    Mm: sp.csr_matrix
    C: sp.csr_matrix
    M: int
    alpha: float
    mesh: Mesh
    P: sp.csr_matrix  # penalty form with alpha = 1, for the divergence diagnostic
    row_info: list = field(default_factory=list)

    @property
    def n_dofs(self) -> int:
        return self.K.shape[0]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.C.data)


# ---------------------------------------------------------------- weak terms


def laplacian_terms(M, ep, ea):
    """Anisotropic curl-curl kernel: (A/x + B + x C) / (eps_perp eps_para)."""
    p, r, z = AZI, RAD, AXI
    s = 1.0 / (ep * ea)
    A = [
        (ep, p, p, "N", "N"),
        (-M * ep, p, r, "N", "N"),
        (-M * ep, r, p, "N", "N"),
        (M * M * ep, r, r, "N", "N"),
        (M * M * ea, z, z, "N", "N"),
    ]
    B = [
        (ep, p, p, "Nx", "N"),
        (-M * ep, p, r, "Nx", "N"),
        (ep, p, p, "N", "Nx"),
        (-M * ep, r, p, "N", "Nx"),
        (-M * ea, z, p, "N", "Ny"),
        (-M * ea, p, z, "Ny", "N"),
    ]
    C = [
        (ep, p, p, "Nx", "Nx"),
        (ea, z, z, "Nx", "Nx"),
        (-ea, z, r, "Nx", "Ny"),
        (-ea, r, z, "Ny", "Nx"),
        (ea, r, r, "Ny", "Ny"),
        (ea, p, p, "Ny", "Ny"),
    ]
    return {key: [(c * s, *t) for c, *t in terms] for key, terms in (("inv_x", A), ("one", B), ("x", C))}


def laplacian_terms_isotropic(M, e):
    """Simplified kernel for eps_perp == eps_para == e."""
    p, r, z = AZI, RAD, AXI
    s = 1.0 / e
    A = [
        (s, p, p, "N", "N"),
        (-M * s, p, r, "N", "N"),
        (-M * s, r, p, "N", "N"),
        (M * M * s, r, r, "N", "N"),
        (M * M * s, z, z, "N", "N"),
    ]
    B = [
        (s, p, p, "Nx", "N"),
        (-M * s, p, r, "Nx", "N"),
        (s, p, p, "N", "Nx"),
        (-M * s, r, p, "N", "Nx"),
        (-M * s, z, p, "N", "Ny"),
        (-M * s, p, z, "Ny", "N"),
    ]
    C = [
        (s, p, p, "Nx", "Nx"),
        (s, z, z, "Nx", "Nx"),
        (-s, z, r, "Nx", "Ny"),
        (-s, r, z, "Ny", "Nx"),
        (s, r, r, "Ny", "Ny"),
        (s, p, p, "Ny", "Ny"),
    ]
    return {"inv_x": A, "one": B, "x": C}


def penalty_terms(M, alpha):
    """Divergence penalty alpha (D/x + E + x F)."""
    p, r, z = AZI, RAD, AXI
    a = alpha
    D = [
        (a, r, r, "N", "N"),
        (-a * M, p, r, "N", "N"),
        (-a * M, r, p, "N", "N"),
        (a * M * M, p, p, "N", "N"),
    ]
    E = [
        (a, z, r, "Ny", "N"),
        (a, r, r, "Nx", "N"),
        (-a * M, z, p, "Ny", "N"),
        (-a * M, r, p, "Nx", "N"),
        (a, r, r, "N", "Nx"),
        (a, r, z, "N", "Ny"),
        (-a * M, p, r, "N", "Nx"),
        (-a * M, p, z, "N", "Ny"),
    ]
    F = [
        (a, r, r, "Nx", "Nx"),
        (a, r, z, "Nx", "Ny"),
        (a, z, r, "Ny", "Nx"),
        (a, z, z, "Ny", "Ny"),
    ]
    return {"inv_x": D, "one": E, "x": F}


def _integrate_terms(group, term_sets, local):
    """Accumulate per-element term lists into local (ne, nn, 3, nn, 3) matrices.

    term_sets: list of (element mask, terms) pairs; coefficients may be arrays over masked elements.
    """
    factors = {
        "N": np.broadcast_to(group.N[None], group.dNx.shape),
        "Nx": group.dNx,
        "Ny": group.dNy,
    }
    weights = {"inv_x": group.wdet / group.x, "one": group.wdet, "x": group.wdet * group.x}
    for mask, terms in term_sets:
        if not np.any(mask):
            continue
        for wkey, tlist in terms.items():
            w = weights[wkey][mask]
            for coef, ci, cj, fi, fj in tlist:
                cw = np.asarray(coef)[..., None] * w if np.ndim(coef) else coef * w
                local[mask, :, ci, :, cj] += np.einsum("eq,eqa,eqb->eab", cw, factors[fi][mask], factors[fj][mask])


def _scatter(mesh: Mesh, locals_) -> sp.csr_matrix:
    n = N_COMP * mesh.n_nodes
    rows, cols, vals = [], [], []
    for group, local in locals_:
        nn = group.conn.shape[1]
        d = (N_COMP * group.conn[:, :, None] + np.arange(N_COMP)[None, None, :]).reshape(len(group.conn), -1)
        rows.append(np.repeat(d, nn * N_COMP, axis=1).ravel())
        cols.append(np.tile(d, (1, nn * N_COMP)).ravel())
        vals.append(local.reshape(len(group.conn), -1).ravel())
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return A.tocsr()


def _check_materials(mesh: Mesh):
    for r in mesh.geometry.regions:
        if r.material.eps_perp <= 0 or r.material.eps_para <= 0:
            raise AssemblyError(f"material {r.material.name!r} has nonpositive permittivity")


def assemble_laplacian(mesh: Mesh, M: int, isotropic_kernel: bool = True) -> sp.csr_matrix:
    _check_materials(mesh)
    out = []
    for g in mesh.groups:
        nn = g.conn.shape[1]
        local = np.zeros((len(g.ids), nn, N_COMP, nn, N_COMP))
        iso = g.eps_perp == g.eps_para if isotropic_kernel else np.zeros(len(g.ids), bool)
        sets = []
        for e in np.unique(g.eps_perp[iso]):
            sets.append((iso & (g.eps_perp == e), laplacian_terms_isotropic(M, e)))
        aniso = ~iso
        if np.any(aniso):
            sets.append((aniso, laplacian_terms(M, g.eps_perp[aniso], g.eps_para[aniso])))
        _integrate_terms(g, sets, local)
        out.append((g, local))
    return _scatter(mesh, out)


def assemble_penalty(mesh: Mesh, M: int, alpha: float = 1.0) -> sp.csr_matrix:
    out = []
    for g in mesh.groups:
        nn = g.conn.shape[1]
        local = np.zeros((len(g.ids), nn, N_COMP, nn, N_COMP))
        _integrate_terms(g, [(np.ones(len(g.ids), bool), penalty_terms(M, alpha))], local)
        out.append((g, local))
    return _scatter(mesh, out)


def _symmetrize(A):
    return ((A + A.T) * 0.5).tocsr()


def assemble_stiffness(mesh: Mesh, M: int, alpha: float = 1.0) -> sp.csr_matrix:
    """Galerkin matrix of the curl-curl term plus alpha times the divergence penalty."""
    if M < 0:
        raise AssemblyError("M must be >= 0")
    K = assemble_laplacian(mesh, M)
    if alpha:
        K = K + assemble_penalty(mesh, M, alpha)
    return _symmetrize(K)


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Block-diagonal x-weighted mass matrix."""
    out = []
    for g in mesh.groups:
        nn = g.conn.shape[1]
        local = np.zeros((len(g.ids), nn, N_COMP, nn, N_COMP))
        m = np.einsum("eq,qa,qb->eab", g.wdet * g.x, g.N, g.N)
        for c in range(N_COMP):
            local[:, :, c, :, c] = m
        out.append((g, local))
    return _symmetrize(_scatter(mesh, out))


# ---------------------------------------------------------------- constraints


def _q(**coefs) -> np.ndarray:
    row = np.zeros(len(QUANTITIES), dtype=complex)
    for k, v in coefs.items():
        row[QUANTITIES.index(k)] += v
    return row


def electric_wall_rows(M, n, x, ep, ea):
    nx, ny = n
    return [
        ("H.n", _q(Hrad=nx, Haxi=ny)),
        ("curl", _q(Haxix=-1.0, Hrady=1.0)),
        (
            "E.t",
            _q(Hazi=ep * nx, Hrad=-ep * M * nx, Hazix=ep * x * nx, Haxi=-ea * M * ny, Haziy=ea * x * ny),
        ),
    ]


def magnetic_wall_rows(M, n, x):
    nx, ny = n
    return [
        ("Hxn", _q(Haxi=nx, Hrad=-ny)),
        ("Hazi", _q(Hazi=1.0)),
        ("D.n", _q(Haxi=M * nx, Haziy=-x * nx, Hazi=ny, Hrad=-M * ny, Hazix=x * ny)),
    ]


def radiation_rows(M, n, x, bc: RadiationMatch):
    """Mixed rows, each transcribed with its 1/x factor where the original carries one."""
    nx, ny = n
    cmw, cew = math.sin(bc.mix_angle), math.cos(bc.mix_angle)
    tng_m, tng_e = (1.0, 0.0) if bc.tangent_toggle == "magnetic" else (0.0, 1.0)
    k = CBAR * bc.match_frequency
    ew = _q(Hazi=nx, Hrad=-M * nx, Haxi=-M * ny, Hazix=x * nx, Haziy=x * ny) / x
    row1 = -1j * cmw * k * _q(Hazi=1.0) + cew * ew
    row2 = -1j * cew * _q(Haxix=-1.0, Hrady=1.0) + cmw * k * _q(Haxi=nx, Hrad=-ny)
    mw = _q(Haxi=M * nx, Hazi=ny, Hrad=-M * ny, Haziy=-x * nx, Hazix=x * ny) / x
    row3 = tng_m * k * _q(Hrad=nx, Haxi=ny) - tng_e * mw
    return [("rad1", row1), ("rad2", row2), ("rad3", row3)]


def constraint_rows(bc, M, n, x, ep=1.0, ea=1.0):
    """(name, coefficients over QUANTITIES) for one boundary point.

    ep, ea are the permittivities of the medium behind the wall; only the
    electric-wall tangential-E row depends on them.
    """
    if isinstance(bc, ElectricWall):
        return electric_wall_rows(M, n, x, ep, ea)
    if isinstance(bc, MagneticWall):
        return magnetic_wall_rows(M, n, x)
    if isinstance(bc, RadiationMatch):
        if x <= 0:
            raise AssemblyError("radiation-match boundary may not touch the axis")
        return radiation_rows(M, n, x, bc)
    raise AssemblyError(f"unknown boundary condition {bc!r}")


def axis_rows(M):
    """Regularity of the field on the symmetry axis (finite, single-valued H at x = 0)."""
    if M == 0:
        return [("axis", _q(Hrad=1.0)), ("axis", _q(Hazi=1.0))]
    if M == 1:
        return [("axis", _q(Haxi=1.0)), ("axis", _q(Hazi=1.0, Hrad=-1.0))]
    return [("axis", _q(Hrad=1.0)), ("axis", _q(Hazi=1.0)), ("axis", _q(Haxi=1.0))]


def _axis_nodes(mesh: Mesh) -> set:
    out = set()
    for ei, le in mesh.unmatched_edges():
        e = mesh.elements[ei]
        ids = [e.nodes[i] for i in EDGES[e.kind][le]]
        if all(mesh.nodes[i, 0] == 0.0 for i in ids):
            out.update(ids)
    return out


def _is_derivative_row(coefs) -> bool:
    return bool(np.any(coefs[3:] != 0))


def _boundary_points(mesh: Mesh):
    """Per node: list of (normal, condition, element, local node index)."""
    pts: dict = {}
    for be in mesh.boundary_edges:
        e = mesh.elements[be.element]
        ed = EDGES[e.kind][be.local_edge]
        normals = mesh.edge_normal_at(be, [0.0, 0.5, 1.0])
        for li, nrm in zip(ed, normals):
            pts.setdefault(e.nodes[li], []).append((nrm, be.condition, be.element, li))
    return pts


def _cluster(entries):
    """Group entries at one node that share a condition and a (nearly) common normal."""
    cos_tol = math.cos(math.radians(SMOOTH_NORMAL_DEG))
    groups = []
    for nrm, bc, el, li in entries:
        for g in groups:
            if g["bc"] == bc and np.dot(g["n0"], nrm) >= cos_tol:
                g["normals"].append(nrm)
                g["elems"].setdefault(el, li)
                break
        else:
            groups.append({"bc": bc, "n0": nrm, "normals": [nrm], "elems": {el: li}})
    for g in groups:
        n = np.mean(g["normals"], axis=0)
        n = n / np.linalg.norm(n)
        # axis-aligned walls: round-off in the normal would otherwise leave a
        # spurious 1e-15 row where a coefficient is exactly zero
        n[np.abs(n) < 1e-12] = 0.0
        g["n"] = n / np.linalg.norm(n)
    return groups


def _functionals(mesh: Mesh, node: int, elems: dict):
    """Map each local quantity to (global dofs, weights), gradients averaged over elements."""
    cols, weights = [], []
    for c in range(N_COMP):
        cols.append(np.array([dof(node, c)]))
        weights.append(np.array([1.0]))
    grads = {}
    for el, li in elems.items():
        e = mesh.elements[el]
        _, grad, _ = mesh.element_gradients(el, REF_NODES[e.kind][li][None])
        grads[el] = (np.array(e.nodes), grad[0])
    for d in range(2):
        for c in range(N_COMP):
            cs = np.concatenate([dof(nodes, c) for nodes, _ in grads.values()])
            ws = np.concatenate([g[:, d] for _, g in grads.values()]) / len(grads)
            cols.append(cs)
            weights.append(ws)
    return cols, weights


def assemble_constraints(mesh: Mesh, M: int, derivative_rows: bool = True, axis: bool = False):
    """Collocated constraint rows at every boundary node, redundancy removed per node.

    Returns (C, info) where info lists (node, condition kind, row name) per kept row.
    """
    ndof = N_COMP * mesh.n_nodes
    all_rows, info = [], []
    cache: dict = {}
    by_col: dict = {}
    points = _boundary_points(mesh)
    axis_nodes = _axis_nodes(mesh) if axis else set()
    cands: dict = {}
    for node in sorted(set(points) | axis_nodes):
        entries = points.get(node, [])
        x = float(mesh.nodes[node, 0])
        cand = []
        if node in axis_nodes:
            for name, coefs in axis_rows(M):
                vec = {int(dof(node, c)): complex(coefs[c]) for c in range(N_COMP) if coefs[c] != 0}
                cand.append((vec, "Axis", name))
        for g in _cluster(entries):
            bc = g["bc"]
            per_elem = []
            for el, li in g["elems"].items():
                mat = mesh.material(el)
                rows = constraint_rows(bc, M, g["n"], x, mat.eps_perp, mat.eps_para)
                per_elem.append(((el, li), rows))
            for k, (name, _) in enumerate(per_elem[0][1]):
                coef_by_elem = [rows[k][1] for _, rows in per_elem]
                if not derivative_rows and not isinstance(bc, RadiationMatch) and _is_derivative_row(coef_by_elem[0]):
                    continue
                vec: dict = {}
                for (el, li), coefs in zip([pe[0] for pe in per_elem], coef_by_elem):
                    if (node, el) not in cache:
                        cache[(node, el)] = _functionals(mesh, node, {el: li})
                    cols, weights = cache[(node, el)]
                    for qi, cval in enumerate(coefs):
                        if cval == 0:
                            continue
                        for cc, ww in zip(cols[qi], weights[qi]):
                            vec[cc] = vec.get(cc, 0) + cval * ww / len(per_elem)
                cand.append((vec, bc.kind, name))
        cands[node] = cand
    # point rows (own dofs only) first everywhere, so a derivative row is the
    # one dropped when the two are redundant along a wall
    for point_pass in (True, False):
        for node, cand in cands.items():
            own = {int(dof(node, c)) for c in range(N_COMP)}
            sub = [r for r in cand if (set(r[0]) <= own) == point_pass]
            for vec, kind, name in _independent(sub, all_rows, by_col):
                for c in vec:
                    by_col.setdefault(c, []).append(len(all_rows))
                all_rows.append(vec)
                info.append((node, kind, name))
    rows, cols, vals = [], [], []
    for i, vec in enumerate(all_rows):
        for c, v in vec.items():
            rows.append(i)
            cols.append(c)
            vals.append(v)
    vals = np.array(vals, dtype=complex)
    if vals.size and np.all(vals.imag == 0):
        vals = vals.real
    C = sp.coo_matrix((vals, (rows, cols)), shape=(len(all_rows), ndof)).tocsr()
    C.eliminate_zeros()
    keep = _globally_independent(C)
    if len(keep) < C.shape[0]:
        C = C[keep]
        info = [info[i] for i in keep]
    return C, info


def _globally_independent(C) -> np.ndarray:
    """Row indices of a maximal independent subset, earlier rows preferred.

    The per-node pass misses dependencies that chain along a whole wall, so the
    final word on rank is this global check. An unpivoted QR of the dense C^T
    keeps row order: |R_kk| is the distance of row k from the span of the rows
    before it, so simple rows kept early win over derivative rows. Cost is
    O(cols * rows^2) on the touched columns only, well under a second for every
    shipped fixture.
    """
    if C.shape[0] == 0:
        return np.arange(0)
    touched = np.where(np.diff(C.tocsc().indptr) > 0)[0]
    D = C[:, touched].toarray().T
    R = scipy.linalg.qr(D, mode="r")[0]
    d = np.abs(np.diag(R))
    norms = np.linalg.norm(D, axis=0)
    return np.where(d > REDUNDANCY_TOL * norms)[0]


def _independent(cand, kept, by_col):
    """Normalize candidate rows and keep those independent of each other and of
    previously kept rows sharing a column with them (relative tolerance 1e-10)."""
    cand = [(v, k, n) for v, k, n in cand if v and max(abs(x) for x in v.values()) > 0]
    if not cand:
        return []
    # two hops through the column graph: a wall row can depend on rows kept at
    # neighbouring nodes that share no column with it directly (e.g. Hazi = 0
    # along a magnetic wall makes its tangential derivative redundant)
    hop1 = {i for v, _, _ in cand for c in v for i in by_col.get(c, ())}
    near = sorted(hop1 | {i for j in hop1 for c in kept[j] for i in by_col.get(c, ())})
    cols = sorted({c for v, _, _ in cand for c in v} | {c for i in near for c in kept[i]})
    index = {c: i for i, c in enumerate(cols)}

    def dense(vec):
        row = np.zeros(len(cols), dtype=complex)
        for c, x in vec.items():
            row[index[c]] = x
        return row

    basis = np.zeros((0, len(cols)), dtype=complex)
    if near:
        old = np.array([dense(kept[i]) for i in near])
        Q, R, _ = scipy.linalg.qr(old.T, mode="economic", pivoting=True)
        d = np.abs(np.diag(R))
        basis = Q[:, : int(np.sum(d > REDUNDANCY_TOL * d[0]))].T
    out = []
    for vec, kind, name in cand:
        row = dense(vec)
        row /= np.linalg.norm(row)
        resid = row - (row @ basis.conj().T) @ basis if len(basis) else row
        rn = np.linalg.norm(resid)
        if rn > REDUNDANCY_TOL ** 0.5:
            basis = np.vstack([basis, resid / rn])
            out.append(({c: row[index[c]] for c in vec if row[index[c]] != 0}, kind, name))
    return out


# ---------------------------------------------------------------- driver


def assemble(mesh: Mesh, M: int, alpha: float = 1.0, derivative_rows: bool = True, axis: bool = False) -> AssembledSystem:
    if M < 0:
        raise AssemblyError("M must be >= 0")
    lap = assemble_laplacian(mesh, M)
    P = _symmetrize(assemble_penalty(mesh, M, 1.0))
    K = _symmetrize(lap + alpha * P) if alpha else _symmetrize(lap)
    Mm = assemble_mass(mesh)
    C, info = assemble_constraints(mesh, M, derivative_rows, axis)
    return AssembledSystem(K, Mm, C, M, alpha, mesh, P, info)


def dump_coo(system: AssembledSystem, directory) -> list[Path]:
    """Write K, Mm and C as 'row col value' text for external diffing."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, A in (("K", system.K), ("Mm", system.Mm), ("C", system.C)):
        A = A.tocoo()
        p = d / f"{name}.coo"
        with p.open("w") as fh:
            fh.write(f"# {name} {A.shape[0]} {A.shape[1]}\n")
            for i, j, v in zip(A.row, A.col, A.data):
                if np.iscomplexobj(A.data):
                    fh.write(f"{i} {j} {v.real:.17g} {v.imag:.17g}\n")
                else:
                    fh.write(f"{i} {j} {v:.17g}\n")
        paths.append(p)
    return paths

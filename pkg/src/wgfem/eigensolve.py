"""Constrained generalized eigensolver (shift-invert on the saddle-point system)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledSystem, assemble
from .constants import CBAR
from .geometry import RadiationMatch, SolverSettings
from .mesh import Mesh

GAUGE_FLOOR = CBAR**2  # lambda of a 1 Hz mode
SPURIOUS_THRESHOLD = 0.1
DENSE_LIMIT = 1200
ARPACK_MAXITER = 1000  # restarts; degenerate gauge clusters at alpha = 0 otherwise stall for hours


class EigenSolveError(RuntimeError):
    pass


@dataclass(eq=False)
class ModeSolution:
    frequency: complex
    eigenvalue: complex
    coefficients: np.ndarray
    M: int
    divergence_rel: float
    residual: float = 0.0
    constraint_residual: float = 0.0

    @property
    def f(self) -> float:
        return float(self.frequency.real)

    def field(self, comp: int) -> np.ndarray:
        return self.coefficients[comp::3]


def frequency_from_eigenvalue(lam) -> complex:
    """Principal square root; the real path returns a real frequency."""
    f = np.sqrt(complex(lam)) / CBAR
    return complex(f)


def divergence_rel(h, lam, P, Mm) -> float:
    """sqrt(int x |div H|^2 / (|lambda| int x |H|^2)); 1 for a pure gradient eigenfield."""
    if np.real(lam) <= GAUGE_FLOOR:
        return math.inf  # static (gauge) solution: never physical
    num = abs(np.vdot(h, P @ h))
    den = abs(lam) * abs(np.vdot(h, Mm @ h))
    return math.sqrt(num / den) if den > 0 else math.inf


def _default_shift(system: AssembledSystem) -> float:
    """Small negative sigma below the spectrum, from the mesh extent."""
    nodes = system.mesh.nodes
    L = max(np.ptp(nodes[:, 0]), np.ptp(nodes[:, 1]))
    return -0.01 * (math.pi / L) ** 2


def _factor(system: AssembledSystem, sigma):
    K, Mm, C = system.K, system.Mm, system.C
    A = (K - sigma * Mm).tocsr()
    dtype = np.result_type(A.dtype, C.dtype, np.asarray(sigma).dtype)
    scale = float(np.mean(np.abs(A.diagonal()))) or 1.0
    m = C.shape[0]
    S = sp.bmat([[A, scale * C.T], [scale * C, None]], format="csc").astype(dtype)
    if m == 0:
        S = A.tocsc().astype(dtype)
    return spla.splu(S, permc_spec="COLAMD"), dtype


def _shift_invert_operator(system, sigma):
    n = system.n_dofs
    m = system.C.shape[0]
    last = None
    for attempt in range(6):
        try:
            lu, dtype = _factor(system, sigma)
            break
        except RuntimeError as exc:  # exactly singular at the shift
            last = exc
            sigma = sigma * (1 + 1e-3 * (attempt + 1)) + 1e-6 * (attempt + 1) * abs(_default_shift(system))
    else:
        raise EigenSolveError(f"factorization failed at the shift: {last}")
    Mm = system.Mm

    def apply(v):
        rhs = np.zeros(n + m, dtype=np.result_type(dtype, v.dtype))
        rhs[:n] = Mm @ v
        return lu.solve(rhs)[:n]

    return apply, sigma, dtype


def _eig_shift_invert(system, sigma, k):
    apply, sigma, dtype = _shift_invert_operator(system, sigma)
    n = system.n_dofs
    n_free = n - system.C.shape[0]
    k = min(k, max(1, n_free - 2))
    if n <= DENSE_LIMIT:
        T = np.column_stack([apply(col) for col in np.eye(n, dtype=dtype)])
        nu, V = scipy.linalg.eig(T)
        order = np.argsort(-np.abs(nu))[:k]
        return sigma, nu[order], V[:, order]
    op = spla.LinearOperator((n, n), matvec=apply, dtype=dtype)
    v0 = np.random.default_rng(12345).standard_normal(n).astype(dtype)
    ncv = min(n - 1, max(2 * k + 1, 40))
    try:
        nu, V = spla.eigs(op, k=k, which="LM", v0=v0, ncv=ncv, tol=1e-13, maxiter=ARPACK_MAXITER)
    except spla.ArpackNoConvergence as exc:
        hint = "; with alpha = 0 give a shift near the modes of interest" if system.alpha == 0 else ""
        raise EigenSolveError(f"eigensolver did not converge ({len(exc.eigenvalues)} of {k} pairs){hint}") from None
    return sigma, nu, V


def _constraint_multiplier_residual(system, h, lam):
    K, Mm, C = system.K, system.Mm, system.C
    r = K @ h - lam * (Mm @ h)
    denom = np.linalg.norm(K @ h) + abs(lam) * np.linalg.norm(Mm @ h)
    if C.shape[0]:
        Ct = C.T.tocsc()
        G = (C.conj() @ Ct).tocsc()
        mu = spla.spsolve(G, -(C.conj() @ r))
        r = r + Ct @ mu
    return float(np.linalg.norm(r) / denom), float(np.linalg.norm(C @ h) / np.linalg.norm(h)) if C.shape[0] else 0.0


def _realify(h):
    i = int(np.argmax(np.abs(h)))
    h = h * np.exp(-1j * np.angle(h[i]))
    return h.real


def _ritz(V, A, B):
    """Rayleigh-Ritz of the pencil (A, B) on span(V): Ritz values and vectors.

    Directions of V that are B-dependent (realified vectors of an exactly
    degenerate eigenspace can coincide) are dropped first.
    """
    Bv = V.conj().T @ (B @ V)
    b, U = scipy.linalg.eigh(0.5 * (Bv + Bv.conj().T))
    ok = b > 1e-10 * b.max()
    V = V @ (U[:, ok] / np.sqrt(b[ok]))
    Av = V.conj().T @ (A @ V)
    theta, W = scipy.linalg.eigh(0.5 * (Av + Av.conj().T))
    return theta, V @ W


def _rotate_clusters(lams, H, system, rel_gap=1e-4, threshold=SPURIOUS_THRESHOLD):
    """Unmix near-degenerate physical and gradient eigenvectors.

    With alpha = 1 in a homogeneous region the gradient spectrum coincides with
    physical eigenvalues; discretization splits each pair only slightly and the
    computed vectors are arbitrary mixtures. Inside a cluster the divergence form
    P is diagonalized first, its Ritz vectors are split at the spurious threshold,
    and K is then re-diagonalized within each part so that genuinely distinct
    physical eigenvalues are recovered unchanged.
    """
    order = np.argsort(np.real(lams))
    lams, H = lams[order], H[:, order]
    out_l, out_h = [], []
    i = 0
    while i < len(lams):
        j = i + 1
        while j < len(lams) and abs(lams[j] - lams[j - 1]) <= rel_gap * abs(lams[j - 1]):
            j += 1
        if j - i > 1:
            p, V = _ritz(H[:, i:j], system.P, system.Mm)
            lam_ref = abs(np.mean(lams[i:j]))
            spurious = np.sqrt(np.maximum(p, 0) / lam_ref) > threshold
            for Vb in (V[:, ~spurious], V[:, spurious]):
                if Vb.shape[1]:
                    t, W = _ritz(Vb, system.K, system.Mm)
                    out_l.append(t)
                    out_h.append(W)
        else:
            out_l.append(lams[i:j])
            out_h.append(H[:, i:j])
        i = j
    if not out_l:
        return lams, H
    lams, H = np.concatenate(out_l), np.column_stack(out_h)
    order = np.argsort(np.real(lams))
    return lams[order], H[:, order]


def solve_modes(system: AssembledSystem, settings: SolverSettings, n_candidates: int | None = None) -> list[ModeSolution]:
    """Eigenpairs nearest the shift frequency, sorted by |f - shift|.

    All candidates are returned; use filter_spurious to separate gauge modes.
    """
    if settings.shift_frequency < 0:
        raise EigenSolveError("shift frequency must be >= 0")
    k = n_candidates or settings.n_modes
    sigma = (CBAR * settings.shift_frequency) ** 2 if settings.shift_frequency > 0 else _default_shift(system)
    sigma_used, nu, V = _eig_shift_invert(system, sigma, k)
    keep = np.abs(nu) > 0
    lams = sigma_used + 1.0 / nu[keep]
    V = V[:, keep]
    complex_path = system.is_complex
    if not complex_path:
        lams = lams.real
        V = np.column_stack([_realify(V[:, i]) for i in range(V.shape[1])]) if V.size else V
    # gauge (near-zero) modes are kept so that filter_spurious can count them,
    # but they take no part in the cluster rotation
    gauge = np.real(lams) <= GAUGE_FLOOR
    if not complex_path and np.any(~gauge):
        rl, rV = _rotate_clusters(lams[~gauge], V[:, ~gauge], system)
        lams, V = np.concatenate([lams[gauge], rl]), np.column_stack([V[:, gauge], rV])
    out = []
    for lam, h in zip(lams, V.T):
        nrm = np.sqrt(abs(h @ (system.Mm @ h.conj()))) if complex_path else np.sqrt(h @ (system.Mm @ h))
        h = h / nrm
        res, cres = _constraint_multiplier_residual(system, h, lam)
        f = frequency_from_eigenvalue(lam)
        if not complex_path:
            f = complex(f.real, 0.0) if lam > GAUGE_FLOOR else 0j
        out.append(
            ModeSolution(f, lam, h, system.M, divergence_rel(h, lam, system.P, system.Mm), res, cres)
        )
    out.sort(key=lambda s: abs(s.frequency - settings.shift_frequency))
    return out


def filter_spurious(solutions, mesh: Mesh | None = None, threshold: float = SPURIOUS_THRESHOLD):
    """Split into (physical, spurious) by divergence_rel; recomputed from the mesh when given."""
    if mesh is not None:
        from .assembly import assemble_mass, assemble_penalty

        cache = {}
        for s in solutions:
            if s.M not in cache:
                cache[s.M] = assemble_penalty(mesh, s.M, 1.0)
            Mm = cache.setdefault("mass", assemble_mass(mesh))
            s.divergence_rel = divergence_rel(s.coefficients, s.eigenvalue, cache[s.M], Mm)
    physical = [s for s in solutions if not s.divergence_rel > threshold]
    spurious = [s for s in solutions if s.divergence_rel > threshold]
    return physical, spurious


def physical_modes(system: AssembledSystem, settings: SolverSettings, threshold: float = SPURIOUS_THRESHOLD,
                   oversample: float = 1.5) -> list[ModeSolution]:
    """The settings.n_modes lowest-divergence-passing modes nearest the shift.

    Candidates come in order of distance from the shift, so once a batch holds
    n_modes physical ones no closer physical mode can be missing; otherwise the
    batch is doubled.
    """
    k = int(settings.n_modes * oversample) + 4
    for _ in range(3):
        physical, _ = filter_spurious(solve_modes(system, settings, k), threshold=threshold)
        if len(physical) >= settings.n_modes or k >= system.n_dofs // 2:
            return physical[: settings.n_modes]
        k *= 2
    return physical[: settings.n_modes]


# ---------------------------------------------------------------- radiation


@dataclass(eq=False)
class RadiationResult:
    mode: ModeSolution
    q_inf: float
    iterations: list = field(default_factory=list)
    note: str = ""


def retag_match_frequency(mesh: Mesh, mf: float) -> Mesh:
    edges = tuple(
        replace(b, condition=b.condition.with_frequency(mf)) if isinstance(b.condition, RadiationMatch) else b
        for b in mesh.boundary_edges
    )
    return Mesh(mesh.nodes, mesh.elements, edges, mesh.geometry)


def q_inf(f: complex) -> float:
    """Re f / 2|Im f| for a decaying mode.

    The match rows follow the exp(-i omega t) convention (outward normals, -i on the
    magnetic-wall part), so a mode losing energy through the wall has Im f < 0.
    Im f >= 0 (no loss, or an inward-going match) gives inf.
    """
    if f.imag >= 0:
        return math.inf
    return f.real / (-2.0 * f.imag)


def solve_radiation(geometry, mesh: Mesh, settings: SolverSettings, initial_mf: float,
                    max_iters: int = 8, tol: float = 1e-6, select=None,
                    derivative_rows: bool = True) -> RadiationResult:
    """Fixed-point iteration on the match frequency: mf <- Re f of the tracked mode.

    select(list of physical modes, mf) picks the tracked mode; default nearest to mf.
    """
    if not any(isinstance(b.condition, RadiationMatch) for b in mesh.boundary_edges):
        raise EigenSolveError("no RadiationMatch boundary in the mesh")
    if not initial_mf > 0:
        raise EigenSolveError("initial match frequency must be positive")
    mf = float(initial_mf)
    trace = []
    for _ in range(max_iters):
        m = retag_match_frequency(mesh, mf)
        system = assemble(m, settings.M, settings.alpha, derivative_rows)
        s = replace(settings, shift_frequency=mf)
        modes = physical_modes(system, s)
        if not modes:
            raise EigenSolveError("no physical mode found near the match frequency")
        mode = select(modes, mf) if select else min(modes, key=lambda md: abs(md.frequency - mf))
        new = mode.frequency.real
        trace.append((mf, mode.frequency))
        if abs(new - mf) / mf < tol:
            note = "" if mode.frequency.imag < 0 else "no measurable radiation at this mesh"
            return RadiationResult(mode, q_inf(mode.frequency), trace, note)
        mf = new
    a, b = trace[-2:] if len(trace) > 1 else (trace[-1], trace[-1])
    raise EigenSolveError(f"match-frequency fixed point did not converge; last iterates {a[1]} and {b[1]}")

"""Mode identification and least-squares permittivity fitting."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble
from .eigensolve import EigenSolveError, physical_modes
from .geometry import Material, ResonatorGeometry, SolverSettings
from .mesh import Mesh
from .postprocess import filling_factors


class FitError(ValueError):
    pass


class FitConvergenceError(FitError, ArithmeticError):
    """Numerical failure of the least-squares iteration (inputs were fine)."""


@dataclass(frozen=True)
class MeasuredResonance:
    label: str
    frequency: float
    width_hz: float | None = None
    turnover_k: str | None = None
    kramers_hz: float | None = None

    def __post_init__(self):
        if not self.frequency > 0:
            raise FitError(f"resonance {self.label!r}: frequency must be positive")


@dataclass
class Identification:
    mapping: dict  # label -> (M, mode index)
    locked: bool = True

    def __post_init__(self):
        seen = {}
        for label, key in self.mapping.items():
            key = (int(key[0]), int(key[1]))
            if key in seen:
                raise FitError(f"simulated mode {key} identified twice ({seen[key]!r}, {label!r})")
            seen[key] = label
            self.mapping[label] = key


@dataclass(frozen=True)
class CatalogEntry:
    M: int
    index: int
    frequency: float
    filling: dict = field(default_factory=dict, compare=False)


def mesh_with_geometry(mesh: Mesh, geometry: ResonatorGeometry) -> Mesh:
    """Same nodes and elements, materials taken from another geometry."""
    return Mesh(mesh.nodes, mesh.elements, mesh.boundary_edges, geometry)


def _lowest(mesh: Mesh, M: int, n_modes: int, alpha: float):
    system = assemble(mesh, M, alpha)
    modes = physical_modes(system, SolverSettings(M=M, n_modes=n_modes, shift_frequency=0.0, alpha=alpha))
    return sorted(modes, key=lambda s: s.f)


def _map(fn, items, workers):
    """fn must be picklable (module level) when workers > 1."""
    items = list(items)
    if workers and workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(min(workers, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _catalog_block(args):
    mesh, M, n_modes, alpha, fill = args
    try:
        modes = _lowest(mesh, M, n_modes, alpha)
    except EigenSolveError as exc:
        raise EigenSolveError(f"M={M}: {exc}") from None
    return [CatalogEntry(M, i, s.f, filling_factors(s, mesh) if fill else {}) for i, s in enumerate(modes)]


def _frequencies(args):
    mesh, M, n_modes, alpha = args
    return np.array([s.f for s in _lowest(mesh, M, n_modes, alpha)])


def sweep_modes(geometry: ResonatorGeometry, mesh: Mesh, M_range, n_modes: int,
                alpha: float = 1.0, workers: int = 1, fill: bool = True) -> list[CatalogEntry]:
    """Lowest n_modes physical modes for each M; catalog sorted by frequency."""
    M_list = list(M_range)
    if not M_list:
        raise FitError("empty M range")
    mesh = mesh_with_geometry(mesh, geometry)
    jobs = [(mesh, M, n_modes, alpha, fill) for M in M_list]
    rows = [r for block in _map(_catalog_block, jobs, workers) for r in block]
    return sorted(rows, key=lambda r: (r.frequency, r.M))


# ---------------------------------------------------------------- identification


@dataclass
class Suggestion:
    identification: Identification
    ambiguous: dict  # label -> list of (M, index, frequency) candidates
    unassigned: list


def suggest_identification(catalog, measured, max_gap_hz: float) -> Suggestion:
    """Greedy nearest-frequency injective assignment within max_gap_hz.

    A resonance with two or more catalog candidates inside the gap is reported
    as ambiguous and left out of the identification.
    """
    if not catalog:
        raise FitError("empty catalog")
    cands = {}
    for m in measured:
        cands[m.label] = [c for c in catalog if abs(c.frequency - m.frequency) <= max_gap_hz]
    ambiguous = {
        lbl: [(c.M, c.index, c.frequency) for c in cs] for lbl, cs in cands.items() if len(cs) >= 2
    }
    pairs = sorted(
        (abs(c.frequency - m.frequency), m.label, (c.M, c.index))
        for m in measured if m.label not in ambiguous
        for c in cands[m.label]
    )
    mapping, used = {}, set()
    for _, label, key in pairs:
        if label in mapping or key in used:
            continue
        mapping[label] = key
        used.add(key)
    unassigned = [m.label for m in measured if m.label not in mapping and m.label not in ambiguous]
    return Suggestion(Identification(mapping, locked=False), ambiguous, unassigned)


# ---------------------------------------------------------------- fitting


@dataclass
class FitResult:
    eps_perp: float
    eps_para: float
    residuals_mhz: dict
    chi2: float
    trace: list
    converged: bool
    iterations: int


class _Model:
    """Forward model: identified mode frequencies as a function of (eps_perp, eps_para)."""

    def __init__(self, geometry, mesh, identification, material, alpha, workers, extra_modes=4):
        self.geometry = geometry
        self.mesh = mesh
        self.material = material
        self.alpha = alpha
        self.workers = workers
        self.labels = list(identification.mapping)
        self.keys = [identification.mapping[lbl] for lbl in self.labels]
        self.by_M = {}
        for key in self.keys:
            self.by_M.setdefault(key[0], []).append(key)
        self.n_modes = {M: max(i for _, i in ks) + 1 + extra_modes for M, ks in self.by_M.items()}
        self.tracked = None
        self.calls = 0

    def spectra(self, eps):
        mat = Material(self.material, float(eps[0]), float(eps[1]))
        geo = self.geometry.with_materials(**{self.material: mat})
        mesh = mesh_with_geometry(self.mesh, geo)
        Ms = sorted(self.by_M)
        freqs = _map(_frequencies, [(mesh, M, self.n_modes[M], self.alpha) for M in Ms], self.workers)
        self.calls += 1
        return dict(zip(Ms, freqs))

    def __call__(self, eps, update=False):
        spec = self.spectra(eps)
        if self.tracked is None:
            out = []
            for M, i in self.keys:
                if i >= len(spec[M]):
                    raise FitError(f"identification references missing simulated mode (M={M}, index {i})")
                out.append(spec[M][i])
            out = np.array(out)
        else:
            out = np.empty(len(self.keys))
            for M, ks in self.by_M.items():
                idx = [self.keys.index(k) for k in ks]
                prev = self.tracked[idx]
                out[idx] = _track(prev, spec[M])
        if update or self.tracked is None:
            self.tracked = out.copy()
        return out


def _track(previous, candidates):
    """Injectively match previous frequencies to the nearest new ones."""
    pairs = sorted((abs(c - p), i, j) for i, p in enumerate(previous) for j, c in enumerate(candidates))
    out = np.full(len(previous), np.nan)
    used = set()
    for _, i, j in pairs:
        if np.isnan(out[i]) and j not in used:
            out[i] = candidates[j]
            used.add(j)
    return out


def fit_permittivities(geometry: ResonatorGeometry, mesh: Mesh, measured, identification: Identification,
                       initial, material: str = "sapphire", alpha: float = 1.0, max_iter: int = 30,
                       step_tol: float = 1e-5, fd_step: float = 1e-3, workers: int = 1) -> FitResult:
    """Damped Gauss-Newton on sum (f_sim - f_meas)^2 with a forward-difference Jacobian."""
    if not identification.locked:
        raise FitError("identification must be locked before fitting")
    if material not in geometry.materials:
        raise FitError(f"geometry has no material {material!r}")
    if min(initial) <= 1:
        raise FitError("initial permittivities must exceed 1")
    meas = {m.label: m.frequency for m in measured}
    missing = [lbl for lbl in identification.mapping if lbl not in meas]
    if missing:
        raise FitError(f"identified label {missing[0]!r} has no measured frequency")
    if len(identification.mapping) < 2:
        raise FitError("need at least two identified modes to fit two permittivities")

    model = _Model(geometry, mesh, identification, material, alpha, workers)
    target = np.array([meas[lbl] for lbl in model.labels])
    eps = np.array(initial, dtype=float)
    f = model(eps, update=True)
    r = f - target
    chi2 = float(r @ r)
    trace = [(float(eps[0]), float(eps[1]), chi2)]
    mu = 0.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = np.empty((len(r), 2))
        for k in range(2):
            e2 = eps.copy()
            e2[k] += fd_step
            J[:, k] = (model(e2) - f) / fd_step
        JtJ = J.T @ J
        g = J.T @ r
        accepted = False
        for _ in range(12):
            A = JtJ + mu * np.diag(np.diag(JtJ))
            step = -np.linalg.solve(A, g)
            trial = eps + step
            if min(trial) <= 1:
                mu = max(10 * mu, 1e-3)
                continue
            f_new = model(trial)
            r_new = f_new - target
            chi2_new = float(r_new @ r_new)
            if chi2_new <= chi2 or np.all(np.abs(step) < step_tol):
                accepted = True
                break
            mu = max(10 * mu, 1e-3)
        if not accepted:
            break
        eps, f, r, chi2 = trial, f_new, r_new, chi2_new
        model.tracked = f.copy()
        mu = mu / 10 if mu > 1e-9 else 0.0
        trace.append((float(eps[0]), float(eps[1]), chi2))
        if np.all(np.abs(step) < step_tol):
            converged = True
            break
    if not converged:
        raise FitConvergenceError(f"fit did not converge after {it} iterations; last eps = {tuple(eps)}")
    residuals = {lbl: (fi - t) / 1e6 for lbl, fi, t in zip(model.labels, f, target)}
    return FitResult(float(eps[0]), float(eps[1]), residuals, float(r @ r), trace, converged, it)


# ---------------------------------------------------------------- CSV I/O


def _num(s):
    s = (s or "").strip()
    if not s:
        return None
    try:
        return float(s)
    except ValueError:
        return s


def read_measured_csv(text: str) -> list[MeasuredResonance]:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    if rows and rows[0][0].strip().lower() == "label":
        rows = rows[1:]
    if not rows:
        raise FitError("measured CSV has no resonances")
    out, seen = [], set()
    for r in rows:
        label = r[0].strip()
        if label in seen:
            raise FitError(f"duplicate label {label!r}")
        seen.add(label)
        try:
            freq = float(r[1])
        except (IndexError, ValueError):
            raise FitError(f"resonance {label!r}: bad frequency") from None
        extra = [_num(v) for v in r[2:5]] + [None] * (3 - len(r[2:5]))
        turnover = None if extra[1] is None else str(extra[1])
        out.append(MeasuredResonance(label, freq, extra[0], turnover, extra[2]))
    return out


def read_identification_csv(text: str) -> Identification:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    if rows and rows[0][0].strip().lower() == "label":
        rows = rows[1:]
    try:
        mapping = {r[0].strip(): (int(r[1]), int(r[2])) for r in rows}
    except (IndexError, ValueError):
        raise FitError("identification CSV rows must be label,M,mode_index") from None
    return Identification(mapping, locked=True)


def write_identification_csv(ident: Identification) -> str:
    lines = ["label,M,mode_index"] + [f"{lbl},{M},{i}" for lbl, (M, i) in ident.mapping.items()]
    return "\n".join(lines) + "\n"


def filling_sensitivity(f: float, filling: dict, material: str, eps: tuple[float, float]) -> tuple[float, float]:
    """First-order df/d(eps_perp), df/d(eps_para) from filling factors: -(f/2) F / eps."""
    fp = sum(v for (m, d), v in filling.items() if m == material and d in ("radial", "azimuthal"))
    fa = sum(v for (m, d), v in filling.items() if m == material and d == "axial")
    return -0.5 * f * fp / eps[0], -0.5 * f * fa / eps[1]


__all__ = [
    "MeasuredResonance", "Identification", "CatalogEntry", "Suggestion", "FitResult", "FitError",
    "sweep_modes", "suggest_identification", "fit_permittivities", "read_measured_csv",
    "read_identification_csv", "write_identification_csv", "filling_sensitivity", "mesh_with_geometry",
]

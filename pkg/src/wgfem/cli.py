"""Command-line front end: ``wgmodes <subcommand> ...``.

Exit codes: 0 ok, 1 numerical failure, 2 input error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

from .assembly import assemble
from .eigensolve import EigenSolveError, physical_modes
from .geometry import GeometryError, load_geometry
from .mesh import build_mesh
from .postprocess import QUANTITIES as FIELD_QUANTITIES
from .postprocess import dielectric_fraction, export_fields, g9, make_report, report_csv

WORKERS_ENV = "WGMODES_WORKERS"
REPORT_QUANTITIES = ("frequency", "divergence", "volume", "lambda", "q_wall", "q_rad", "filling")
_REPORT_COLUMNS = {
    "frequency": ("f_re_hz", "f_im_hz"),
    "divergence": ("div_rel",),
    "volume": ("V_mode_m3",),
    "lambda": ("Lambda_m",),
    "q_wall": ("Q_wall",),
    "q_rad": ("Q_rad_lower",),
}


class InputError(ValueError):
    pass


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:  # pragma: no cover - running from a source tree
        from . import __version__

        return __version__


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise InputError(f"{WORKERS_ENV} must be >= 1")
    return n


class Run:
    """Collects outputs and timings for the manifest."""

    def __init__(self, args, command):
        self.command = command
        self.out = Path(args.out)
        self.inputs, self.outputs, self.timings, self.settings = [], [], {}, {}
        self._t = time.perf_counter()

    def input(self, path):
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(str(p))
        self.inputs.append(str(p.resolve()))
        return p

    def tick(self, name):
        now = time.perf_counter()
        self.timings[name] = round(now - self._t, 6)
        self._t = now

    def write(self, name, text):
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        p.write_text(text)
        self.outputs.append(str(p))
        return p

    def add_output(self, path):
        self.outputs.append(str(path))

    def finish(self, argv):
        manifest = {
            "command": self.command,
            "argv": list(argv),
            "tool_version": _version(),
            "inputs": self.inputs,
            "settings": self.settings,
            "timings_s": self.timings,
            "outputs": [],
        }
        path = self.out / "manifest.json"
        manifest["outputs"] = self.outputs + [str(path)]
        self.out.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


def _load(run, args):
    geo, settings = load_geometry(run.input(args.geometry))
    over = {}
    if getattr(args, "m", None) is not None:
        over["M"] = args.m
    if getattr(args, "modes", None) is not None:
        over["n_modes"] = args.modes
    if getattr(args, "alpha", None) is not None:
        over["alpha"] = args.alpha
    if getattr(args, "shift", None) is not None:
        over["shift_frequency"] = args.shift
    settings = replace(settings, **over)
    run.settings.update(asdict(settings))
    run.settings["overrides"] = sorted(over)
    mesh = build_mesh(geo)
    run.tick("mesh")
    return geo, settings, mesh


def _solve(run, mesh, settings):
    system = assemble(mesh, settings.M, settings.alpha)
    run.tick("assemble")
    modes = physical_modes(system, settings)
    run.tick("solve")
    if not modes:
        raise EigenSolveError("no physical modes found")
    return modes


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def modes_csv(modes) -> str:
    rows = [
        [s.M, i, g9(s.frequency.real), g9(s.frequency.imag), g9(s.divergence_rel), g9(s.residual)]
        for i, s in enumerate(modes)
    ]
    return _csv(["M", "index", "f_re_hz", "f_im_hz", "div_rel", "residual"], rows)


# ---------------------------------------------------------------- commands


def cmd_solve(args, run):
    _, settings, mesh = _load(run, args)
    modes = sorted(_solve(run, mesh, settings), key=lambda s: s.f)
    run.write("modes.csv", modes_csv(modes))
    for i, s in enumerate(modes):
        print(f"M={s.M} #{i}: f = {g9(s.frequency.real)} Hz  div_rel = {s.divergence_rel:.2e}")


def _select(modes, mesh, selector, shift):
    if selector == "nearest":
        return min(modes, key=lambda s: abs(s.f - shift))
    if selector == "dielectric":
        return max(modes, key=lambda s: dielectric_fraction(s, mesh))
    try:
        k = int(selector)
    except ValueError:
        raise InputError(f"mode selector must be an index, 'nearest' or 'dielectric', got {selector!r}") from None
    ordered = sorted(modes, key=lambda s: s.f)
    if not 0 <= k < len(ordered):
        raise InputError(f"mode index {k} out of range (0..{len(ordered) - 1})")
    return ordered[k]


def _filter_columns(text, quantities):
    if not quantities:
        return text
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    keep = {"M"}
    for q in quantities:
        keep.update(_REPORT_COLUMNS.get(q, ()))
        if q == "filling":
            keep.update(h for h in header if h.startswith("filling:"))
    idx = [i for i, h in enumerate(header) if h in keep]
    return _csv([header[i] for i in idx], [[r[i] for i in idx] for r in rows[1:]])


def cmd_post(args, run):
    bad = [q for q in args.quantity if q not in REPORT_QUANTITIES]
    if bad:
        raise InputError(f"unknown quantity {bad[0]!r}; choose from {', '.join(REPORT_QUANTITIES)}")
    bad = [q for q in args.export if q not in FIELD_QUANTITIES]
    if bad:
        raise InputError(f"unknown export quantity {bad[0]!r}; choose from {', '.join(FIELD_QUANTITIES)}")
    if args.rs is not None and args.sigma is not None:
        raise InputError("give at most one of --rs and --sigma")
    _, settings, mesh = _load(run, args)
    mode = _select(_solve(run, mesh, settings), mesh, args.mode, settings.shift_frequency)
    walls = set(args.wall_label) or None
    radiation = set(args.radiation_label) or None
    report = make_report(mode, mesh, args.rs, args.sigma, wall_labels=walls, radiation_labels=radiation,
                         standing_wave=args.standing_wave)
    run.settings.update(surface_resistance=args.rs, conductivity=args.sigma, mode=args.mode)
    run.tick("post")
    run.write("report.csv", _filter_columns(report_csv([report]), args.quantity))
    for q in args.export:
        p = export_fields(mode, mesh, q, run.out / f"{q}.vtk")
        run.add_output(p)
    print(f"M={mode.M}: f = {g9(mode.frequency.real)} Hz  V = {g9(report.V_mode)} m^3  "
          f"Lambda = {g9(report.Lambda)} m  Q_wall = {g9(report.Q_wall)}")


def _m_range(text):
    try:
        if ":" in text:
            a, b = text.split(":")
            return list(range(int(a), int(b) + 1))
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise InputError(f"bad M range {text!r}; use 'a:b' or a comma list") from None


def cmd_sweep(args, run):
    from .fitting import sweep_modes

    geo, settings, mesh = _load(run, args)
    Ms = _m_range(args.m_range)
    run.settings["M_range"] = Ms
    catalog = sweep_modes(geo, mesh, Ms, settings.n_modes, settings.alpha, args.workers)
    run.tick("sweep")
    keys = sorted({k for c in catalog for k in c.filling})
    rows = [[c.M, c.index, g9(c.frequency)] + [g9(c.filling.get(k, 0.0)) for k in keys] for c in catalog]
    run.write("catalog.csv", _csv(["M", "index", "f_hz"] + [f"filling:{m}:{d}" for m, d in keys], rows))
    print(f"{len(catalog)} modes over M = {Ms[0]}..{Ms[-1]}")


def cmd_fit(args, run):
    from .fitting import fit_permittivities, read_identification_csv, read_measured_csv

    geo, settings, mesh = _load(run, args)
    measured = read_measured_csv(run.input(args.measured).read_text())
    ident = read_identification_csv(run.input(args.identification).read_text())
    run.settings.update(initial=list(args.eps), material=args.material)
    res = fit_permittivities(geo, mesh, measured, ident, tuple(args.eps), args.material, settings.alpha,
                             workers=args.workers)
    run.tick("fit")
    meas = {m.label: m.frequency for m in measured}
    rows = [[lbl, g9(meas[lbl]), g9(meas[lbl] + r * 1e6), g9(r)] for lbl, r in res.residuals_mhz.items()]
    text = f"# eps_perp = {g9(res.eps_perp)}, eps_para = {g9(res.eps_para)}, iterations = {res.iterations}\n"
    run.write("fit.csv", text + _csv(["label", "measured_hz", "simulated_hz", "sim_minus_meas_mhz"], rows))
    print(f"eps_perp = {g9(res.eps_perp)}  eps_para = {g9(res.eps_para)}")
    for lbl, r in res.residuals_mhz.items():
        print(f"  {lbl:>8s}  {r:+.3f} MHz")


def cmd_oracle(args, run):
    from .oracle import cylinder_modes

    run.settings.update(a=args.a, d=args.d, eps=args.eps, M=args.m, n_modes=args.modes)
    modes = cylinder_modes(args.a, args.d, args.eps, args.m, args.modes)
    rows = [[m.label, m.family, m.m, m.n, m.p, g9(m.frequency)] for m in modes]
    run.write("oracle.csv", _csv(["label", "family", "m", "n", "p", "f_hz"], rows))
    for m in modes:
        print(f"{m.label}: {g9(m.frequency)} Hz")


def cmd_mesh_check(args, run):
    _, _, mesh = _load(run, args)
    mesh.check_conformity()
    kinds = sorted({e.kind for e in mesh.elements})
    labels = sorted({b.condition.label or b.condition.kind for b in mesh.boundary_edges})
    lines = [
        f"nodes {mesh.n_nodes}",
        f"elements {mesh.n_elements} ({', '.join(kinds)})",
        f"boundary_edges {len(mesh.boundary_edges)} ({', '.join(labels)})",
        f"area {g9(mesh.area())}",
        "conforming yes",
    ]
    run.write("mesh_check.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wgmodes", description="Axisymmetric resonator mode solver")
    p.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, solver=True):
        sp.add_argument("geometry", help="geometry TOML file")
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--workers", type=int, default=None, help=f"parallel M-sweeps (default ${WORKERS_ENV} or 1)")
        if solver:
            sp.add_argument("--m", type=int, help="azimuthal order M")
            sp.add_argument("--modes", type=int, help="number of physical modes")
            sp.add_argument("--alpha", type=float, help="penalty coefficient")
            sp.add_argument("--shift", type=float, help="shift frequency [Hz]")

    s = sub.add_parser("solve", help="physical modes to modes.csv")
    common(s)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("post", help="mode report and field export")
    common(s)
    s.add_argument("--mode", default="nearest",
                   help="index by frequency, 'nearest' to the shift, or 'dielectric' fraction (default nearest)")
    s.add_argument("--quantity", action="append", default=[], help=f"report column group: {', '.join(REPORT_QUANTITIES)}")
    s.add_argument("--export", action="append", default=[], help="write a VTK file of this field quantity")
    s.add_argument("--rs", type=float, help="wall surface resistance [ohm]")
    s.add_argument("--sigma", type=float, help="wall conductivity [S/m]")
    s.add_argument("--wall-label", action="append", default=[], help="restrict wall loss to this label")
    s.add_argument("--radiation-label", action="append", default=[], help="surface for the Q_rad lower bound")
    s.add_argument("--standing-wave", action="store_true", help="standing-wave mode volume")
    s.set_defaults(func=cmd_post)

    s = sub.add_parser("sweep", help="mode catalog over a range of M")
    common(s)
    s.add_argument("--m-range", default="0:3", help="'a:b' inclusive or comma list")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("fit", help="least-squares permittivity fit")
    common(s)
    s.add_argument("measured", help="measured resonances CSV")
    s.add_argument("identification", help="label,M,mode_index CSV")
    s.add_argument("--eps", type=float, nargs=2, required=True, metavar=("PERP", "PARA"), help="initial permittivities")
    s.add_argument("--material", default="sapphire")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("oracle", help="analytic modes of an empty cylinder")
    s.add_argument("--out", default=".")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--a", type=float, required=True, help="radius [m]")
    s.add_argument("--d", type=float, required=True, help="height [m]")
    s.add_argument("--eps", type=float, default=1.0)
    s.add_argument("--m", type=int, default=0)
    s.add_argument("--modes", type=int, default=4)
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("mesh-check", help="mesh and report conformity")
    common(s, solver=False)
    s.set_defaults(func=cmd_mesh_check)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        if args.workers is None:
            args.workers = _default_workers()
        if args.workers < 1:
            raise InputError("--workers must be >= 1")
        run = Run(args, args.command)
        args.func(args, run)
        run.finish(argv)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except (EigenSolveError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, GeometryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

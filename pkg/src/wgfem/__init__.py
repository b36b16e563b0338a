"""Axisymmetric finite-element eigensolver for dielectric and whispering-gallery resonators.

Typical use::

    from wgfem import load_geometry, build_mesh, assemble, physical_modes

    geo, settings = load_geometry("fixtures/cylinder.toml")
    mesh = build_mesh(geo)
    modes = physical_modes(assemble(mesh, settings.M, settings.alpha), settings)
"""
from .assembly import AssembledSystem, assemble
from .eigensolve import ModeSolution, filter_spurious, physical_modes, solve_modes, solve_radiation
from .geometry import (
    ElectricWall,
    MagneticWall,
    Material,
    RadiationMatch,
    Region,
    ResonatorGeometry,
    SolverSettings,
    load_geometry,
    parse_geometry,
)
from .mesh import Mesh, build_mesh
from .postprocess import filling_factors, make_report, mode_volume, wall_loss

__version__ = "0.1.0"

__all__ = [
    "AssembledSystem", "ElectricWall", "MagneticWall", "Material", "Mesh", "ModeSolution",
    "RadiationMatch", "Region", "ResonatorGeometry", "SolverSettings", "assemble", "build_mesh",
    "filling_factors", "filter_spurious", "load_geometry", "make_report", "mode_volume",
    "parse_geometry", "physical_modes", "solve_modes", "solve_radiation", "wall_loss",
]

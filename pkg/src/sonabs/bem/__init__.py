"""Collocation BEM for a finite impedance patch flush in a rigid baffle."""

from sonabs.bem.mesh import BemMesh, build_mesh
from sonabs.bem.greens import GreenAssembler, rect_self_potential
from sonabs.bem.cache import CacheError, GreenCache
from sonabs.bem.solver import (
    GreenMatrixSet,
    SurfacePressureField,
    field_at_receivers,
    incident_field,
    simulate_transfer_function,
    solve_surface_pressure,
)

__all__ = [
    "BemMesh",
    "build_mesh",
    "GreenAssembler",
    "rect_self_potential",
    "GreenCache",
    "CacheError",
    "GreenMatrixSet",
    "SurfacePressureField",
    "incident_field",
    "solve_surface_pressure",
    "field_at_receivers",
    "simulate_transfer_function",
]

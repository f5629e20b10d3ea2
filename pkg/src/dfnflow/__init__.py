"""Steady Darcy flow on discrete fracture networks with non-matching meshes."""

from .geometry import (BoundaryCondition, Fracture, Network, Trace, build_network, check_separation,
                       intersect_fractures, load_network_json)
from .meshing import AuxBandMesh, SegMesh, TriMesh, build_aux_band, mesh_trace, overlay_segment, triangulate_fracture
from .saddle import SaddleSystem, SingularSystem, Solution, assemble_system, condition_number, discretize, solve

__all__ = [
    "BoundaryCondition", "Fracture", "Network", "Trace", "build_network", "check_separation",
    "intersect_fractures", "load_network_json", "AuxBandMesh", "SegMesh", "TriMesh", "build_aux_band",
    "mesh_trace", "overlay_segment", "triangulate_fracture", "SaddleSystem", "SingularSystem", "Solution",
    "assemble_system", "condition_number", "discretize", "solve",
]

"""Meshes, surface sampling and signed distance fields."""

from .mesh import Mesh, MeshError, load_mesh, load_mesh_with_properties, make_mesh, save_obj, save_ply
from .sampling import SurfacePoint, SurfaceSamples, farthest_point_indices, sample_surface
from .sdf import (PrimitiveShape, SdfError, SdfGrid, build_sdf_grid, is_watertight, mesh_signed_distance,
                  sdf_query)

__all__ = [
    "Mesh", "MeshError", "PrimitiveShape", "SdfError", "SdfGrid", "SurfacePoint", "SurfaceSamples",
    "build_sdf_grid", "farthest_point_indices", "is_watertight", "load_mesh", "load_mesh_with_properties",
    "make_mesh", "mesh_signed_distance", "sample_surface", "save_obj", "save_ply", "sdf_query",
]

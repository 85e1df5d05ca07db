"""Object models: a mesh with its SDF grid, plus an on-disk grid cache."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from .geometry.mesh import Mesh
from .geometry.sdf import DEFAULT_OBJECT_SPACING, SdfGrid, build_sdf_grid

log = logging.getLogger(__name__)

CACHE_ENV = "GRASPSYNTH_SDF_CACHE"


@dataclass(frozen=True, eq=False)
class ObjectModel:
    mesh: Mesh
    sdf: SdfGrid
    name: str = "object"

    def query(self, points):
        return self.sdf.query(points)

    def query_full(self, points):
        return self.sdf.query_full(points)

    def transformed(self, R, t) -> "ObjectModel":
        """Rigidly moved copy; the grid is rebuilt, not resampled."""
        mesh = self.mesh.transformed(R, t)
        return make_object(mesh, self.sdf.h, padding=self._padding(), name=self.name, use_cache=False)

    def _padding(self) -> float:
        lo, _ = self.mesh.bounds
        return float(np.max(lo - self.sdf.origin))


def make_object(mesh: Mesh, h: float = DEFAULT_OBJECT_SPACING, padding: float | None = None,
                name: str = "object", use_cache: bool = True) -> ObjectModel:
    """Build (or fetch from ``$GRASPSYNTH_SDF_CACHE``) the object's SDF grid."""
    padding = 0.02 if padding is None else padding
    cache_dir = os.environ.get(CACHE_ENV) if use_cache else None
    path = None
    if cache_dir:
        key = f"{mesh.content_hash()[:32]}_{h:.6g}_{padding:.6g}.sdfgrid"
        path = os.path.join(cache_dir, key)
        if os.path.exists(path):
            try:
                return ObjectModel(mesh, SdfGrid.load(path), name)
            except ValueError:
                log.warning("ignoring unreadable cached grid %s", path)
    grid = build_sdf_grid(mesh, h, padding)
    if path:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = path + f".{os.getpid()}.tmp"
        grid.save(tmp)
        os.replace(tmp, path)
    return ObjectModel(mesh, grid, name)

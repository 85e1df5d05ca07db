"""Area-weighted random sampling of mesh surfaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh


@dataclass(frozen=True)
class SurfacePoint:
    position: np.ndarray
    normal: np.ndarray
    face: int


@dataclass(frozen=True, eq=False)
class SurfaceSamples:
    """A batch of surface points stored column-wise.

    ``barycentric`` holds the weights of the face's three vertices, so
    per-vertex fields can be interpolated at each sample.
    """

    positions: np.ndarray
    normals: np.ndarray
    faces: np.ndarray
    barycentric: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i) -> SurfacePoint:
        return SurfacePoint(self.positions[i], self.normals[i], int(self.faces[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def sample_surface(mesh: Mesh, n: int, rng_seed: int) -> SurfaceSamples:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    areas = mesh.areas
    # systematic draw over the cumulative area: each face gets within one
    # sample of its expected count; the order is then shuffled
    cdf = np.cumsum(areas / areas.sum())
    u = (rng.random() + np.arange(n)) / n
    face = np.minimum(np.searchsorted(cdf, u, side="right"), len(areas) - 1)
    face = face[rng.permutation(n)]
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    bary = np.column_stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2])
    tri = mesh.vertices[mesh.faces[face]]
    pos = np.einsum("nk,nkj->nj", bary, tri)
    return SurfaceSamples(pos, mesh.face_normals[face].copy(), face, bary)


def farthest_point_indices(points: np.ndarray, k: int, start: int = 0) -> np.ndarray:
    """Greedy farthest-point subsampling; deterministic for a given start index."""
    n = len(points)
    k = min(k, n)
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = start
    d = np.linalg.norm(points - points[start], axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(d))
        chosen[i] = nxt
        d = np.minimum(d, np.linalg.norm(points - points[nxt], axis=1))
    return chosen

"""Surface rasterization into the sparse grid and narrow-band unsigned distances.

Voxelization is conservative (separating-axis test against voxel cubes
inflated by 1e-9): every voxel whose closed cube touches a face is set.
Distances are exact BVH closest-point values, maintained only within a
Chebyshev band of the occupied voxels; everything else reads the FAR
sentinel (+inf).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .bvh import TriangleBVH
from .grid import GridSpec, SparseGrid, dilate_mask
from .mesh import TriangleMesh

FAR = np.inf


@dataclass
class OccupancyGrid:
    """Voxels intersected by the surface, with per-voxel triangle lists.

    Triangle lists are stored as (voxel id, face id) pairs sorted by voxel
    then face; ``triangles_at`` slices them out. Lists are nonempty exactly
    on set voxels.
    """

    mask: SparseGrid
    pair_vids: np.ndarray
    pair_faces: np.ndarray
    n_faces: int
    face_tags: np.ndarray | None = None

    @property
    def spec(self) -> GridSpec:
        return self.mask.spec

    def occupied_ids(self) -> np.ndarray:
        """Sorted packed ids of occupied voxels."""
        return self.mask.nonbackground_ids()

    def triangles_at(self, vid: int) -> np.ndarray:
        lo = np.searchsorted(self.pair_vids, vid, side="left")
        hi = np.searchsorted(self.pair_vids, vid, side="right")
        return self.pair_faces[lo:hi]


@dataclass
class DistanceField:
    """Exact unsigned distance at voxel centers within the band; FAR outside.

    ``nearest_face`` holds the face id realizing the distance (-1 outside
    the band); ``band`` is the Chebyshev radius in voxels around occupancy.
    """

    values: SparseGrid
    nearest_face: SparseGrid
    band: int

    @property
    def spec(self) -> GridSpec:
        return self.values.spec


def band_for(tau_close: float, thicken_delta: float) -> int:
    """Band width (voxels) that covers both hole closing and thickening."""
    if tau_close < 0 or thicken_delta < 0:
        raise ValueError("band parameters must be >= 0")
    return max(3, math.ceil(tau_close) + 2, math.ceil(thicken_delta) + 2)


def voxelize_surface(mesh: TriangleMesh, spec: GridSpec) -> OccupancyGrid:
    """Conservative rasterization of mesh faces into the sparse grid."""
    verts = mesh.vertices
    out_of_domain = np.abs(verts) > 1.0
    if out_of_domain.any():
        idx = int(np.nonzero(out_of_domain.any(axis=1))[0][0])
        raise ValueError(
            f"mesh outside [-1,1]^3 domain: vertex {idx} at {verts[idx].tolist()}"
        )
    tri = np.ascontiguousarray(mesh.triangles, dtype=np.float64)
    counts = np.empty(len(tri), dtype=np.int64)
    _kernels.sat_count(tri, spec.n, spec.h, counts)
    offsets = np.zeros(len(tri) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    pair_vids = np.empty(offsets[-1], dtype=np.int64)
    pair_faces = np.empty(offsets[-1], dtype=np.int32)
    _kernels.sat_fill(tri, spec.n, spec.h, offsets[:-1].copy(), pair_vids, pair_faces)

    order = np.lexsort((pair_faces, pair_vids))
    pair_vids = pair_vids[order]
    pair_faces = pair_faces[order]

    mask = SparseGrid(spec, np.uint8(0))
    if len(pair_vids):
        unique_vids = np.unique(pair_vids)
        mask.set_ids(unique_vids, np.uint8(1))
    return OccupancyGrid(mask=mask, pair_vids=pair_vids, pair_faces=pair_faces,
                         n_faces=mesh.n_faces, face_tags=mesh.face_tags)


def compute_udf(mesh: TriangleMesh, occupancy: OccupancyGrid, band: int,
                bvh: TriangleBVH | None = None) -> DistanceField:
    """Exact distances on every voxel within Chebyshev ``band`` of occupancy."""
    if band < 2:
        raise ValueError(f"band must be >= 2, got {band}")
    spec = occupancy.spec
    banded = dilate_mask(occupancy.mask, band)
    vids = banded.nonbackground_ids()
    if bvh is None:
        bvh = TriangleBVH(mesh)
    centers = spec.voxel_centers(spec.unpack_voxels(vids))
    dist, face, _ = bvh.closest(centers)

    values = SparseGrid(spec, FAR)
    nearest = SparseGrid(spec, np.int32(-1))
    if len(vids):
        values.set_ids(vids, dist)
        nearest.set_ids(vids, face.astype(np.int32))
    return DistanceField(values=values, nearest_face=nearest, band=band)

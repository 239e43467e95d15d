"""Bounding volume hierarchy over mesh faces.

A Morton-ordered BVH with an implicit complete binary tree layout: leaves
hold fixed-size chunks of faces sorted by centroid Morton code, so the tree
is stored in four flat arrays and needs no pointers. Construction is
single-threaded per mesh; queries are read-only and safe to run in parallel.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .mesh import TriangleMesh

LEAF_SIZE = 4


def _part1by2(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64) & np.uint64(0x1FFFFF)
    x = (x | (x << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    x = (x | (x << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    x = (x | (x << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    x = (x | (x << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    x = (x | (x << np.uint64(2))) & np.uint64(0x1249249249249249)
    return x


def _morton_codes(points: np.ndarray) -> np.ndarray:
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    extent = np.maximum(hi - lo, 1e-30)
    q = np.clip(((points - lo) / extent) * ((1 << 21) - 1), 0, (1 << 21) - 1).astype(np.uint64)
    return (
        _part1by2(q[:, 0])
        | (_part1by2(q[:, 1]) << np.uint64(1))
        | (_part1by2(q[:, 2]) << np.uint64(2))
    )


class TriangleBVH:
    """Closest-point and ray queries against a triangle set."""

    def __init__(self, mesh: TriangleMesh):
        tri = np.ascontiguousarray(mesh.triangles, dtype=np.float64)
        n_faces = len(tri)
        if n_faces == 0:
            raise ValueError("cannot build a BVH over zero faces")
        order = np.argsort(_morton_codes(tri.mean(axis=1)), kind="stable")
        self.perm = order.astype(np.int32)  # sorted position -> original face id
        tri = tri[order]
        self.v0 = np.ascontiguousarray(tri[:, 0])
        self.v1 = np.ascontiguousarray(tri[:, 1])
        self.v2 = np.ascontiguousarray(tri[:, 2])
        self.n_faces = n_faces

        n_leaves = (n_faces + LEAF_SIZE - 1) // LEAF_SIZE
        p = 1
        while p < n_leaves:
            p *= 2
        self.leaf_base = p - 1
        n_nodes = 2 * p - 1
        lo = np.full((n_nodes, 3), np.inf)
        hi = np.full((n_nodes, 3), -np.inf)

        tri_lo = tri.min(axis=1)
        tri_hi = tri.max(axis=1)
        pad = p * LEAF_SIZE - n_faces
        if pad:
            tri_lo = np.vstack([tri_lo, np.full((pad, 3), np.inf)])
            tri_hi = np.vstack([tri_hi, np.full((pad, 3), -np.inf)])
        lo[self.leaf_base:] = tri_lo.reshape(p, LEAF_SIZE, 3).min(axis=1)
        hi[self.leaf_base:] = tri_hi.reshape(p, LEAF_SIZE, 3).max(axis=1)
        # bottom-up over complete levels: level d holds nodes [2^d - 1, 2^(d+1) - 1)
        k = int(np.log2(p))
        for depth in range(k - 1, -1, -1):
            first = (1 << depth) - 1
            last = (1 << (depth + 1)) - 1
            idx = np.arange(first, last)
            lo[idx] = np.minimum(lo[2 * idx + 1], lo[2 * idx + 2])
            hi[idx] = np.maximum(hi[2 * idx + 1], hi[2 * idx + 2])
        self.node_lo = np.ascontiguousarray(lo)
        self.node_hi = np.ascontiguousarray(hi)

    # -- queries ------------------------------------------------------------

    def closest(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Exact closest-point query.

        Returns (distance, face id in original mesh indexing, closest point)
        for each query point.
        """
        pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        d = np.empty(len(pts))
        face = np.empty(len(pts), dtype=np.int64)
        cp = np.empty((len(pts), 3))
        _kernels.closest_batch(self.node_lo, self.node_hi, self.leaf_base,
                               LEAF_SIZE, self.n_faces, self.v0, self.v1, self.v2,
                               pts, d, face, cp)
        return d, self.perm[face], cp

    def distance(self, points: np.ndarray) -> np.ndarray:
        return self.closest(points)[0]

    def ray_intersections(self, origin, direction) -> np.ndarray:
        """All t > 0 ray parameters, deduplicated at shared edges/vertices."""
        origin = np.asarray(origin, dtype=np.float64)
        direction = np.asarray(direction, dtype=np.float64)
        t_buf = np.empty(_kernels.MAX_RAY_HITS)
        f_buf = np.empty(_kernels.MAX_RAY_HITS, dtype=np.int64)
        raw, _ = _kernels._ray_hits_one(
            self.node_lo, self.node_hi, self.leaf_base, LEAF_SIZE, self.n_faces,
            self.v0, self.v1, self.v2,
            origin[0], origin[1], origin[2],
            direction[0], direction[1], direction[2], t_buf, f_buf)
        kept = _kernels._dedupe_hits(t_buf, f_buf, raw)
        return t_buf[:kept].copy()

    def crossing_counts(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Deduplicated crossing count per (origin, dir), jittering grazing rays."""
        origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
        if len(dirs) != len(origins):
            raise ValueError("origins and dirs must pair up")
        out = np.empty(len(origins), dtype=np.int64)
        _kernels.parity_batch(self.node_lo, self.node_hi, self.leaf_base,
                              LEAF_SIZE, self.n_faces, self.v0, self.v1, self.v2,
                              origins, dirs, out)
        return out

    def inside_votes(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Number of directions (shared (K,3) set) with odd crossing parity."""
        origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
        out = np.empty(len(origins), dtype=np.int64)
        _kernels.vote_batch(self.node_lo, self.node_hi, self.leaf_base,
                            LEAF_SIZE, self.n_faces, self.v0, self.v1, self.v2,
                            origins, dirs, out)
        return out

    def parity_signs(self, points: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Majority inside/outside sign per point: -1 inside, +1 outside."""
        votes = self.inside_votes(points, dirs)
        return np.where(votes * 2 > len(np.asarray(dirs).reshape(-1, 3)), -1.0, 1.0)

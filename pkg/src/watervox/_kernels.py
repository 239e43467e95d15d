"""Numba kernels: point-triangle distance, BVH traversal, ray casting, SAT voxelization.

All kernels are deterministic: outputs depend only on inputs, never on the
number of threads (each parallel iteration writes disjoint output slots).
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

STACK_DEPTH = 128
MAX_RAY_HITS = 512
GRAZE_EPS = 1e-9
RAY_JITTER = 1e-5  # radians per retry step


@njit(cache=True, fastmath=False)
def _closest_point_tri(ax, ay, az, bx, by, bz, cx, cy, cz, px, py, pz):
    """Closest point on triangle abc to p (Ericson, Real-Time Collision Detection)."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az

    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az

    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        denom = d1 - d3
        v = 0.0 if denom == 0.0 else d1 / denom
        return ax + v * abx, ay + v * aby, az + v * abz

    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        denom = d2 - d6
        w = 0.0 if denom == 0.0 else d2 / denom
        return ax + w * acx, ay + w * acy, az + w * acz

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        denom = (d4 - d3) + (d5 - d6)
        w = 0.0 if denom == 0.0 else (d4 - d3) / denom
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)

    denom = va + vb + vc
    if denom == 0.0:
        return ax, ay, az
    v = vb / denom
    w = vc / denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w


@njit(cache=True)
def _aabb_dist2(lox, loy, loz, hix, hiy, hiz, px, py, pz):
    d2 = 0.0
    if px < lox:
        d2 += (lox - px) ** 2
    elif px > hix:
        d2 += (px - hix) ** 2
    if py < loy:
        d2 += (loy - py) ** 2
    elif py > hiy:
        d2 += (py - hiy) ** 2
    if pz < loz:
        d2 += (loz - pz) ** 2
    elif pz > hiz:
        d2 += (pz - hiz) ** 2
    return d2


@njit(cache=True)
def _closest_one(node_lo, node_hi, leaf_base, leaf_size, n_faces,
                 v0, v1, v2, px, py, pz):
    stack = np.empty(STACK_DEPTH, dtype=np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    best = np.inf
    best_face = -1
    bx = by = bz = 0.0
    while sp > 0:
        sp -= 1
        node = stack[sp]
        d2 = _aabb_dist2(node_lo[node, 0], node_lo[node, 1], node_lo[node, 2],
                         node_hi[node, 0], node_hi[node, 1], node_hi[node, 2],
                         px, py, pz)
        if d2 >= best:
            continue
        if node >= leaf_base:
            start = (node - leaf_base) * leaf_size
            stop = min(start + leaf_size, n_faces)
            for f in range(start, stop):
                qx, qy, qz = _closest_point_tri(
                    v0[f, 0], v0[f, 1], v0[f, 2],
                    v1[f, 0], v1[f, 1], v1[f, 2],
                    v2[f, 0], v2[f, 1], v2[f, 2],
                    px, py, pz)
                dd = (qx - px) ** 2 + (qy - py) ** 2 + (qz - pz) ** 2
                if dd < best:
                    best = dd
                    best_face = f
                    bx, by, bz = qx, qy, qz
        else:
            left = 2 * node + 1
            right = left + 1
            dl = _aabb_dist2(node_lo[left, 0], node_lo[left, 1], node_lo[left, 2],
                             node_hi[left, 0], node_hi[left, 1], node_hi[left, 2],
                             px, py, pz)
            dr = _aabb_dist2(node_lo[right, 0], node_lo[right, 1], node_lo[right, 2],
                             node_hi[right, 0], node_hi[right, 1], node_hi[right, 2],
                             px, py, pz)
            # push farther child first so the nearer one is explored first
            if dl <= dr:
                if dr < best:
                    stack[sp] = right
                    sp += 1
                if dl < best:
                    stack[sp] = left
                    sp += 1
            else:
                if dl < best:
                    stack[sp] = left
                    sp += 1
                if dr < best:
                    stack[sp] = right
                    sp += 1
    return best, best_face, bx, by, bz


@njit(cache=True, parallel=True)
def closest_batch(node_lo, node_hi, leaf_base, leaf_size, n_faces,
                  v0, v1, v2, queries, out_d, out_face, out_pt):
    for k in prange(queries.shape[0]):
        d2, face, bx, by, bz = _closest_one(
            node_lo, node_hi, leaf_base, leaf_size, n_faces, v0, v1, v2,
            queries[k, 0], queries[k, 1], queries[k, 2])
        out_d[k] = np.sqrt(d2)
        out_face[k] = face
        out_pt[k, 0] = bx
        out_pt[k, 1] = by
        out_pt[k, 2] = bz


@njit(cache=True)
def _ray_aabb(lox, loy, loz, hix, hiy, hiz, ox, oy, oz, dx, dy, dz):
    """Does the ray o + t*d, t>0 intersect the box?"""
    tmin = 0.0
    tmax = np.inf
    for axis in range(3):
        if axis == 0:
            o, d, lo, hi = ox, dx, lox, hix
        elif axis == 1:
            o, d, lo, hi = oy, dy, loy, hiy
        else:
            o, d, lo, hi = oz, dz, loz, hiz
        if d == 0.0:
            if o < lo or o > hi:
                return False
        else:
            inv = 1.0 / d
            t1 = (lo - o) * inv
            t2 = (hi - o) * inv
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
            if tmin > tmax:
                return False
    return True


@njit(cache=True)
def _ray_hits_one(node_lo, node_hi, leaf_base, leaf_size, n_faces,
                  v0, v1, v2, ox, oy, oz, dx, dy, dz, t_buf, f_buf):
    """All t>0 intersections (Moller-Trumbore). Returns (count, grazing flag).

    Hits are then deduplicated by the caller; ``grazing`` is set when any hit
    passes within GRAZE_EPS of a triangle edge or the triangle is seen
    edge-on, meaning the parity of the count is unreliable.
    """
    stack = np.empty(STACK_DEPTH, dtype=np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    count = 0
    grazing = False
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if not _ray_aabb(node_lo[node, 0], node_lo[node, 1], node_lo[node, 2],
                         node_hi[node, 0], node_hi[node, 1], node_hi[node, 2],
                         ox, oy, oz, dx, dy, dz):
            continue
        if node >= leaf_base:
            start = (node - leaf_base) * leaf_size
            stop = min(start + leaf_size, n_faces)
            for f in range(start, stop):
                e1x = v1[f, 0] - v0[f, 0]
                e1y = v1[f, 1] - v0[f, 1]
                e1z = v1[f, 2] - v0[f, 2]
                e2x = v2[f, 0] - v0[f, 0]
                e2y = v2[f, 1] - v0[f, 1]
                e2z = v2[f, 2] - v0[f, 2]
                hx = dy * e2z - dz * e2y
                hy = dz * e2x - dx * e2z
                hz = dx * e2y - dy * e2x
                det = e1x * hx + e1y * hy + e1z * hz
                scale = abs(e1x) + abs(e1y) + abs(e1z) + abs(e2x) + abs(e2y) + abs(e2z)
                if abs(det) < 1e-14 * scale * scale:
                    # edge-on triangle: cannot decide crossing reliably
                    sx = ox - v0[f, 0]
                    sy = oy - v0[f, 1]
                    sz = oz - v0[f, 2]
                    # only grazing if the ray actually passes near the triangle plane
                    nx = e1y * e2z - e1z * e2y
                    ny = e1z * e2x - e1x * e2z
                    nz = e1x * e2y - e1y * e2x
                    nn = np.sqrt(nx * nx + ny * ny + nz * nz)
                    if nn > 0.0 and abs(sx * nx + sy * ny + sz * nz) / nn < 1e-7:
                        grazing = True
                    continue
                inv = 1.0 / det
                sx = ox - v0[f, 0]
                sy = oy - v0[f, 1]
                sz = oz - v0[f, 2]
                u = (sx * hx + sy * hy + sz * hz) * inv
                qx = sy * e1z - sz * e1y
                qy = sz * e1x - sx * e1z
                qz = sx * e1y - sy * e1x
                v = (dx * qx + dy * qy + dz * qz) * inv
                w = 1.0 - u - v
                if u >= -GRAZE_EPS and v >= -GRAZE_EPS and w >= -GRAZE_EPS:
                    t = (e2x * qx + e2y * qy + e2z * qz) * inv
                    if t > 0.0:
                        near_edge = (u < GRAZE_EPS) or (v < GRAZE_EPS) or (w < GRAZE_EPS)
                        if near_edge:
                            grazing = True
                        if u >= 0.0 and v >= 0.0 and w >= 0.0:
                            if count < t_buf.shape[0]:
                                t_buf[count] = t
                                f_buf[count] = f
                            count += 1
        else:
            stack[sp] = 2 * node + 1
            sp += 1
            stack[sp] = 2 * node + 2
            sp += 1
    return count, grazing


@njit(cache=True)
def _dedupe_hits(t_buf, f_buf, count):
    """Sort hits by t and merge hits closer than GRAZE_EPS (shared edges)."""
    n = min(count, t_buf.shape[0])
    # insertion sort (n is small)
    for i in range(1, n):
        tv = t_buf[i]
        fv = f_buf[i]
        j = i - 1
        while j >= 0 and t_buf[j] > tv:
            t_buf[j + 1] = t_buf[j]
            f_buf[j + 1] = f_buf[j]
            j -= 1
        t_buf[j + 1] = tv
        f_buf[j + 1] = fv
    out = 0
    for i in range(n):
        if out > 0 and t_buf[i] - t_buf[out - 1] <= GRAZE_EPS * (1.0 + abs(t_buf[i])):
            continue
        t_buf[out] = t_buf[i]
        f_buf[out] = f_buf[i]
        out += 1
    return out


@njit(cache=True)
def _perp_axis(dx, dy, dz):
    """A unit vector perpendicular to d, built from the least-aligned axis."""
    ax, ay, az = abs(dx), abs(dy), abs(dz)
    if ax <= ay and ax <= az:
        ex, ey, ez = 1.0, 0.0, 0.0
    elif ay <= az:
        ex, ey, ez = 0.0, 1.0, 0.0
    else:
        ex, ey, ez = 0.0, 0.0, 1.0
    px = dy * ez - dz * ey
    py = dz * ex - dx * ez
    pz = dx * ey - dy * ex
    norm = np.sqrt(px * px + py * py + pz * pz)
    return px / norm, py / norm, pz / norm


@njit(cache=True)
def _parity_one(node_lo, node_hi, leaf_base, leaf_size, n_faces, v0, v1, v2,
                ox, oy, oz, dx, dy, dz, t_buf, f_buf):
    """Deduplicated crossing count, retrying with a jittered direction on grazing."""
    cx, cy, cz = dx, dy, dz
    count = 0
    for attempt in range(4):
        raw, grazing = _ray_hits_one(node_lo, node_hi, leaf_base, leaf_size,
                                     n_faces, v0, v1, v2, ox, oy, oz,
                                     cx, cy, cz, t_buf, f_buf)
        count = _dedupe_hits(t_buf, f_buf, raw)
        if not grazing or attempt == 3:
            break
        angle = RAY_JITTER * (attempt + 1)
        px, py, pz = _perp_axis(dx, dy, dz)
        ca = np.cos(angle)
        sa = np.sin(angle)
        # rotate d toward p (p is perpendicular to d)
        norm = np.sqrt(dx * dx + dy * dy + dz * dz)
        cx = dx * ca + px * norm * sa
        cy = dy * ca + py * norm * sa
        cz = dz * ca + pz * norm * sa
    return count


@njit(cache=True, parallel=True)
def parity_batch(node_lo, node_hi, leaf_base, leaf_size, n_faces, v0, v1, v2,
                 origins, dirs, out_count):
    """Per-(origin, dir) deduplicated crossing counts; dirs may be (n,3) or shared."""
    n = origins.shape[0]
    for k in prange(n):
        t_buf = np.empty(MAX_RAY_HITS, dtype=np.float64)
        f_buf = np.empty(MAX_RAY_HITS, dtype=np.int64)
        out_count[k] = _parity_one(
            node_lo, node_hi, leaf_base, leaf_size, n_faces, v0, v1, v2,
            origins[k, 0], origins[k, 1], origins[k, 2],
            dirs[k, 0], dirs[k, 1], dirs[k, 2], t_buf, f_buf)


@njit(cache=True, parallel=True)
def vote_batch(node_lo, node_hi, leaf_base, leaf_size, n_faces, v0, v1, v2,
               origins, dirs, out_votes):
    """Odd-crossing votes per origin over a shared direction set (K,3)."""
    n = origins.shape[0]
    kdirs = dirs.shape[0]
    for k in prange(n):
        t_buf = np.empty(MAX_RAY_HITS, dtype=np.float64)
        f_buf = np.empty(MAX_RAY_HITS, dtype=np.int64)
        votes = 0
        for j in range(kdirs):
            c = _parity_one(
                node_lo, node_hi, leaf_base, leaf_size, n_faces, v0, v1, v2,
                origins[k, 0], origins[k, 1], origins[k, 2],
                dirs[j, 0], dirs[j, 1], dirs[j, 2], t_buf, f_buf)
            if c % 2 == 1:
                votes += 1
        out_votes[k] = votes


# ---------------------------------------------------------------------------
# conservative triangle-box rasterization (separating axis test)

SAT_EPS = 1e-9  # box half extents are inflated by this, biasing toward occupancy


@njit(cache=True)
def _tri_box_overlap(cx, cy, cz, half,
                     v0x, v0y, v0z, v1x, v1y, v1z, v2x, v2y, v2z):
    """Akenine-Moller triangle vs axis-aligned cube test, box inflated by SAT_EPS."""
    h = half + SAT_EPS
    x0, y0, z0 = v0x - cx, v0y - cy, v0z - cz
    x1, y1, z1 = v1x - cx, v1y - cy, v1z - cz
    x2, y2, z2 = v2x - cx, v2y - cy, v2z - cz

    # AABB tests
    if min(x0, min(x1, x2)) > h or max(x0, max(x1, x2)) < -h:
        return False
    if min(y0, min(y1, y2)) > h or max(y0, max(y1, y2)) < -h:
        return False
    if min(z0, min(z1, z2)) > h or max(z0, max(z1, z2)) < -h:
        return False

    e0x, e0y, e0z = x1 - x0, y1 - y0, z1 - z0
    e1x, e1y, e1z = x2 - x1, y2 - y1, z2 - z1
    e2x, e2y, e2z = x0 - x2, y0 - y2, z0 - z2

    # 9 cross-axis tests: a = unit(i) x edge
    # edge e0
    p0 = e0z * y0 - e0y * z0
    p2 = e0z * y2 - e0y * z2
    rad = (abs(e0z) + abs(e0y)) * h
    if min(p0, p2) > rad or max(p0, p2) < -rad:
        return False
    p0 = -e0z * x0 + e0x * z0
    p2 = -e0z * x2 + e0x * z2
    rad = (abs(e0z) + abs(e0x)) * h
    if min(p0, p2) > rad or max(p0, p2) < -rad:
        return False
    p0 = e0y * x1 - e0x * y1
    p2 = e0y * x2 - e0x * y2
    rad = (abs(e0y) + abs(e0x)) * h
    if min(p0, p2) > rad or max(p0, p2) < -rad:
        return False
    # edge e1
    p0 = e1z * y0 - e1y * z0
    p2 = e1z * y2 - e1y * z2
    rad = (abs(e1z) + abs(e1y)) * h
    if min(p0, p2) > rad or max(p0, p2) < -rad:
        return False
    p0 = -e1z * x0 + e1x * z0
    p2 = -e1z * x2 + e1x * z2
    rad = (abs(e1z) + abs(e1x)) * h
    if min(p0, p2) > rad or max(p0, p2) < -rad:
        return False
    p0 = e1y * x0 - e1x * y0
    p1 = e1y * x1 - e1x * y1
    rad = (abs(e1y) + abs(e1x)) * h
    if min(p0, p1) > rad or max(p0, p1) < -rad:
        return False
    # edge e2
    p0 = e2z * y0 - e2y * z0
    p1 = e2z * y1 - e2y * z1
    rad = (abs(e2z) + abs(e2y)) * h
    if min(p0, p1) > rad or max(p0, p1) < -rad:
        return False
    p0 = -e2z * x0 + e2x * z0
    p1 = -e2z * x1 + e2x * z1
    rad = (abs(e2z) + abs(e2x)) * h
    if min(p0, p1) > rad or max(p0, p1) < -rad:
        return False
    p1 = e2y * x1 - e2x * y1
    p2 = e2y * x2 - e2x * y2
    rad = (abs(e2y) + abs(e2x)) * h
    if min(p1, p2) > rad or max(p1, p2) < -rad:
        return False

    # plane test
    nx = e0y * e1z - e0z * e1y
    ny = e0z * e1x - e0x * e1z
    nz = e0x * e1y - e0y * e1x
    d = nx * x0 + ny * y0 + nz * z0
    rad = h * (abs(nx) + abs(ny) + abs(nz))
    if d > rad or d < -rad:
        return False
    return True


@njit(cache=True)
def _face_voxel_range(tri, f, n, h):
    lox = min(tri[f, 0, 0], min(tri[f, 1, 0], tri[f, 2, 0]))
    loy = min(tri[f, 0, 1], min(tri[f, 1, 1], tri[f, 2, 1]))
    loz = min(tri[f, 0, 2], min(tri[f, 1, 2], tri[f, 2, 2]))
    hix = max(tri[f, 0, 0], max(tri[f, 1, 0], tri[f, 2, 0]))
    hiy = max(tri[f, 0, 1], max(tri[f, 1, 1], tri[f, 2, 1]))
    hiz = max(tri[f, 0, 2], max(tri[f, 1, 2], tri[f, 2, 2]))
    i0 = max(0, int(np.floor((lox + 1.0 - SAT_EPS) / h)))
    j0 = max(0, int(np.floor((loy + 1.0 - SAT_EPS) / h)))
    k0 = max(0, int(np.floor((loz + 1.0 - SAT_EPS) / h)))
    i1 = min(n - 1, int(np.floor((hix + 1.0 + SAT_EPS) / h)))
    j1 = min(n - 1, int(np.floor((hiy + 1.0 + SAT_EPS) / h)))
    k1 = min(n - 1, int(np.floor((hiz + 1.0 + SAT_EPS) / h)))
    return i0, j0, k0, i1, j1, k1


@njit(cache=True, parallel=True)
def sat_count(tri, n, h, counts):
    """Pass 1: number of voxels each face overlaps."""
    half = 0.5 * h
    for f in prange(tri.shape[0]):
        i0, j0, k0, i1, j1, k1 = _face_voxel_range(tri, f, n, h)
        c = 0
        for i in range(i0, i1 + 1):
            cx = -1.0 + (i + 0.5) * h
            for j in range(j0, j1 + 1):
                cy = -1.0 + (j + 0.5) * h
                for k in range(k0, k1 + 1):
                    cz = -1.0 + (k + 0.5) * h
                    if _tri_box_overlap(cx, cy, cz, half,
                                        tri[f, 0, 0], tri[f, 0, 1], tri[f, 0, 2],
                                        tri[f, 1, 0], tri[f, 1, 1], tri[f, 1, 2],
                                        tri[f, 2, 0], tri[f, 2, 1], tri[f, 2, 2]):
                        c += 1
        counts[f] = c


@njit(cache=True, parallel=True)
def sat_fill(tri, n, h, offsets, out_vox, out_face):
    """Pass 2: emit (packed voxel id, face id) pairs at precomputed offsets."""
    half = 0.5 * h
    for f in prange(tri.shape[0]):
        idx = offsets[f]
        i0, j0, k0, i1, j1, k1 = _face_voxel_range(tri, f, n, h)
        for i in range(i0, i1 + 1):
            cx = -1.0 + (i + 0.5) * h
            for j in range(j0, j1 + 1):
                cy = -1.0 + (j + 0.5) * h
                for k in range(k0, k1 + 1):
                    cz = -1.0 + (k + 0.5) * h
                    if _tri_box_overlap(cx, cy, cz, half,
                                        tri[f, 0, 0], tri[f, 0, 1], tri[f, 0, 2],
                                        tri[f, 1, 0], tri[f, 1, 1], tri[f, 1, 2],
                                        tri[f, 2, 0], tri[f, 2, 1], tri[f, 2, 2]):
                        out_vox[idx] = (np.int64(i) * n + j) * n + k
                        out_face[idx] = f
                        idx += 1

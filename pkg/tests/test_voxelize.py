import numpy as np
import pytest

import corpus
import oracles
from watervox import (FAR, GridSpec, TriangleBVH, band_for, compute_udf,
                      voxelize_surface)
from watervox.grid import BRICK


def test_band_for_examples():
    assert band_for(0, 0) == 3
    assert band_for(2, 1.5) == 4
    assert band_for(6, 0) == 8
    with pytest.raises(ValueError):
        band_for(-1, 0)


def test_plate_occupancy_matches_dense_oracle(spec64):
    plate = corpus.quad_sheet(0.5, 0.5, z=0.1234)
    occ = voxelize_surface(plate, spec64)
    dense = oracles.dense_voxelize(plate, 64)
    got = oracles.grid_to_dense(occ.mask, 64) != 0
    assert np.array_equal(got, dense)
    # a flat sheet occupies a plate 1-2 voxels thick
    zs = np.nonzero(got.any(axis=(0, 1)))[0]
    assert len(zs) <= 2


def test_sphere_occupancy_matches_dense_oracle(spec64):
    sphere = corpus.icosphere(2, 0.45)
    occ = voxelize_surface(sphere, spec64)
    assert np.array_equal(oracles.grid_to_dense(occ.mask, 64) != 0,
                          oracles.dense_voxelize(sphere, 64))


def test_voxelize_conservative_random_surface_points(spec64):
    mesh = corpus.torus(0.5, 0.2, nu=32, nv=16)
    occ = voxelize_surface(mesh, spec64)
    rng = np.random.Generator(np.random.Philox(key=17))
    areas = mesh.face_areas()
    faces = rng.choice(mesh.n_faces, size=10000, p=areas / areas.sum())
    u, v = rng.random(10000), rng.random(10000)
    su = np.sqrt(u)
    bary = np.stack([1 - su, su * (1 - v), su * v], axis=1)
    pts = np.einsum("nk,nkd->nd", bary, mesh.triangles[faces])
    vox = spec64.voxel_of_points(pts)
    assert np.all(occ.mask.get_voxels(vox) != 0)


def test_triangle_lists_nonempty_exactly_on_set_voxels(spec64):
    mesh = corpus.box(half=(0.4, 0.3, 0.35))
    occ = voxelize_surface(mesh, spec64)
    listed = np.unique(occ.pair_vids)
    assert np.array_equal(listed, occ.occupied_ids())
    vid = listed[len(listed) // 2]
    tris = occ.triangles_at(vid)
    assert len(tris) > 0
    assert np.all(np.diff(tris) >= 0)  # sorted per voxel


def test_voxelize_outside_domain_reports_vertex():
    mesh = corpus.box(half=(1.2, 0.3, 0.3))
    with pytest.raises(ValueError, match="vertex"):
        voxelize_surface(mesh, GridSpec(64))


def test_udf_plane_distance_analytic(spec64):
    # plate at z=0.1234: distance from any banded voxel center is |cz - 0.1234|
    plate = corpus.quad_sheet(0.7, 0.7, z=0.1234)
    occ = voxelize_surface(plate, spec64)
    dist = compute_udf(plate, occ, band=3)
    vids = dist.values.nonbackground_ids()
    coords = spec64.unpack_voxels(vids)
    centers = spec64.voxel_centers(coords)
    inside = (np.abs(centers[:, 0]) <= 0.6) & (np.abs(centers[:, 1]) <= 0.6)
    got = dist.values.get_ids(vids)[inside]
    expect = np.abs(centers[inside, 2] - 0.1234)
    assert np.abs(got - expect).max() < 1e-9


def test_udf_sphere_within_chordal_tolerance(spec64):
    sphere = corpus.icosphere(4, 0.5)
    occ = voxelize_surface(sphere, spec64)
    dist = compute_udf(sphere, occ, band=3)
    vids = dist.values.nonbackground_ids()
    centers = spec64.voxel_centers(spec64.unpack_voxels(vids))
    got = dist.values.get_ids(vids)
    expect = np.abs(np.linalg.norm(centers, axis=1) - 0.5)
    assert np.abs(got - expect).max() < 2e-3


def test_udf_matches_brute_force(spec64):
    mesh = corpus.box(half=(0.35, 0.42, 0.28))
    occ = voxelize_surface(mesh, spec64)
    band = 3
    dist = compute_udf(mesh, occ, band)
    vids = dist.values.nonbackground_ids()
    centers = spec64.voxel_centers(spec64.unpack_voxels(vids))
    ref = oracles.triangle_distances(centers, mesh.triangles)
    assert np.abs(dist.values.get_ids(vids) - ref).max() < 1e-6 * spec64.h


def test_udf_band_contract(spec64):
    mesh = corpus.icosphere(2, 0.4)
    occ = voxelize_surface(mesh, spec64)
    band = 3
    dist = compute_udf(mesh, occ, band)
    occ_dense = oracles.grid_to_dense(occ.mask, 64) != 0
    from scipy import ndimage

    banded = ndimage.binary_dilation(occ_dense, np.ones((2 * band + 1,) * 3))
    udf_dense = oracles.grid_to_dense(dist.values, 64)
    assert np.all(np.isfinite(udf_dense[banded]))
    assert np.all(np.isinf(udf_dense[~banded]))
    h = spec64.h
    finite = udf_dense[banded]
    assert finite.max() <= (band + 1) * h * np.sqrt(3)
    assert finite.min() >= 0
    with pytest.raises(ValueError):
        compute_udf(mesh, occ, band=1)


def test_udf_mirror_symmetry(spec64):
    mesh = corpus.rotated(corpus.box(half=(0.4, 0.3, 0.25)), seed=5)
    occ = voxelize_surface(mesh, spec64)
    dist = compute_udf(mesh, occ, 3)
    mirrored = corpus.mirrored_x(mesh)
    occ_m = voxelize_surface(mirrored, spec64)
    dist_m = compute_udf(mirrored, occ_m, 3)
    dense = oracles.grid_to_dense(dist.values, 64)
    dense_m = oracles.grid_to_dense(dist_m.values, 64)
    assert np.array_equal(dense, dense_m[::-1])


def test_udf_lipschitz_6_neighbors(spec64):
    mesh = corpus.icosphere(2, 0.45)
    occ = voxelize_surface(mesh, spec64)
    dist = compute_udf(mesh, occ, 3)
    dense = oracles.grid_to_dense(dist.values, 64)
    h = spec64.h
    for axis in range(3):
        a = np.moveaxis(dense, axis, 0)[:-1]
        b = np.moveaxis(dense, axis, 0)[1:]
        both = np.isfinite(a) & np.isfinite(b)
        assert np.all(np.abs(a[both] - b[both]) <= h + 1e-12)


def test_udf_error_halves_with_resolution():
    # trilinear interpolation of center values near the surface has O(h)
    # error against the analytic sphere distance (gradient crease)
    sphere = corpus.icosphere(5, 0.5)

    def interp_error(n):
        spec = GridSpec(n)
        occ = voxelize_surface(sphere, spec)
        dist = compute_udf(sphere, occ, 3)
        rng = np.random.Generator(np.random.Philox(key=42))
        u = rng.standard_normal((4000, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        pts = u * (0.5 + rng.uniform(-0.4, 0.4, size=(4000, 1)) * spec.h)
        base = np.floor((pts + 1.0) / spec.h - 0.5).astype(np.int64)
        frac = (pts + 1.0) / spec.h - 0.5 - base
        est = np.zeros(len(pts))
        ok = np.ones(len(pts), dtype=bool)
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    c = base + (dx, dy, dz)
                    vals = dist.values.get_voxels(np.clip(c, 0, n - 1))
                    w = (np.where(dx, frac[:, 0], 1 - frac[:, 0])
                         * np.where(dy, frac[:, 1], 1 - frac[:, 1])
                         * np.where(dz, frac[:, 2], 1 - frac[:, 2]))
                    ok &= np.isfinite(vals)
                    est += np.where(np.isfinite(vals), vals, 0) * w
        true = np.abs(np.linalg.norm(pts, axis=1) - 0.5)
        return np.abs(est[ok] - true[ok]).max()

    ratio = interp_error(64) / interp_error(128)
    assert 1.7 <= ratio <= 2.3, f"ratio {ratio}"

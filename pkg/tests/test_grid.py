import numpy as np
import pytest
from scipy import ndimage

import oracles
from watervox import GridSpec, SparseGrid, dilate_mask, for_each_brick_parallel
from watervox.grid import GridError, reduce_pairwise


def test_create_grid_contract():
    grid = SparseGrid(GridSpec(64), np.uint8(0))
    assert grid.active_brick_count == 0
    assert grid.get_voxels(np.array([[0, 0, 0]]))[0] == 0
    assert grid.active_brick_count == 0  # reads never allocate


@pytest.mark.parametrize("n", [100, 32, 4096, 63])
def test_create_grid_rejects_bad_resolution(n):
    with pytest.raises(GridError):
        GridSpec(n)


def test_create_grid_2048_is_cheap():
    grid = SparseGrid(GridSpec(2048), 0.0)
    assert grid.active_brick_count == 0
    assert grid._data.nbytes < 1_000_000  # no dense allocation


def test_set_voxels_brick_materialization():
    grid = SparseGrid(GridSpec(64), np.uint8(0))
    grid.set_voxels(np.array([[1, 2, 3]]), np.uint8(1))
    assert grid.active_brick_count == 1
    # fill one whole brick: still one brick
    ii, jj, kk = np.meshgrid(*([np.arange(8)] * 3), indexing="ij")
    coords = np.stack([ii, jj, kk], -1).reshape(-1, 3)
    grid2 = SparseGrid(GridSpec(64), np.uint8(0))
    grid2.set_voxels(coords, np.uint8(1))
    assert grid2.active_brick_count == 1
    # opposite domain corners: two bricks
    grid3 = SparseGrid(GridSpec(64), np.uint8(0))
    grid3.set_voxels(np.array([[0, 0, 0], [63, 63, 63]]), np.uint8(1))
    assert grid3.active_brick_count == 2


def test_set_voxels_out_of_range():
    grid = SparseGrid(GridSpec(64), np.uint8(0))
    with pytest.raises(GridError, match="out of range"):
        grid.set_voxels(np.array([[0, 0, 64]]), np.uint8(1))
    with pytest.raises(GridError, match="out of range"):
        grid.get_voxels(np.array([[-1, 0, 0]]))


def test_voxel_center_formula():
    spec = GridSpec(64)
    c = spec.voxel_centers(np.array([[0, 0, 0], [63, 63, 63], [31, 0, 5]]))
    h = spec.h
    assert np.allclose(c[0], [-1 + 0.5 * h] * 3)
    assert np.allclose(c[1], [1 - 0.5 * h] * 3)
    assert np.allclose(c[2], [-1 + 31.5 * h, -1 + 0.5 * h, -1 + 5.5 * h])


def test_sparse_matches_dense_random_ops():
    rng = np.random.Generator(np.random.Philox(key=11))
    spec = GridSpec(64)
    grid = SparseGrid(spec, np.float64(0.0))
    dense = np.zeros((64, 64, 64))
    for _ in range(20):
        coords = rng.integers(0, 64, size=(200, 3))
        vals = rng.random(200)
        grid.set_voxels(coords, vals)
        dense[coords[:, 0], coords[:, 1], coords[:, 2]] = vals
        probe = rng.integers(0, 64, size=(500, 3))
        got = grid.get_voxels(probe)
        assert np.array_equal(got, dense[probe[:, 0], probe[:, 1], probe[:, 2]])
    assert np.array_equal(oracles.grid_to_dense(grid, 64), dense)
    assert grid.count_nonbackground() == np.count_nonzero(dense)


def test_dilate_examples():
    spec = GridSpec(64)
    grid = SparseGrid(spec, np.uint8(0))
    grid.set_voxels(np.array([[32, 32, 32]]), np.uint8(1))
    assert dilate_mask(grid, 1).count_nonbackground() == 27
    d0 = dilate_mask(grid, 0)
    assert np.array_equal(d0.nonbackground_ids(), grid.nonbackground_ids())
    with pytest.raises(GridError):
        dilate_mask(grid, -1)
    with pytest.raises(GridError):
        dilate_mask(grid, 1.5)


def test_dilate_matches_dense_oracle():
    rng = np.random.Generator(np.random.Philox(key=5))
    spec = GridSpec(64)
    coords = rng.integers(0, 64, size=(400, 3))
    grid = SparseGrid(spec, np.uint8(0))
    grid.set_voxels(coords, np.uint8(1))
    dense = np.zeros((64, 64, 64), dtype=bool)
    dense[coords[:, 0], coords[:, 1], coords[:, 2]] = True
    for r in (1, 2, 4, 10):
        ref = ndimage.binary_dilation(dense, structure=np.ones((2 * r + 1,) * 3))
        got = oracles.grid_to_dense(dilate_mask(grid, r), 64) != 0
        assert np.array_equal(got, ref), f"radius {r}"


def test_dilate_composition():
    rng = np.random.Generator(np.random.Philox(key=9))
    spec = GridSpec(64)
    grid = SparseGrid(spec, np.uint8(0))
    grid.set_voxels(rng.integers(10, 54, size=(100, 3)), np.uint8(1))
    for a, b in ((1, 1), (2, 3), (4, 5)):
        lhs = dilate_mask(dilate_mask(grid, a), b).nonbackground_ids()
        rhs = dilate_mask(grid, a + b).nonbackground_ids()
        assert np.array_equal(lhs, rhs)


def _sphere_shell_grid(n):
    spec = GridSpec(n)
    ii = np.arange(n)
    x, y, z = np.meshgrid(ii, ii, ii, indexing="ij")
    coords = np.stack([x, y, z], -1).reshape(-1, 3)
    r = np.linalg.norm(spec.voxel_centers(coords), axis=1)
    shell = np.abs(r - 0.5) < 2.0 / n
    grid = SparseGrid(spec, np.uint8(0))
    grid.set_voxels(coords[shell], np.uint8(1))
    return grid


def test_shell_brick_scaling_is_quadratic():
    b64 = _sphere_shell_grid(64).active_brick_count
    b128 = _sphere_shell_grid(128).active_brick_count
    b256 = _sphere_shell_grid(256).active_brick_count
    assert 3.0 <= b128 / b64 <= 5.0
    assert 3.0 <= b256 / b128 <= 5.0


def test_for_each_brick_parallel_determinism():
    grid = _sphere_shell_grid(64)

    def count_bits(_, data):
        return int(np.count_nonzero(data))

    results = {t: for_each_brick_parallel(grid, count_bits, threads=t)
               for t in (1, 2, 8)}
    assert results[1] == results[2] == results[8]
    assert sum(results[1]) == grid.count_nonbackground()


def test_pairwise_sum_bit_identical_across_threads():
    rng = np.random.Generator(np.random.Philox(key=21))
    spec = GridSpec(64)
    grid = SparseGrid(spec, 0.0)
    coords = rng.integers(0, 64, size=(5000, 3))
    grid.set_voxels(coords, rng.random(5000))

    def brick_sum(_, data):
        # fixed pairwise tree inside the brick too
        flat = list(data.ravel())
        return reduce_pairwise(flat, lambda a, b: a + b)

    sums = {t: reduce_pairwise(for_each_brick_parallel(grid, brick_sum, threads=t),
                               lambda a, b: a + b)
            for t in (1, 2, 8)}
    assert sums[1] == sums[2] == sums[8]  # 0 ULP
    assert sums[1] == pytest.approx(float(oracles.grid_to_dense(grid, 64).sum()))


def test_for_each_brick_empty_grid():
    grid = SparseGrid(GridSpec(64), np.uint8(0))
    calls = for_each_brick_parallel(grid, lambda c, d: 1, threads=4)
    assert calls == []


def test_usvg_dump_roundtrip(tmp_path):
    rng = np.random.Generator(np.random.Philox(key=3))
    spec = GridSpec(64)
    for background, dtype, kind in ((np.uint8(0), np.uint8, "bit"),
                                    (np.uint8(0), np.uint8, "byte"),
                                    (0.0, np.float64, "scalar")):
        grid = SparseGrid(spec, background)
        coords = rng.integers(0, 64, size=(300, 3))
        vals = (rng.integers(1, 2, 300).astype(dtype) if kind == "bit"
                else rng.integers(1, 200, 300).astype(dtype) if kind == "byte"
                else rng.random(300))
        grid.set_voxels(coords, vals)
        path = tmp_path / f"grid_{kind}.usvg"
        grid.dump(path, kind=kind)
        back = SparseGrid.load(path, background=background)
        assert back.spec.n == 64
        assert back.active_brick_count == grid.active_brick_count
        assert np.array_equal(oracles.grid_to_dense(back, 64),
                              oracles.grid_to_dense(grid, 64))
        header = path.read_bytes()[:25]
        assert header[:4] == b"USVG"


def test_grid_spec_packing_roundtrip():
    spec = GridSpec(128)
    rng = np.random.Generator(np.random.Philox(key=1))
    coords = rng.integers(0, 128, size=(1000, 3))
    assert np.array_equal(spec.unpack_voxels(spec.pack_voxels(coords)), coords)
    bricks = rng.integers(0, spec.nb, size=(1000, 3))
    assert np.array_equal(spec.unpack_bricks(spec.pack_bricks(bricks)), bricks)

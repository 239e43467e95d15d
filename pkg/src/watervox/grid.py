"""Brick-hashed sparse voxel grids over the [-1,1]^3 domain.

A grid is a map from brick coordinates to dense 8^3 payload blocks; absent
bricks read as a declared background value and reads never allocate. Memory
is proportional to the number of active bricks, never to N^3.

Concurrency contract: build phases mutate, query phases are read-only and
freely shared. ``for_each_brick_parallel`` visits bricks from a thread pool
but combines results in sorted brick order, so results are independent of
the thread count.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

BRICK = 8  # voxels per brick edge, fixed
_B3 = BRICK ** 3

USVG_MAGIC = b"USVG"
USVG_VERSION = 1
PAYLOAD_KINDS = {"bit": 0, "byte": 1, "scalar": 2}
_KIND_BY_ID = {v: k for k, v in PAYLOAD_KINDS.items()}
_KIND_DTYPE = {"bit": np.uint8, "byte": np.uint8, "scalar": np.float64}


class GridError(ValueError):
    """Invalid grid parameters or out-of-range voxel access."""


@dataclass(frozen=True)
class GridSpec:
    """Cubic voxelization of [-1,1]^3: n voxels per axis, bricked by 8."""

    n: int

    def __post_init__(self):
        n = self.n
        if n < 64 or n > 2048 or (n & (n - 1)) != 0:
            raise GridError(f"resolution must be a power of two in [64, 2048], got {n}")
        if n % BRICK:
            raise GridError(f"resolution {n} not divisible by brick size {BRICK}")

    @property
    def h(self) -> float:
        """Voxel edge length."""
        return 2.0 / self.n

    @property
    def nb(self) -> int:
        """Bricks per axis."""
        return self.n // BRICK

    def voxel_centers(self, coords: np.ndarray) -> np.ndarray:
        """Centers of voxels (i,j,k): -1 + (i + 0.5) * h."""
        return -1.0 + (np.asarray(coords, dtype=np.float64) + 0.5) * self.h

    def corner_positions(self, corners: np.ndarray) -> np.ndarray:
        """Positions of grid corners (i,j,k): -1 + i * h."""
        return -1.0 + np.asarray(corners, dtype=np.float64) * self.h

    def voxel_of_points(self, points: np.ndarray) -> np.ndarray:
        """Voxel indices containing the points, clipped to the grid."""
        idx = np.floor((np.asarray(points) + 1.0) / self.h).astype(np.int64)
        return np.clip(idx, 0, self.n - 1)

    # packing helpers (int64 ids)
    def pack_voxels(self, coords: np.ndarray) -> np.ndarray:
        c = np.asarray(coords, dtype=np.int64)
        return (c[..., 0] * self.n + c[..., 1]) * self.n + c[..., 2]

    def unpack_voxels(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        k = ids % self.n
        rest = ids // self.n
        j = rest % self.n
        i = rest // self.n
        return np.stack([i, j, k], axis=-1)

    def pack_bricks(self, coords: np.ndarray) -> np.ndarray:
        c = np.asarray(coords, dtype=np.int64)
        return (c[..., 0] * self.nb + c[..., 1]) * self.nb + c[..., 2]

    def unpack_bricks(self, keys: np.ndarray) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        k = keys % self.nb
        rest = keys // self.nb
        j = rest % self.nb
        i = rest // self.nb
        return np.stack([i, j, k], axis=-1)

    def split_voxel_ids(self, vids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Packed voxel ids -> (packed brick key, local offset in 0..511)."""
        coords = self.unpack_voxels(vids)
        brick = coords // BRICK
        local = coords - brick * BRICK
        loc = (local[..., 0] * BRICK + local[..., 1]) * BRICK + local[..., 2]
        return self.pack_bricks(brick), loc


class SparseGrid:
    """Sparse voxel container with dense 8^3 bricks and a background value."""

    def __init__(self, spec: GridSpec, background, dtype=None):
        self.spec = spec
        if dtype is None:
            dtype = np.asarray(background).dtype
        self.dtype = np.dtype(dtype)
        self.background = self.dtype.type(background)
        self._keys = np.empty(0, dtype=np.int64)
        self._data = np.empty((0, BRICK, BRICK, BRICK), dtype=self.dtype)
        self._count = 0
        self._sorted: tuple[np.ndarray, np.ndarray] | None = None

    # -- bookkeeping ---------------------------------------------------------

    @property
    def active_brick_count(self) -> int:
        return self._count

    def brick_keys(self) -> np.ndarray:
        """Active brick keys, sorted."""
        return np.sort(self._keys[: self._count])

    def _sorted_index(self) -> tuple[np.ndarray, np.ndarray]:
        if self._sorted is None:
            keys = self._keys[: self._count]
            order = np.argsort(keys, kind="stable")
            self._sorted = (keys[order], order.astype(np.int64))
        return self._sorted

    def rows_for_keys(self, keys: np.ndarray) -> np.ndarray:
        """Data row per brick key, or -1 where the brick is absent."""
        keys = np.asarray(keys, dtype=np.int64)
        skeys, srows = self._sorted_index()
        if not len(skeys):
            return np.full(keys.shape, -1, dtype=np.int64)
        pos = np.searchsorted(skeys, keys)
        pos = np.minimum(pos, len(skeys) - 1)
        rows = srows[pos]
        rows = np.where(skeys[pos] == keys, rows, -1)
        return rows

    def ensure_bricks(self, keys: np.ndarray) -> None:
        """Materialize bricks (filled with background) for the given keys."""
        keys = np.unique(np.asarray(keys, dtype=np.int64))
        missing = keys[self.rows_for_keys(keys) < 0]
        if not len(missing):
            return
        need = self._count + len(missing)
        if need > len(self._keys):
            cap = max(16, 2 * len(self._keys))
            while cap < need:
                cap *= 2
            new_keys = np.empty(cap, dtype=np.int64)
            new_data = np.empty((cap, BRICK, BRICK, BRICK), dtype=self.dtype)
            new_keys[: self._count] = self._keys[: self._count]
            new_data[: self._count] = self._data[: self._count]
            self._keys = new_keys
            self._data = new_data
        self._keys[self._count : need] = missing
        self._data[self._count : need] = self.background
        self._count = need
        self._sorted = None

    def brick_data(self, key: int) -> np.ndarray | None:
        """Payload block for one brick key, or None if absent."""
        row = self.rows_for_keys(np.asarray([key]))[0]
        return None if row < 0 else self._data[row]

    def bricks(self):
        """Iterate (brick coordinate triple, payload block) in sorted key order."""
        skeys, srows = self._sorted_index()
        coords = self.spec.unpack_bricks(skeys)
        for i in range(len(skeys)):
            yield tuple(int(c) for c in coords[i]), self._data[srows[i]]

    def copy(self) -> "SparseGrid":
        out = SparseGrid(self.spec, self.background, self.dtype)
        out._keys = self._keys[: self._count].copy()
        out._data = self._data[: self._count].copy()
        out._count = self._count
        return out

    # -- voxel access ---------------------------------------------------------

    def _check_range(self, coords: np.ndarray) -> None:
        if coords.size and (coords.min() < 0 or coords.max() >= self.spec.n):
            bad = coords[((coords < 0) | (coords >= self.spec.n)).any(axis=-1)][0]
            raise GridError(f"voxel coordinate {tuple(int(c) for c in bad)} out of range [0, {self.spec.n})")

    def get_ids(self, vids: np.ndarray):
        """Bulk read by packed voxel id; absent bricks read as background."""
        vids = np.asarray(vids, dtype=np.int64)
        keys, loc = self.spec.split_voxel_ids(vids)
        rows = self.rows_for_keys(keys)
        out = np.full(vids.shape, self.background, dtype=self.dtype)
        hit = rows >= 0
        if hit.any():
            flat = self._data[: self._count].reshape(self._count, _B3)
            out[hit] = flat[rows[hit], loc[hit]]
        return out

    def set_ids(self, vids: np.ndarray, values) -> None:
        """Bulk write by packed voxel id; bricks materialize on demand."""
        vids = np.asarray(vids, dtype=np.int64)
        keys, loc = self.spec.split_voxel_ids(vids)
        self.ensure_bricks(keys)
        rows = self.rows_for_keys(keys)
        flat = self._data[: self._count].reshape(self._count, _B3)
        flat[rows, loc] = values

    def get_voxels(self, coords: np.ndarray):
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        self._check_range(coords)
        return self.get_ids(self.spec.pack_voxels(coords))

    def set_voxels(self, coords: np.ndarray, values) -> None:
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        self._check_range(coords)
        self.set_ids(self.spec.pack_voxels(coords), values)

    def nonbackground_ids(self) -> np.ndarray:
        """Sorted packed voxel ids whose value differs from the background."""
        if not self._count:
            return np.empty(0, dtype=np.int64)
        skeys, srows = self._sorted_index()
        data = self._data[srows].reshape(-1, _B3)
        if np.isnan(self.background):
            mask = ~np.isnan(data)
        else:
            mask = data != self.background
        brick_of, loc = np.nonzero(mask)
        base = self._brick_base_vids(skeys[brick_of])
        ids = base + self._local_offsets()[loc]
        ids.sort()  # brick vid ranges interleave, so brick order is not global order
        return ids

    def count_nonbackground(self) -> int:
        if not self._count:
            return 0
        data = self._data[: self._count]
        if np.isnan(self.background):
            return int(np.count_nonzero(~np.isnan(data)))
        return int(np.count_nonzero(data != self.background))

    def _brick_base_vids(self, keys: np.ndarray) -> np.ndarray:
        coords = self.spec.unpack_bricks(keys) * BRICK
        return self.spec.pack_voxels(coords)

    def _local_offsets(self) -> np.ndarray:
        # packed-vid offset of each local slot within its brick
        li, lj, lk = np.unravel_index(np.arange(_B3), (BRICK, BRICK, BRICK))
        n = self.spec.n
        return (li.astype(np.int64) * n + lj) * n + lk

    # -- serialization ---------------------------------------------------------

    def dump(self, path, kind: str | None = None) -> None:
        """Binary debug dump: USVG header then per-brick payload blocks."""
        if kind is None:
            kind = "scalar" if self.dtype == np.float64 else "byte"
        if kind not in PAYLOAD_KINDS:
            raise GridError(f"unknown payload kind {kind!r}")
        if _KIND_DTYPE[kind] != self.dtype:
            raise GridError(f"payload kind {kind!r} does not match dtype {self.dtype}")
        skeys, srows = self._sorted_index()
        coords = self.spec.unpack_bricks(skeys).astype("<i4")
        with open(path, "wb") as fh:
            fh.write(USVG_MAGIC)
            fh.write(struct.pack("<IIIBQ", USVG_VERSION, self.spec.n, BRICK,
                                 PAYLOAD_KINDS[kind], self._count))
            payload_dtype = "<u1" if kind in ("bit", "byte") else "<f8"
            for i in range(len(skeys)):
                fh.write(coords[i].tobytes())
                fh.write(self._data[srows[i]].astype(payload_dtype).tobytes())

    @classmethod
    def load(cls, path, background=None) -> "SparseGrid":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != USVG_MAGIC:
                raise GridError(f"{path}: bad magic {magic!r}")
            version, n, brick, kind_id, count = struct.unpack("<IIIBQ", fh.read(21))
            if version != USVG_VERSION:
                raise GridError(f"{path}: unsupported version {version}")
            if brick != BRICK:
                raise GridError(f"{path}: brick size {brick} unsupported")
            kind = _KIND_BY_ID.get(kind_id)
            if kind is None:
                raise GridError(f"{path}: unknown payload kind {kind_id}")
            dtype = _KIND_DTYPE[kind]
            if background is None:
                background = dtype.type(0) if kind != "scalar" else 0.0
            spec = GridSpec(n)
            grid = cls(spec, background, dtype)
            payload_dtype = np.dtype("<u1" if kind in ("bit", "byte") else "<f8")
            rec = 12 + _B3 * payload_dtype.itemsize
            blob = fh.read(rec * count)
            if len(blob) != rec * count:
                raise GridError(f"{path}: truncated dump")
            keys = np.empty(count, dtype=np.int64)
            grid._keys = np.empty(count, dtype=np.int64)
            grid._data = np.empty((count, BRICK, BRICK, BRICK), dtype=dtype)
            for i in range(count):
                off = rec * i
                bc = np.frombuffer(blob, dtype="<i4", count=3, offset=off).astype(np.int64)
                keys[i] = spec.pack_bricks(bc)
                grid._data[i] = np.frombuffer(
                    blob, dtype=payload_dtype, count=_B3, offset=off + 12
                ).reshape(BRICK, BRICK, BRICK).astype(dtype)
            grid._keys = keys
            grid._count = count
            return grid


# ---------------------------------------------------------------------------
# morphology and parallel iteration


def _dilate_axis(grid: SparseGrid, r: int, axis: int) -> SparseGrid:
    """1-D Chebyshev (box) dilation along one axis, r <= BRICK."""
    spec = grid.spec
    skeys, srows = grid._sorted_index()
    if not len(skeys):
        return grid.copy()
    step = (spec.nb * spec.nb, spec.nb, 1)[axis]
    coords = spec.unpack_bricks(skeys)
    cand = [skeys]
    if r > 0:
        ok_lo = coords[:, axis] > 0
        ok_hi = coords[:, axis] < spec.nb - 1
        cand.append(skeys[ok_lo] - step)
        cand.append(skeys[ok_hi] + step)
    cand = np.unique(np.concatenate(cand))
    ccoords = spec.unpack_bricks(cand)

    def gather(keys, valid):
        rows = np.where(valid, grid.rows_for_keys(np.where(valid, keys, 0)), -1)
        out = np.zeros((len(keys), BRICK, BRICK, BRICK), dtype=grid.dtype)
        hit = rows >= 0
        if hit.any():
            out[hit] = grid._data[rows[hit]]
        return out

    center = gather(cand, np.ones(len(cand), dtype=bool))
    left = gather(cand - step, ccoords[:, axis] > 0)
    right = gather(cand + step, ccoords[:, axis] < spec.nb - 1)

    ax = axis + 1  # axis within (M, B, B, B)
    padded = np.concatenate(
        [np.take(left, range(BRICK - r, BRICK), axis=ax), center,
         np.take(right, range(0, r), axis=ax)], axis=ax)
    out = np.zeros_like(center)
    for s in range(2 * r + 1):
        np.maximum(out, np.take(padded, range(s, s + BRICK), axis=ax), out=out)

    keep = out.reshape(len(cand), -1).any(axis=1)
    result = SparseGrid(spec, grid.background, grid.dtype)
    result._keys = cand[keep].copy()
    result._data = out[keep].copy()
    result._count = int(keep.sum())
    return result


def dilate_mask(grid: SparseGrid, r: int) -> SparseGrid:
    """Chebyshev dilation by radius r voxels (exact box structuring element).

    Separable per axis; radii above the brick size are applied in passes,
    which is exact because Chebyshev dilations compose additively.
    """
    if r < 0 or int(r) != r:
        raise GridError(f"dilation radius must be a non-negative integer, got {r}")
    r = int(r)
    if r == 0:
        return grid.copy()
    out = grid
    remaining = r
    while remaining > 0:
        step = min(remaining, BRICK)
        for axis in range(3):
            out = _dilate_axis(out, step, axis)
        remaining -= step
    return out


def for_each_brick_parallel(grid: SparseGrid, visitor, threads: int | None = None) -> list:
    """Apply ``visitor(brick_coord, payload)`` to every active brick.

    Results are returned in sorted brick-key order regardless of thread
    count, so any associative combination of them is deterministic.
    """
    skeys, srows = grid._sorted_index()
    coords = grid.spec.unpack_bricks(skeys)
    items = [(tuple(int(c) for c in coords[i]), grid._data[srows[i]])
             for i in range(len(skeys))]
    if not items:
        return []
    if threads is None or threads <= 1 or len(items) < 2:
        return [visitor(c, d) for c, d in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda cd: visitor(cd[0], cd[1]), items))


def reduce_pairwise(values: list, combine):
    """Deterministic pairwise-tree reduction (same result at any thread count)."""
    if not values:
        raise ValueError("cannot reduce an empty sequence")
    level = list(values)
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            nxt.append(combine(level[i], level[i + 1]))
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]

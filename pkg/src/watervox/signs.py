"""Inside/outside label assignment over the sparse grid.

The main strategy is a marker-based watershed on the negated distance
field: exterior labels flood in from the domain boundary through voxels at
least ``tau`` voxels from the surface (so gaps narrower than ``2*tau``
stay sealed), the unreached far region seeds the interior, and the
remaining moat is assigned by simultaneous expansion from both label sets
in decreasing-distance order. Three baseline strategies (plain flood fill,
offset pseudo-SDF, ray-casting visibility votes) are provided for
comparison.

All strategies are deterministic and independent of thread count: BFS
rounds and watershed buckets label candidates simultaneously, with the
fixed tie-break Exterior > Interior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .bvh import TriangleBVH
from .grid import BRICK, GridSpec, SparseGrid
from .voxelize import FAR, DistanceField, OccupancyGrid, dilate_mask

EXTERIOR = np.uint8(0)  # also the background label
INTERIOR = np.uint8(1)
OCCUPIED = np.uint8(2)
UNKNOWN = np.uint8(3)

_B3 = BRICK ** 3

# distance quantum for watershed buckets, in voxel units
BUCKET_FRACTION = 16


class SignResolveError(ValueError):
    """Invalid parameters or inputs for sign resolution."""


@dataclass(frozen=True)
class WatershedParams:
    """Closing radius and open-surface half-thickness, in voxel units."""

    tau_close: float = 2.0
    delta_thicken: float = 1.5

    def validate(self, band: int) -> None:
        if self.tau_close < 0:
            raise SignResolveError("tau_close must be >= 0")
        if self.tau_close > band - 2:
            raise SignResolveError(
                f"tau_close={self.tau_close} exceeds band capacity {band - 2}")
        if self.delta_thicken > band - 2:
            raise SignResolveError(
                f"delta_thicken={self.delta_thicken} exceeds band capacity {band - 2}")


class SignField:
    """Per-voxel labels with two sparse layers.

    Mixed bricks store one label byte per voxel; uniformly labeled bricks
    (enclosed cavities) are kept as a key list with one shared label, so
    payload memory stays proportional to the surface. Bricks never touched
    read as Exterior.
    """

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.labels = SparseGrid(spec, EXTERIOR)
        self.uniform_keys = np.empty(0, dtype=np.int64)
        self.uniform_labels = np.empty(0, dtype=np.uint8)

    def set_uniform(self, keys: np.ndarray, label) -> None:
        keys = np.asarray(keys, dtype=np.int64)
        labels = np.full(len(keys), label, dtype=np.uint8)
        merged = np.concatenate([self.uniform_keys, keys])
        merged_labels = np.concatenate([self.uniform_labels, labels])
        order = np.argsort(merged, kind="stable")
        self.uniform_keys = merged[order]
        self.uniform_labels = merged_labels[order]

    def get_ids(self, vids: np.ndarray) -> np.ndarray:
        vids = np.asarray(vids, dtype=np.int64)
        out = self.labels.get_ids(vids)
        if len(self.uniform_keys):
            keys, _ = self.spec.split_voxel_ids(vids)
            pos = np.searchsorted(self.uniform_keys, keys)
            pos = np.minimum(pos, len(self.uniform_keys) - 1)
            hit = self.uniform_keys[pos] == keys
            if hit.any():
                # mixed bricks take precedence (layers are kept disjoint)
                hit &= self.labels.rows_for_keys(keys) < 0
                out[hit] = self.uniform_labels[pos[hit]]
        return out

    def get_voxels(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        return self.get_ids(self.spec.pack_voxels(coords))

    def label_counts(self) -> dict[str, int]:
        """Total voxel count per label, the background counted as Exterior."""
        names = {0: "exterior", 1: "interior", 2: "occupied", 3: "unknown"}
        counts = dict.fromkeys(names.values(), 0)
        data = self.labels._data[: self.labels._count]
        if len(data):
            values, freq = np.unique(data, return_counts=True)
            for v, f in zip(values, freq):
                counts[names[int(v)]] += int(f)
        for v in self.uniform_labels:
            counts[names[int(v)]] += _B3
        n3 = self.spec.n ** 3
        counted = self.labels._count * _B3 + len(self.uniform_keys) * _B3
        counts["exterior"] += n3 - counted
        return counts

    def unknown_count(self) -> int:
        return self.label_counts()["unknown"]

    def dense(self) -> np.ndarray:
        """Full label volume, for small-grid tests and debugging."""
        n = self.spec.n
        if n > 256:
            raise SignResolveError("dense() is limited to n <= 256")
        vids = np.arange(n ** 3, dtype=np.int64)
        return self.get_ids(vids).reshape(n, n, n)


# ---------------------------------------------------------------------------
# exterior flood fill


_AXIS_STEPS = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
    dtype=np.int64,
)


def _brick_blocks(grid: SparseGrid, keys: np.ndarray, fill) -> np.ndarray:
    """Dense payload blocks for the given brick keys (background where absent)."""
    rows = grid.rows_for_keys(keys)
    out = np.full((len(keys), BRICK, BRICK, BRICK), fill, dtype=grid.dtype)
    hit = rows >= 0
    if hit.any():
        out[hit] = grid._data[rows[hit]]
    return out


def flood_fill_exterior(dist: DistanceField, occ: OccupancyGrid, tau: float) -> SignField:
    """Label all boundary-reachable voxels Exterior.

    A voxel is traversable iff it is not occupied and its distance is FAR or
    at least ``tau`` voxels; BFS starts from every traversable voxel on the
    domain boundary. Occupied voxels are labeled Occupied, everything else
    unreached becomes Unknown. Raises when the boundary is fully blocked.
    """
    spec = dist.spec
    if tau < 0:
        raise SignResolveError("tau must be >= 0")
    if tau > dist.band - 2:
        raise SignResolveError(f"tau={tau} exceeds band capacity {dist.band - 2}")
    n, nb, h = spec.n, spec.nb, spec.h
    threshold = tau * h

    band_keys = np.unique(np.concatenate([dist.values.brick_keys(),
                                          occ.mask.brick_keys()]))
    dvals = _brick_blocks(dist.values, band_keys, FAR)
    occ_blocks = _brick_blocks(occ.mask, band_keys, np.uint8(0))
    occupied = occ_blocks != 0
    blocked = occupied | (np.isfinite(dvals) & (dvals < threshold))

    has_block = blocked.any(axis=(1, 2, 3)) if len(band_keys) else np.zeros(0, bool)
    bkeys = band_keys[has_block]
    bblocked = blocked[has_block]
    boccupied = occupied[has_block]
    bcoords = spec.unpack_bricks(bkeys)

    # brick-level free space and its 6-connected components
    free = np.ones((nb, nb, nb), dtype=bool)
    free[bcoords[:, 0], bcoords[:, 1], bcoords[:, 2]] = False
    fcomp, ncomp = ndimage.label(free, structure=ndimage.generate_binary_structure(3, 1))
    exterior_comp = np.zeros(ncomp + 1, dtype=bool)
    boundary_comps = np.unique(np.concatenate([
        fcomp[0].ravel(), fcomp[-1].ravel(),
        fcomp[:, 0].ravel(), fcomp[:, -1].ravel(),
        fcomp[:, :, 0].ravel(), fcomp[:, :, -1].ravel()]))
    pending = [int(c) for c in boundary_comps if c > 0]

    # adjacency: free component -> (blocked brick row, direction) entries
    adj_comp, adj_row, adj_dir = [], [], []
    for d, step in enumerate(_AXIS_STEPS):
        nbr = bcoords + step
        ok = ((nbr >= 0) & (nbr < nb)).all(axis=1)
        rows = np.nonzero(ok)[0]
        comps = fcomp[nbr[ok, 0], nbr[ok, 1], nbr[ok, 2]]
        keep = comps > 0
        adj_comp.append(comps[keep])
        adj_row.append(rows[keep])
        adj_dir.append(np.full(int(keep.sum()), d, dtype=np.int64))
    adj_comp = np.concatenate(adj_comp) if adj_comp else np.empty(0, dtype=np.int64)
    adj_row = np.concatenate(adj_row) if adj_row else np.empty(0, dtype=np.int64)
    adj_dir = np.concatenate(adj_dir) if adj_dir else np.empty(0, dtype=np.int64)
    order = np.argsort(adj_comp, kind="stable")
    adj_comp, adj_row, adj_dir = adj_comp[order], adj_row[order], adj_dir[order]

    visited = np.zeros_like(bblocked)

    def slab_local(direction: int):
        """Local-coordinate slice selecting the brick face toward a direction."""
        axis = direction // 2
        layer = BRICK - 1 if direction % 2 == 0 else 0
        sel = [slice(None)] * 3
        sel[axis] = layer
        return axis, layer, tuple(sel)

    def brick_face_voxels(rows: np.ndarray, direction: int) -> np.ndarray:
        """Unblocked, unvisited coords on the given face of the given bricks."""
        axis, layer, sel = slab_local(direction)
        face_open = ~bblocked[rows][(slice(None),) + sel] & ~visited[rows][(slice(None),) + sel]
        bidx, a, b = np.nonzero(face_open)
        rows = rows[bidx]
        local = np.empty((len(rows), 3), dtype=np.int64)
        local[:, axis] = layer
        other = [ax for ax in range(3) if ax != axis]
        local[:, other[0]] = a
        local[:, other[1]] = b
        return bcoords[rows] * BRICK + local

    # seed: traversable voxels on the six domain boundary faces of blocked bricks
    frontier = []
    for axis in range(3):
        for side, layer, direction in ((0, 0, 2 * axis + 1), (nb - 1, BRICK - 1, 2 * axis)):
            rows = np.nonzero(bcoords[:, axis] == side)[0]
            if len(rows):
                frontier.append(brick_face_voxels(rows, direction))
    frontier = np.concatenate(frontier) if frontier else np.empty((0, 3), dtype=np.int64)

    if not pending and not len(frontier):
        raise SignResolveError("no traversable boundary voxel: mesh fills the domain")

    sorted_bkeys = bkeys  # already sorted (brick_keys() sorts)

    def mark_visited(coords: np.ndarray) -> np.ndarray:
        """Mark coords visited; returns the subset that was newly marked."""
        brick = coords // BRICK
        local = coords - brick * BRICK
        rows = np.searchsorted(sorted_bkeys, spec.pack_bricks(brick))
        fresh = ~visited[rows, local[:, 0], local[:, 1], local[:, 2]]
        coords = coords[fresh]
        rows, local = rows[fresh], local[fresh]
        visited[rows, local[:, 0], local[:, 1], local[:, 2]] = True
        return coords

    if len(frontier):
        vids = spec.pack_voxels(frontier)
        frontier = frontier[np.unique(vids, return_index=True)[1]]
        frontier = mark_visited(frontier)

    while pending or len(frontier):
        while pending:
            comp = pending.pop()
            if exterior_comp[comp]:
                continue
            exterior_comp[comp] = True
            lo = np.searchsorted(adj_comp, comp, side="left")
            hi = np.searchsorted(adj_comp, comp, side="right")
            added = []
            for d in range(6):
                rows = adj_row[lo:hi][adj_dir[lo:hi] == d]
                if len(rows):
                    added.append(brick_face_voxels(rows, d))
            if added:
                extra = np.concatenate(added)
                if len(extra):
                    extra = mark_visited(extra)
                    frontier = np.concatenate([frontier, extra]) if len(frontier) else extra
        if not len(frontier):
            continue
        nbr = (frontier[:, None, :] + _AXIS_STEPS[None, :, :]).reshape(-1, 3)
        nbr = nbr[((nbr >= 0) & (nbr < n)).all(axis=1)]
        if not len(nbr):
            frontier = np.empty((0, 3), dtype=np.int64)
            continue
        vids = spec.pack_voxels(nbr)
        nbr = nbr[np.unique(vids, return_index=True)[1]]
        brick = nbr // BRICK
        keys = spec.pack_bricks(brick)
        pos = np.searchsorted(sorted_bkeys, keys)
        pos_c = np.minimum(pos, max(len(sorted_bkeys) - 1, 0))
        in_blocked = len(sorted_bkeys) > 0 and sorted_bkeys[pos_c] == keys
        if np.ndim(in_blocked) == 0:
            in_blocked = np.zeros(len(nbr), dtype=bool)
        # free-brick neighbors: reach their whole component at once
        free_nbr = nbr[~in_blocked]
        if len(free_nbr):
            comps = np.unique(fcomp[free_nbr[:, 0] // BRICK,
                                    free_nbr[:, 1] // BRICK,
                                    free_nbr[:, 2] // BRICK])
            for comp in comps:
                if comp > 0 and not exterior_comp[comp]:
                    pending.append(int(comp))
        # blocked-brick neighbors: per-voxel traversal
        nbr = nbr[in_blocked]
        if len(nbr):
            brick = nbr // BRICK
            local = nbr - brick * BRICK
            rows = pos_c[in_blocked]
            ok = ~bblocked[rows, local[:, 0], local[:, 1], local[:, 2]]
            frontier = mark_visited(nbr[ok])
        else:
            frontier = np.empty((0, 3), dtype=np.int64)

    # assemble the partial sign field
    sign = SignField(spec)
    labels = np.full(bblocked.shape, UNKNOWN, dtype=np.uint8)
    labels[visited] = EXTERIOR
    labels[boccupied] = OCCUPIED
    if len(bkeys):
        sign.labels._keys = bkeys.copy()
        sign.labels._data = labels
        sign.labels._count = len(bkeys)
    cavity = np.nonzero((fcomp > 0) & ~exterior_comp[fcomp])
    if len(cavity[0]):
        cav_keys = spec.pack_bricks(np.stack(cavity, axis=1))
        sign.set_uniform(cav_keys, UNKNOWN)
    return sign


# ---------------------------------------------------------------------------
# watershed completion


def watershed_assign(dist: DistanceField, partial: SignField, tau: float) -> SignField:
    """Complete a partial labeling into a full interior/exterior partition.

    Unknown voxels at least ``tau`` voxels from the surface (or FAR) become
    interior seeds; the remaining moat is assigned by simultaneous rounds in
    decreasing-distance buckets (quantum h/16), any Exterior neighbor taking
    priority over Interior. Mutates and returns ``partial``.
    """
    spec = dist.spec
    h = spec.h
    threshold = tau * h
    sign = partial

    # enclosed cavities become interior wholesale
    sign.uniform_labels = np.where(
        sign.uniform_labels == UNKNOWN, INTERIOR, sign.uniform_labels)

    grid = sign.labels
    count = grid._count
    if count == 0:
        return sign
    keys = grid._keys[:count]
    data = grid._data[:count]
    dvals = _brick_blocks(dist.values, keys, FAR)

    unknown = data == UNKNOWN
    seed = unknown & ~(dvals < threshold)  # FAR compares False, so FAR seeds too
    data[seed] = INTERIOR

    moat = unknown & ~seed
    if not moat.any():
        return sign
    brick_idx, li, lj, lk = np.nonzero(moat)
    base = spec.unpack_bricks(keys[brick_idx]) * BRICK
    coords = base + np.stack([li, lj, lk], axis=1)
    vids = spec.pack_voxels(coords)
    order = np.argsort(vids, kind="stable")
    vids = vids[order]
    coords = coords[order]
    udf = dvals[brick_idx, li, lj, lk][order]
    buckets = np.floor(udf * (BUCKET_FRACTION / h)).astype(np.int64)

    n = spec.n
    neighbor_steps = spec.pack_voxels(_AXIS_STEPS)

    def neighbor_labels(sel_coords: np.ndarray, sel_vids: np.ndarray):
        has_ext = np.zeros(len(sel_vids), dtype=bool)
        has_int = np.zeros(len(sel_vids), dtype=bool)
        for d in range(6):
            nc = sel_coords + _AXIS_STEPS[d]
            ok = ((nc >= 0) & (nc < n)).all(axis=1)
            if not ok.any():
                continue
            lab = sign.get_ids(sel_vids[ok] + neighbor_steps[d])
            has_ext[ok] |= lab == EXTERIOR
            has_int[ok] |= lab == INTERIOR
        return has_ext, has_int

    unlabeled = np.ones(len(vids), dtype=bool)
    while unlabeled.any():
        progressed = False
        remaining_buckets = np.unique(buckets[unlabeled])[::-1]
        for b in remaining_buckets:
            active = np.nonzero(unlabeled & (buckets == b))[0]
            while len(active):
                sel = active[unlabeled[active]]
                if not len(sel):
                    break
                has_ext, has_int = neighbor_labels(coords[sel], vids[sel])
                hit = has_ext | has_int
                if not hit.any():
                    break
                chosen = sel[hit]
                new_labels = np.where(has_ext[hit], EXTERIOR, INTERIOR)
                sign.labels.set_ids(vids[chosen], new_labels)
                unlabeled[chosen] = False
                progressed = True
                # next round: unlabeled same-bucket voxels adjacent to new labels
                nbr_vids = (vids[chosen][:, None] + neighbor_steps[None, :]).ravel()
                cand = np.searchsorted(vids, nbr_vids)
                cand = np.unique(cand[(cand < len(vids))])
                cand = cand[np.isin(vids[cand], nbr_vids)]
                active = cand[unlabeled[cand] & (buckets[cand] == b)]
        if not progressed:
            # pockets sealed away from both label sets: enclosed, so interior
            rest = np.nonzero(unlabeled)[0]
            sign.labels.set_ids(vids[rest], INTERIOR)
            unlabeled[rest] = False
    return sign


# ---------------------------------------------------------------------------
# occupied-component analysis and thickening


@dataclass
class OccupiedComponent:
    """One 26-connected component of occupied voxels."""

    voxel_ids: np.ndarray
    face_ids: np.ndarray
    source_tags: np.ndarray
    is_open: bool


@dataclass
class OpenComponentSet:
    """Occupied-voxel components with open (zero-volume) flags."""

    components: list[OccupiedComponent] = field(default_factory=list)
    face_open: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def n_open(self) -> int:
        return sum(1 for c in self.components if c.is_open)

    def open_components(self) -> list[OccupiedComponent]:
        return [c for c in self.components if c.is_open]


_HALF_NEIGHBORS_26 = np.array(
    [(i, j, k)
     for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)
     if (i, j, k) > (0, 0, 0)],
    dtype=np.int64,
)


def identify_open_components(occ: OccupancyGrid, sign: SignField) -> OpenComponentSet:
    """Partition occupied voxels (26-connectivity) and flag zero-volume components.

    A component is open iff none of its voxels has a 6-adjacent Interior
    voxel after labeling.
    """
    spec = occ.spec
    n = spec.n
    vids = occ.occupied_ids()
    if not len(vids):
        return OpenComponentSet(face_open=np.zeros(occ.n_faces, dtype=bool))
    coords = spec.unpack_voxels(vids)

    rows, cols = [], []
    for step in _HALF_NEIGHBORS_26:
        nc = coords + step
        ok = ((nc >= 0) & (nc < n)).all(axis=1)
        nv = spec.pack_voxels(nc[ok])
        pos = np.searchsorted(vids, nv)
        pos_c = np.minimum(pos, len(vids) - 1)
        hit = vids[pos_c] == nv
        rows.append(np.nonzero(ok)[0][hit])
        cols.append(pos_c[hit])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    adj = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)),
                     shape=(len(vids), len(vids)))
    n_comp, comp = connected_components(adj, directed=False)

    # interior adjacency per voxel, then per component
    near_interior = np.zeros(len(vids), dtype=bool)
    for step in _AXIS_STEPS:
        nc = coords + step
        ok = ((nc >= 0) & (nc < n)).all(axis=1)
        lab = sign.get_ids(spec.pack_voxels(nc[ok]))
        near_interior[ok] |= lab == INTERIOR
    comp_closed = np.zeros(n_comp, dtype=bool)
    np.logical_or.at(comp_closed, comp, near_interior)

    # faces attach to the component of the voxels listing them
    pair_comp = comp[np.searchsorted(vids, occ.pair_vids)]

    face_open = np.zeros(occ.n_faces, dtype=bool)
    components = []
    for c in range(n_comp):
        members = comp == c
        faces = np.unique(occ.pair_faces[pair_comp == c])
        is_open = not comp_closed[c]
        if is_open:
            face_open[faces] = True
        tags = (np.unique(occ.face_tags[faces])
                if occ.face_tags is not None and len(faces)
                else np.empty(0, dtype=np.int32))
        components.append(OccupiedComponent(
            voxel_ids=vids[members], face_ids=faces, source_tags=tags, is_open=is_open))
    return OpenComponentSet(components=components, face_open=face_open)


def thicken_open_components(dist: DistanceField, sign: SignField,
                            open_set: OpenComponentSet, delta: float) -> SignField:
    """Give open sheets volume: relabel near-sheet voxels Interior.

    Every non-occupied voxel closer than ``delta`` voxels to the surface
    whose nearest face belongs to an open component becomes Interior.
    Closed-component neighborhoods are untouched. Mutates and returns
    ``sign``.
    """
    if delta < 0.5:
        raise SignResolveError("delta must be >= 0.5")
    if delta > dist.band - 2:
        raise SignResolveError(f"delta={delta} exceeds band capacity {dist.band - 2}")
    if open_set.n_open == 0 or not open_set.face_open.any():
        return sign
    spec = dist.spec
    threshold = delta * spec.h

    grid = sign.labels
    count = grid._count
    keys = grid._keys[:count]
    data = grid._data[:count]
    dvals = _brick_blocks(dist.values, keys, FAR)
    faces = _brick_blocks(dist.nearest_face, keys, np.int32(-1))
    candidate = (data != OCCUPIED) & (dvals < threshold) & (faces >= 0)
    candidate &= open_set.face_open[np.where(candidate, faces, 0)]
    data[candidate] = INTERIOR
    return sign


# ---------------------------------------------------------------------------
# baselines


def baseline_pseudo_sdf(dist: DistanceField, eps: float) -> SparseGrid:
    """Offset pseudo-SDF: UDF - eps*h on banded voxels, +FAR elsewhere."""
    if not 0 < eps <= dist.band - 1:
        raise SignResolveError(f"eps must be in (0, {dist.band - 1}]")
    spec = dist.spec
    out = SparseGrid(spec, FAR)
    count = dist.values._count
    out._keys = dist.values._keys[:count].copy()
    out._data = dist.values._data[:count] - eps * spec.h
    out._data[~np.isfinite(out._data)] = FAR
    out._count = count
    return out


def ray_directions(k: int) -> np.ndarray:
    """Fixed voting directions: 6 axes, then 20 dodecahedron vertices."""
    if k < 6:
        raise SignResolveError("visibility voting needs k >= 6")
    phi = (1 + np.sqrt(5.0)) / 2
    dirs = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    cube = [(sx, sy, sz) for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)]
    rect = ([(0.0, s * (1 / phi), t * phi) for s in (1, -1) for t in (1, -1)]
            + [(s * (1 / phi), t * phi, 0.0) for s in (1, -1) for t in (1, -1)]
            + [(s * phi, 0.0, t * (1 / phi)) for s in (1, -1) for t in (1, -1)])
    dirs = dirs + cube + rect
    dirs = np.asarray(dirs[: min(k, 26)], dtype=np.float64)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def baseline_visibility_signs(bvh: TriangleBVH, occ: OccupancyGrid, spec: GridSpec,
                              k: int = 26, band: int = 3) -> SignField:
    """Ray-casting votes: a banded voxel is Interior iff a majority of fixed
    rays cross the mesh an odd number of times. Voxels outside the band are
    Exterior."""
    dirs = ray_directions(k)
    k_used = len(dirs)
    banded = dilate_mask(occ.mask, band)
    vids = banded.nonbackground_ids()
    occ_vals = occ.mask.get_ids(vids)
    sign = SignField(spec)
    if not len(vids):
        return sign
    query = vids[occ_vals == 0]
    votes = bvh.inside_votes(spec.voxel_centers(spec.unpack_voxels(query)), dirs)
    labels = np.where(votes * 2 > k_used, INTERIOR, EXTERIOR)
    sign.labels.set_ids(vids, EXTERIOR)  # materialize banded bricks
    sign.labels.set_ids(query, labels.astype(np.uint8))
    sign.labels.set_ids(vids[occ_vals != 0], OCCUPIED)
    return sign


def resolve_signs(method: str, *, dist: DistanceField | None = None,
                  occ: OccupancyGrid | None = None,
                  bvh: TriangleBVH | None = None,
                  spec: GridSpec | None = None,
                  tau: float = 2.0, eps: float = 1.0, rays: int = 26):
    """Strategy dispatcher.

    ``watershed`` and ``floodfill`` return a complete SignField (floodfill
    is watershed with tau=0 and no thickening); ``pseudo-sdf`` returns the
    scalar offset field; ``visibility`` returns ray-vote labels.
    """
    if method in ("watershed", "floodfill"):
        if dist is None or occ is None:
            raise SignResolveError(f"{method} needs dist and occ")
        tau_eff = tau if method == "watershed" else 0.0
        partial = flood_fill_exterior(dist, occ, tau_eff)
        return watershed_assign(dist, partial, tau_eff)
    if method == "pseudo-sdf":
        if dist is None:
            raise SignResolveError("pseudo-sdf needs dist")
        return baseline_pseudo_sdf(dist, eps)
    if method == "visibility":
        if bvh is None or occ is None or spec is None:
            raise SignResolveError("visibility needs bvh, occ and spec")
        band = dist.band if dist is not None else 3
        return baseline_visibility_signs(bvh, occ, spec, k=rays, band=band)
    raise SignResolveError(f"unknown sign-resolution method {method!r}")

"""Training-data products: surface/supervision point sets and the thin-shell metric.

Sampling uses a counter-based Philox generator seeded per call, with all
draws made in one fixed order, so results are bit-identical across runs and
thread counts. Signs come from a 3-ray parity majority, which is exact on
watertight input (every op here requires it).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import __version__ as _tool_version
from .bvh import TriangleBVH
from .extract import _face_components, validate_watertight
from .mesh import TriangleMesh

KINDS = ("surface-uniform", "surface-sharp", "near-surface", "free-space")
USMP_MAGIC = b"USMP"
USMP_VERSION = 1

# fixed, irrationally oriented parity directions (axis-grazing unlikely)
PARITY_DIRS = np.array([
    [0.5424492837361056, 0.7080936935744927, 0.4521966872704105],
    [-0.8170453365538215, 0.1785252128298833, 0.5482164736769473],
    [0.1960351520613576, -0.6842104426999044, 0.7024230357861814],
])
PARITY_DIRS /= np.linalg.norm(PARITY_DIRS, axis=1, keepdims=True)


class CurationError(ValueError):
    """Invalid sampling parameters or non-watertight input."""


@dataclass
class SampleSet:
    """Tagged point records with optional SDF labels and normals."""

    positions: np.ndarray            # (n, 3) float64
    kinds: np.ndarray                # (n,) uint8, index into KINDS
    sdf: np.ndarray | None           # (n,) float64 or None
    normals: np.ndarray | None       # (n, 3) float64 or None
    seed: int
    mesh_hash: str

    def __len__(self) -> int:
        return len(self.positions)

    def kind_counts(self) -> dict[str, int]:
        hist = np.bincount(self.kinds, minlength=len(KINDS))
        return {name: int(hist[i]) for i, name in enumerate(KINDS)}


@dataclass
class CurationMetrics:
    """Geometry-filtering signals computed from a watertight mesh."""

    thin_shell_ratio: float
    component_count: int
    watertight: bool
    interior_probe_count: int
    exterior_probe_count: int

    def to_dict(self) -> dict:
        return {
            "thin_shell_ratio": self.thin_shell_ratio,
            "component_count": self.component_count,
            "watertight": self.watertight,
            "interior_probe_count": self.interior_probe_count,
            "exterior_probe_count": self.exterior_probe_count,
        }


def area_weighted_surface_samples(mesh: TriangleMesh, n: int,
                                  rng: np.random.Generator):
    """n area-weighted surface points with their face ids."""
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0:
        raise CurationError("mesh has no area to sample")
    faces = rng.choice(len(areas), size=n, p=areas / total)
    u, v = rng.random(n), rng.random(n)
    su = np.sqrt(u)
    bary = np.stack([1.0 - su, su * (1.0 - v), su * v], axis=1)
    tri = mesh.triangles[faces]
    return np.einsum("nk,nkd->nd", bary, tri), faces


def _sharp_edges(mesh: TriangleMesh, angle_deg: float):
    """Edges with exactly two faces whose normals differ by more than angle_deg.

    Returns (edge vertex pairs, averaged unit normals, edge lengths).
    """
    f = mesh.faces.astype(np.int64)
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    owner = np.tile(np.arange(len(f)), 3)
    lo = directed.min(axis=1)
    hi = directed.max(axis=1)
    key = lo * mesh.n_vertices + hi
    order = np.argsort(key, kind="stable")
    key_s, owner_s = key[order], owner[order]
    uniq, start, counts = np.unique(key_s, return_index=True, return_counts=True)
    paired = counts == 2
    fa = owner_s[start[paired]]
    fb = owner_s[start[paired] + 1]
    normals = mesh.face_normals()
    cosang = np.clip(np.einsum("ij,ij->i", normals[fa], normals[fb]), -1.0, 1.0)
    sharp = np.degrees(np.arccos(cosang)) > angle_deg
    if not sharp.any():
        empty = np.empty((0, 2), dtype=np.int64)
        return empty, np.empty((0, 3)), np.empty(0)
    ukey = uniq[paired][sharp]
    va = ukey // mesh.n_vertices
    vb = ukey % mesh.n_vertices
    avg = normals[fa[sharp]] + normals[fb[sharp]]
    norms = np.linalg.norm(avg, axis=1, keepdims=True)
    avg = np.divide(avg, norms, out=np.zeros_like(avg), where=norms > 0)
    lengths = np.linalg.norm(mesh.vertices[vb] - mesh.vertices[va], axis=1)
    return np.stack([va, vb], axis=1), avg, lengths


def sample_surface(mesh: TriangleMesh, n_uniform: int, n_sharp: int,
                   sharp_angle_deg: float = 30.0, seed: int = 0) -> SampleSet:
    """Surface point set: area-weighted samples plus extra mass on sharp edges.

    Sharp samples are uniform by length over edges whose dihedral angle
    exceeds the threshold, with angle-averaged normals. If the mesh has no
    sharp edges the sharp budget folds into the uniform pool.
    """
    if n_uniform < 0 or n_sharp < 0:
        raise CurationError("sample counts must be >= 0")
    if not 0 < sharp_angle_deg <= 180:
        raise CurationError("sharp angle must be in (0, 180] degrees")
    rng = np.random.Generator(np.random.Philox(key=seed))
    edges, edge_normals, lengths = _sharp_edges(mesh, sharp_angle_deg)
    if not len(edges):
        n_uniform, n_sharp = n_uniform + n_sharp, 0

    pts_u, faces_u = area_weighted_surface_samples(mesh, n_uniform, rng)
    normals_u = mesh.face_normals()[faces_u]

    if n_sharp:
        which = rng.choice(len(edges), size=n_sharp, p=lengths / lengths.sum())
        t = rng.random(n_sharp)[:, None]
        a = mesh.vertices[edges[which, 0]]
        b = mesh.vertices[edges[which, 1]]
        pts_s = a + t * (b - a)
        normals_s = edge_normals[which]
    else:
        pts_s = np.empty((0, 3))
        normals_s = np.empty((0, 3))

    positions = np.concatenate([pts_u, pts_s])
    normals = np.concatenate([normals_u, normals_s])
    kinds = np.concatenate([
        np.zeros(len(pts_u), dtype=np.uint8),
        np.ones(len(pts_s), dtype=np.uint8)])
    return SampleSet(positions=positions, kinds=kinds, sdf=None, normals=normals,
                     seed=seed, mesh_hash=mesh.content_hash())


def signed_distances(bvh: TriangleBVH, points: np.ndarray,
                     dirs: np.ndarray = PARITY_DIRS) -> np.ndarray:
    """Exact distance magnitude with a 3-ray parity majority sign."""
    d = bvh.distance(points)
    votes = bvh.inside_votes(points, dirs)
    sign = np.where(votes * 2 > len(dirs), -1.0, 1.0)
    return sign * d


def sample_supervision(mesh: TriangleMesh, n_near: int, near_sigmas,
                       n_free: int, seed: int = 0) -> SampleSet:
    """Supervision set: Gaussian near-surface offsets plus free-space points.

    Every record carries an exact SDF (BVH distance, parity-majority sign).
    Raises on non-watertight input, where the sign is undefined.
    """
    near_sigmas = [float(s) for s in np.atleast_1d(near_sigmas)]
    if n_near < 0 or n_free < 0:
        raise CurationError("sample counts must be >= 0")
    if any(s <= 0 for s in near_sigmas):
        raise CurationError("near-surface sigmas must be > 0")
    report = validate_watertight(mesh)
    if not report.is_watertight:
        raise CurationError(
            f"mesh is not watertight ({report.boundary_edges} boundary, "
            f"{report.non_manifold_edges} non-manifold edges)")

    rng = np.random.Generator(np.random.Philox(key=seed))
    base, _ = area_weighted_surface_samples(mesh, n_near, rng)
    sigma = rng.choice(np.asarray(near_sigmas), size=n_near)
    near = base + sigma[:, None] * rng.standard_normal((n_near, 3))
    free = rng.uniform(-1.0, 1.0, size=(n_free, 3))

    positions = np.concatenate([near, free])
    kinds = np.concatenate([
        np.full(n_near, 2, dtype=np.uint8),
        np.full(n_free, 3, dtype=np.uint8)])
    sdf = signed_distances(TriangleBVH(mesh), positions)
    return SampleSet(positions=positions, kinds=kinds, sdf=sdf, normals=None,
                     seed=seed, mesh_hash=mesh.content_hash())


def thin_shell_ratio(mesh: TriangleMesh, n_probe: int = 10000,
                     eps_n: float = 0.01, seed: int = 0) -> CurationMetrics:
    """Interior-to-exterior ratio of surface-normal offset probes.

    Probes at p - eps*n and p + eps*n from area-weighted surface samples;
    hollow shells thinner than the probe depth lose their inward probes to
    the far side, driving the ratio toward zero.
    """
    if eps_n <= 0:
        raise CurationError("probe offset eps_n must be > 0")
    if n_probe < 1000:
        raise CurationError("thin-shell probing needs n_probe >= 1000")
    report = validate_watertight(mesh)
    if not report.is_watertight:
        raise CurationError("thin-shell ratio needs a watertight mesh")

    rng = np.random.Generator(np.random.Philox(key=seed))
    pts, faces = area_weighted_surface_samples(mesh, n_probe, rng)
    normals = mesh.face_normals()[faces]
    bvh = TriangleBVH(mesh)
    inward = signed_distances(bvh, pts - eps_n * normals)
    outward = signed_distances(bvh, pts + eps_n * normals)
    interior = int((inward < 0).sum())
    exterior = int((outward > 0).sum())
    return CurationMetrics(
        thin_shell_ratio=interior / max(1, exterior),
        component_count=len(np.unique(_face_components(mesh))),
        watertight=True,
        interior_probe_count=interior,
        exterior_probe_count=exterior)


# ---------------------------------------------------------------------------
# sample file I/O


def export_samples(samples: SampleSet, path) -> None:
    """Write the USMP binary plus a JSON sidecar at ``path + '.json'``.

    Layout: header {magic, version u32, record count u64, kind histogram
    4xu64, flags u32 (bit0 sdf, bit1 normal)}, float32 records
    x,y,z[,sdf][,nx,ny,nz], then one kind byte per record.
    """
    n = len(samples)
    has_sdf = samples.sdf is not None
    has_normal = samples.normals is not None
    flags = (1 if has_sdf else 0) | (2 if has_normal else 0)
    hist = np.bincount(samples.kinds, minlength=len(KINDS)).astype(np.uint64)

    width = 3 + (1 if has_sdf else 0) + (3 if has_normal else 0)
    rec = np.empty((n, width), dtype="<f4")
    rec[:, :3] = samples.positions
    col = 3
    if has_sdf:
        rec[:, col] = samples.sdf
        col += 1
    if has_normal:
        rec[:, col:col + 3] = samples.normals

    with open(path, "wb") as fh:
        fh.write(USMP_MAGIC)
        fh.write(struct.pack("<IQ4QI", USMP_VERSION, n, *hist.tolist(), flags))
        fh.write(rec.tobytes())
        fh.write(samples.kinds.astype("u1").tobytes())

    sidecar = {
        "seed": samples.seed,
        "counts": samples.kind_counts(),
        "mesh_hash": samples.mesh_hash,
        "tool_version": _tool_version,
    }
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_samples(path) -> SampleSet:
    """Read a USMP file back; positions/sdf come back exactly as stored."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != USMP_MAGIC:
            raise CurationError(f"{path}: bad magic {magic!r}")
        header = fh.read(struct.calcsize("<IQ4QI"))
        version, n, h0, h1, h2, h3, flags = struct.unpack("<IQ4QI", header)
        if version != USMP_VERSION:
            raise CurationError(f"{path}: unsupported version {version}")
        has_sdf = bool(flags & 1)
        has_normal = bool(flags & 2)
        width = 3 + (1 if has_sdf else 0) + (3 if has_normal else 0)
        rec = np.frombuffer(fh.read(4 * width * n), dtype="<f4").reshape(n, width)
        kinds = np.frombuffer(fh.read(n), dtype="u1").copy()
    if np.bincount(kinds, minlength=4).tolist() != [h0, h1, h2, h3]:
        raise CurationError(f"{path}: kind histogram mismatch")
    sidecar_path = str(path) + ".json"
    seed, mesh_hash = 0, ""
    try:
        with open(sidecar_path, "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
        seed = int(sidecar.get("seed", 0))
        mesh_hash = sidecar.get("mesh_hash", "")
    except FileNotFoundError:
        pass
    col = 3
    sdf = None
    if has_sdf:
        sdf = rec[:, col].astype(np.float64)
        col += 1
    normals = rec[:, col:col + 3].astype(np.float64) if has_normal else None
    return SampleSet(positions=rec[:, :3].astype(np.float64), kinds=kinds,
                     sdf=sdf, normals=normals, seed=seed, mesh_hash=mesh_hash)

"""Triangle mesh I/O, normalization and vertex welding.

Input formats: OBJ (ASCII ``v``/``f`` records), PLY (ASCII and binary
little-endian) and STL (ASCII and binary). Output: OBJ and PLY. Texture
coordinates, normals and materials in input files are ignored.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class MeshError(ValueError):
    """Unreadable, malformed or degenerate mesh data."""


# Faces with area below this (in normalized model units) are dropped.
DEGENERATE_AREA = 1e-12


@dataclass(frozen=True)
class NormalizationTransform:
    """Similarity map p' = scale * p + translation into the [-1,1]^3 domain."""

    scale: float
    translation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise MeshError("normalization scale must be positive")
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3)
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.translation

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.translation) / self.scale


class TriangleMesh:
    """Indexed triangle mesh: float64 vertices (V,3) and int32 faces (F,3).

    ``face_tags`` carries the connected-component id each face belonged to
    in the input file (shared-vertex connectivity at load time). Meshes are
    treated as immutable; all operations return new instances, so instances
    are safe to share across threads.
    """

    __slots__ = ("vertices", "faces", "face_tags")

    def __init__(self, vertices, faces, face_tags=None):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.ascontiguousarray(faces, dtype=np.int32).reshape(-1, 3)
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise MeshError("face index out of range")
        if vertices.size and not np.isfinite(vertices).all():
            raise MeshError("non-finite vertex coordinate")
        self.vertices = vertices
        self.faces = faces
        if face_tags is not None:
            face_tags = np.ascontiguousarray(face_tags, dtype=np.int32).reshape(-1)
            if face_tags.shape[0] != faces.shape[0]:
                raise MeshError("face_tags length mismatch")
        self.face_tags = face_tags

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def triangles(self) -> np.ndarray:
        """Per-face vertex positions, shape (F, 3, 3)."""
        return self.vertices[self.faces]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if not len(self.vertices):
            raise MeshError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def face_normals(self) -> np.ndarray:
        """Unit face normals; zero-area faces get a zero normal."""
        t = self.triangles
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        lens = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, lens, out=np.zeros_like(n), where=lens > 0)

    def face_areas(self) -> np.ndarray:
        t = self.triangles
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def content_hash(self) -> str:
        """SHA-256 over vertex and face buffers."""
        digest = hashlib.sha256()
        digest.update(self.vertices.tobytes())
        digest.update(self.faces.tobytes())
        return digest.hexdigest()


def _face_component_tags(n_vertices: int, faces: np.ndarray) -> np.ndarray:
    """Connected-component id per face, by shared vertex indices."""
    if not len(faces):
        return np.zeros(0, dtype=np.int32)
    rows = np.concatenate([faces[:, 0], faces[:, 1], faces[:, 2]])
    cols = np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0]])
    adj = coo_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n_vertices, n_vertices)
    )
    _, vertex_comp = connected_components(adj, directed=False)
    return vertex_comp[faces[:, 0]].astype(np.int32)


def _clean_faces(vertices, faces, tags=None):
    """Drop faces with repeated indices or near-zero area."""
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if not len(faces):
        return faces.astype(np.int32), tags
    distinct = (
        (faces[:, 0] != faces[:, 1])
        & (faces[:, 1] != faces[:, 2])
        & (faces[:, 0] != faces[:, 2])
    )
    tri = vertices[faces]
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    keep = distinct & (areas >= DEGENERATE_AREA)
    faces = faces[keep].astype(np.int32)
    if tags is not None:
        tags = np.asarray(tags)[keep]
    return faces, tags


def _fan_triangulate(polys: list[list[int]]) -> np.ndarray:
    tris = []
    for poly in polys:
        for k in range(1, len(poly) - 1):
            tris.append((poly[0], poly[k], poly[k + 1]))
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


# ---------------------------------------------------------------------------
# loaders


def _load_obj(path: Path):
    verts, polys = [], []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshError(f"{path}:{lineno}: vertex record needs 3 coordinates")
                try:
                    verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError as exc:
                    raise MeshError(f"{path}:{lineno}: bad vertex coordinate: {exc}") from None
            elif parts[0] == "f":
                if len(parts) < 4:
                    raise MeshError(f"{path}:{lineno}: face record needs >= 3 indices")
                poly = []
                for token in parts[1:]:
                    try:
                        idx = int(token.split("/")[0])
                    except ValueError:
                        raise MeshError(f"{path}:{lineno}: bad face index {token!r}") from None
                    if idx < 0:
                        idx = len(verts) + idx
                    else:
                        idx -= 1
                    if idx < 0 or idx >= len(verts):
                        raise MeshError(f"{path}:{lineno}: face index out of range")
                    poly.append(idx)
                polys.append(poly)
    return np.asarray(verts, dtype=np.float64).reshape(-1, 3), _fan_triangulate(polys)


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _load_ply(path: Path):
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"ply"):
        raise MeshError(f"{path}: not a PLY file")
    end = data.find(b"end_header\n")
    if end < 0:
        raise MeshError(f"{path}: missing end_header")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n"):]

    fmt = None
    elements = []  # (name, count, [(prop_name, dtype)|('list', count_dt, item_dt, name)])
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MeshError(f"{path}: property before element")
            if parts[1] == "list":
                elements[-1][2].append(("list", _PLY_TYPES[parts[2]], _PLY_TYPES[parts[3]], parts[4]))
            else:
                elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshError(f"{path}: unsupported PLY format {fmt!r}")

    verts = None
    polys: list[list[int]] = []
    if fmt == "ascii":
        tokens = body.decode("ascii", errors="replace").split("\n")
        row = 0
        for name, count, props in elements:
            if name == "vertex":
                cols = [p[0] for p in props]
                for axis in ("x", "y", "z"):
                    if axis not in cols:
                        raise MeshError(f"{path}: vertex element lacks {axis}")
                ix, iy, iz = cols.index("x"), cols.index("y"), cols.index("z")
                verts = np.empty((count, 3), dtype=np.float64)
                for i in range(count):
                    parts = tokens[row].split()
                    row += 1
                    verts[i] = (float(parts[ix]), float(parts[iy]), float(parts[iz]))
            elif name == "face":
                if not props or props[0][0] != "list":
                    raise MeshError(f"{path}: face element must start with a list property")
                for _ in range(count):
                    parts = tokens[row].split()
                    row += 1
                    n = int(parts[0])
                    polys.append([int(t) for t in parts[1:1 + n]])
            else:
                row += count
    else:
        offset = 0
        for name, count, props in elements:
            if name == "vertex":
                if any(p[0] == "list" for p in props):
                    raise MeshError(f"{path}: list property in vertex element unsupported")
                rec = np.dtype([(p[0], "<" + p[1]) for p in props])
                arr = np.frombuffer(body, dtype=rec, count=count, offset=offset)
                offset += rec.itemsize * count
                verts = np.stack(
                    [arr["x"], arr["y"], arr["z"]], axis=1
                ).astype(np.float64)
            elif name == "face":
                if not props or props[0][0] != "list":
                    raise MeshError(f"{path}: face element must start with a list property")
                _, cnt_t, item_t, _ = props[0]
                cnt_dt = np.dtype("<" + cnt_t)
                item_dt = np.dtype("<" + item_t)
                trailing = sum(np.dtype("<" + p[1]).itemsize for p in props[1:] if p[0] != "list")
                for k in range(count):
                    if offset + cnt_dt.itemsize > len(body):
                        raise MeshError(f"{path}: truncated face data at record {k} (offset {offset})")
                    n = int(np.frombuffer(body, dtype=cnt_dt, count=1, offset=offset)[0])
                    offset += cnt_dt.itemsize
                    idx = np.frombuffer(body, dtype=item_dt, count=n, offset=offset)
                    offset += item_dt.itemsize * n + trailing
                    polys.append([int(v) for v in idx])
            else:
                rec = np.dtype([(f"p{i}", "<" + p[1]) for i, p in enumerate(props) if p[0] != "list"])
                if any(p[0] == "list" for p in props):
                    raise MeshError(f"{path}: list property in element {name!r} unsupported")
                offset += rec.itemsize * count
    if verts is None:
        raise MeshError(f"{path}: no vertex element")
    return verts, _fan_triangulate(polys)


def _load_stl(path: Path):
    with open(path, "rb") as fh:
        data = fh.read()
    is_ascii = data[:5].lower() == b"solid"
    if is_ascii:
        # an ASCII STL must contain "facet"; some binary files start with "solid"
        if b"facet" not in data[:1024]:
            is_ascii = False
    if is_ascii:
        coords = []
        for lineno, raw in enumerate(data.decode("ascii", errors="replace").splitlines(), 1):
            parts = raw.split()
            if parts[:1] == ["vertex"]:
                if len(parts) < 4:
                    raise MeshError(f"{path}:{lineno}: vertex record needs 3 coordinates")
                coords.append((float(parts[1]), float(parts[2]), float(parts[3])))
        tri_pts = np.asarray(coords, dtype=np.float64)
        if len(tri_pts) % 3:
            raise MeshError(f"{path}: vertex count not a multiple of 3")
    else:
        if len(data) < 84:
            raise MeshError(f"{path}: truncated binary STL (length {len(data)})")
        (count,) = struct.unpack_from("<I", data, 80)
        rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
        if 84 + rec.itemsize * count > len(data):
            raise MeshError(f"{path}: truncated binary STL ({count} facets declared)")
        arr = np.frombuffer(data, dtype=rec, count=count, offset=84)
        tri_pts = arr["v"].astype(np.float64).reshape(-1, 3)
    # weld exactly equal coordinates so STL soup gets shared vertices
    if len(tri_pts):
        keys = np.ascontiguousarray(tri_pts).view([("", tri_pts.dtype)] * 3).ravel()
        _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        verts = tri_pts[first]
        faces = inverse.reshape(-1, 3)
    else:
        verts = tri_pts.reshape(0, 3)
        faces = np.zeros((0, 3), dtype=np.int64)
    return verts, faces


def load_mesh(path) -> TriangleMesh:
    """Load and clean a triangle mesh.

    Polygons are fan-triangulated, degenerate faces are dropped, and each
    face gets a connected-component tag (shared-vertex connectivity in the
    input indexing). Raises :class:`MeshError` when the file is unreadable,
    malformed, or has no faces left after cleanup.
    """
    path = Path(path)
    if not path.exists():
        raise MeshError(f"{path}: no such file")
    suffix = path.suffix.lower()
    if suffix == ".obj":
        verts, faces = _load_obj(path)
    elif suffix == ".ply":
        verts, faces = _load_ply(path)
    elif suffix == ".stl":
        verts, faces = _load_stl(path)
    else:
        raise MeshError(f"{path}: unsupported extension {suffix!r} (use obj/ply/stl)")
    faces, _ = _clean_faces(verts, faces)
    if not len(faces):
        raise MeshError(f"{path}: zero faces after cleanup")
    tags = _face_component_tags(len(verts), faces)
    return TriangleMesh(verts, faces, face_tags=tags)


def save_mesh(mesh: TriangleMesh, path, transform: NormalizationTransform | None = None) -> None:
    """Write a mesh as OBJ or PLY.

    When ``transform`` is given it is inverted first, so the file is in the
    original (pre-normalization) coordinates.
    """
    path = Path(path)
    verts = mesh.vertices if transform is None else transform.invert(mesh.vertices)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        lines = [f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}" for v in verts]
        lines += [f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}" for f in mesh.faces]
        path.write_text("\n".join(lines) + "\n")
    elif suffix == ".ply":
        header = (
            "ply\nformat binary_little_endian 1.0\n"
            f"element vertex {len(verts)}\n"
            "property double x\nproperty double y\nproperty double z\n"
            f"element face {len(mesh.faces)}\n"
            "property list uchar int vertex_indices\nend_header\n"
        )
        face_rec = np.empty(
            len(mesh.faces), dtype=np.dtype([("n", "u1"), ("idx", "<i4", 3)])
        )
        face_rec["n"] = 3
        face_rec["idx"] = mesh.faces
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(np.ascontiguousarray(verts, dtype="<f8").tobytes())
            fh.write(face_rec.tobytes())
    else:
        raise MeshError(f"{path}: unsupported output extension {suffix!r} (use obj/ply)")


# ---------------------------------------------------------------------------
# cleanup operations


def weld_vertices(mesh: TriangleMesh, eps: float) -> TriangleMesh:
    """Merge vertices snapped to a grid of cell size ``eps``.

    ``eps == 0`` merges only exactly equal coordinates. Faces are reindexed
    and faces degenerate after the merge are dropped.
    """
    if eps < 0:
        raise MeshError("weld eps must be >= 0")
    verts = mesh.vertices
    if eps > 0:
        snapped = np.floor(verts / eps).astype(np.int64)
        keys = np.ascontiguousarray(snapped).view([("", np.int64)] * 3).ravel()
    else:
        keys = np.ascontiguousarray(verts).view([("", np.float64)] * 3).ravel()
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    new_verts = verts[first]
    remapped = inverse[mesh.faces].astype(np.int64)
    distinct = (
        (remapped[:, 0] != remapped[:, 1])
        & (remapped[:, 1] != remapped[:, 2])
        & (remapped[:, 0] != remapped[:, 2])
    )
    faces = remapped[distinct].astype(np.int32)
    tags = mesh.face_tags[distinct] if mesh.face_tags is not None else None
    return TriangleMesh(new_verts, faces, face_tags=tags)


def normalize_to_unit_cube(
    mesh: TriangleMesh, margin: float = 0.03
) -> tuple[TriangleMesh, NormalizationTransform]:
    """Scale and center the mesh so its longest axis spans 2*(1-margin).

    Aspect ratio is preserved. Faces whose area falls below the degenerate
    threshold in normalized units are dropped.
    """
    if not 0 <= margin < 0.2:
        raise MeshError(f"margin must be in [0, 0.2), got {margin}")
    lo, hi = mesh.bounds()
    extent = float((hi - lo).max())
    if extent <= 0:
        raise MeshError("zero-extent mesh cannot be normalized")
    scale = 2.0 * (1.0 - margin) / extent
    center = (lo + hi) / 2.0
    transform = NormalizationTransform(scale=scale, translation=-scale * center)
    verts = transform.apply(mesh.vertices)
    faces, tags = _clean_faces(verts, mesh.faces, mesh.face_tags)
    if not len(faces):
        raise MeshError("zero faces after normalization cleanup")
    return TriangleMesh(verts, faces, face_tags=tags), transform

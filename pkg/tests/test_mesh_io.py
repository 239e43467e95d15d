import numpy as np
import pytest

import corpus
from watervox import (MeshError, TriangleMesh, load_mesh, normalize_to_unit_cube,
                      save_mesh, weld_vertices)


def test_obj_quad_fan_triangulation(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = load_mesh(path)
    assert mesh.n_vertices == 4
    assert mesh.n_faces == 2


def test_obj_negative_indices(tmp_path):
    path = tmp_path / "neg.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
    assert load_mesh(path).n_faces == 1


def test_obj_malformed_reports_line(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv oops 1 0\nf 1 2 3\n")
    with pytest.raises(MeshError, match="bad.obj:3"):
        load_mesh(path)


def test_missing_file_and_bad_extension(tmp_path):
    with pytest.raises(MeshError, match="no such file"):
        load_mesh(tmp_path / "nope.obj")
    path = tmp_path / "m.xyz"
    path.write_text("")
    with pytest.raises(MeshError, match="unsupported extension"):
        load_mesh(path)


def test_stl_cube_welds_to_8_vertices(tmp_path):
    cube = corpus.box(half=(0.5, 0.5, 0.5))
    # write a binary STL by hand (soup of 12 facets)
    import struct

    tri = cube.triangles
    blob = b"\0" * 80 + struct.pack("<I", len(tri))
    for t in tri:
        blob += struct.pack("<3f", 0, 0, 0)
        for v in t:
            blob += struct.pack("<3f", *v)
        blob += struct.pack("<H", 0)
    path = tmp_path / "cube.stl"
    path.write_bytes(blob)
    mesh = load_mesh(path)
    assert mesh.n_faces == 12
    assert mesh.n_vertices == 8  # exact duplicates welded at load
    # weld with eps leaves the count unchanged
    assert weld_vertices(mesh, 1e-6).n_vertices == 8


def test_ascii_stl(tmp_path):
    path = tmp_path / "tri.stl"
    path.write_text(
        "solid t\nfacet normal 0 0 1\nouter loop\n"
        "vertex 0 0 0\nvertex 1 0 0\nvertex 0 1 0\n"
        "endloop\nendfacet\nendsolid t\n")
    mesh = load_mesh(path)
    assert mesh.n_faces == 1


def test_zero_area_faces_error(tmp_path):
    path = tmp_path / "flat.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n")
    with pytest.raises(MeshError, match="zero faces after cleanup"):
        load_mesh(path)


def test_face_tags_connected_components(tmp_path):
    path = tmp_path / "two.obj"
    path.write_text(
        "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
        "v 5 0 0\nv 6 0 0\nv 5 1 0\n"
        "f 1 2 3\nf 4 5 6\n")
    mesh = load_mesh(path)
    assert mesh.face_tags is not None
    assert mesh.face_tags[0] != mesh.face_tags[1]


def test_normalize_cube_side_4():
    cube = corpus.box(half=(2.0, 2.0, 2.0))
    normed, transform = normalize_to_unit_cube(cube, margin=0.03)
    assert transform.scale == pytest.approx(0.485, abs=1e-12)
    assert np.allclose(transform.translation, 0, atol=1e-12)
    lo, hi = normed.bounds()
    assert np.all(lo >= -0.97 - 1e-12) and np.all(hi <= 0.97 + 1e-12)


def test_normalize_idempotent():
    mesh = corpus.icosphere(2, 0.4, center=(0.1, -0.2, 0.05))
    normed, _ = normalize_to_unit_cube(mesh, margin=0.03)
    again, t2 = normalize_to_unit_cube(normed, margin=0.03)
    assert abs(t2.scale - 1.0) < 1e-9
    assert np.allclose(again.vertices, normed.vertices, atol=1e-9)


def test_normalize_preserves_aspect():
    slab = corpus.box(half=(1.0, 0.5, 0.25))
    normed, _ = normalize_to_unit_cube(slab, margin=0.03)
    lo, hi = normed.bounds()
    extent = hi - lo
    assert extent[0] == pytest.approx(1.94)
    assert extent[1] == pytest.approx(0.97)
    assert extent[2] == pytest.approx(0.485)


def test_normalize_point_errors():
    point = TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 2]]))
    with pytest.raises(MeshError, match="zero-extent"):
        normalize_to_unit_cube(point)
    with pytest.raises(MeshError, match="margin"):
        normalize_to_unit_cube(corpus.box(), margin=0.5)


def test_weld_shared_edge():
    # two triangles sharing an edge, stored as 6 distinct vertices
    verts = np.array([
        [0, 0, 0], [1, 0, 0], [0, 1, 0],
        [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=np.float64)
    faces = np.array([[0, 1, 2], [3, 4, 5]])
    welded = weld_vertices(TriangleMesh(verts, faces), 1e-6)
    assert welded.n_vertices == 4
    assert welded.n_faces == 2


def test_weld_eps_zero_merges_only_exact():
    verts = np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1e-9]])
    faces = np.array([[0, 2, 3], [1, 2, 4]])
    welded = weld_vertices(TriangleMesh(verts, faces), 0.0)
    assert welded.n_vertices == 4  # the exact duplicate merged, the 1e-9 one kept
    with pytest.raises(MeshError):
        weld_vertices(TriangleMesh(verts, faces), -1.0)


def test_weld_icosphere_euler_characteristic():
    sphere = corpus.icosphere(2, 0.5)
    # explode into a triangle soup, then weld back
    soup_verts = sphere.triangles.reshape(-1, 3)
    soup_faces = np.arange(len(soup_verts)).reshape(-1, 3)
    welded = weld_vertices(TriangleMesh(soup_verts, soup_faces), 1e-6)
    edges = np.concatenate([welded.faces[:, [0, 1]], welded.faces[:, [1, 2]],
                            welded.faces[:, [2, 0]]])
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    euler = welded.n_vertices - len(edges) + welded.n_faces
    assert euler == 2


@pytest.mark.parametrize("suffix", [".obj", ".ply"])
def test_save_load_roundtrip(tmp_path, suffix):
    mesh = corpus.icosphere(2, 0.45)
    path = tmp_path / f"sphere{suffix}"
    save_mesh(mesh, path)
    back = load_mesh(path)
    assert back.n_faces == mesh.n_faces
    assert np.abs(back.vertices - mesh.vertices).max() < 1e-6


def test_save_with_transform_restores_original_frame(tmp_path):
    cube = corpus.box(half=(2.0, 2.0, 2.0))
    normed, transform = normalize_to_unit_cube(cube, margin=0.03)
    path = tmp_path / "cube.ply"
    save_mesh(normed, path, transform)
    back = load_mesh(path)
    lo, hi = back.bounds()
    assert np.allclose(hi - lo, 4.0, atol=1e-6)


def test_save_unwritable_path_errors():
    with pytest.raises(OSError):
        save_mesh(corpus.box(), "/nonexistent-dir/x.obj")


def test_roundtrip_corpus_meshes(tmp_path):
    for name, mesh in corpus.defect_corpus(6, seed=3):
        path = tmp_path / f"{name}.ply"
        save_mesh(mesh, path)
        back = load_mesh(path)
        assert back.n_faces == mesh.n_faces
        assert np.abs(back.vertices - mesh.vertices).max() < 1e-6

import math

import numpy as np
import pytest

from sphereflow.errors import CoverageError, FormatError, MeshError
from sphereflow.mesh import (TriMesh, build_icosphere, hemisphere_filter,
                             locate, locate_brute, locate_faces, read_mesh,
                             triangle_geometry, write_mesh)

from oracles import heron_area, locate_by_centroid_scan


def edge_count(mesh):
    edges = set()
    for a, b, c in mesh.faces:
        for u, v in ((a, b), (b, c), (c, a)):
            edges.add((min(u, v), max(u, v)))
    return len(edges)


@pytest.mark.parametrize("level,verts,faces", [(0, 12, 20), (1, 42, 80),
                                               (2, 162, 320)])
def test_icosphere_counts(level, verts, faces):
    mesh = build_icosphere(level)
    assert mesh.vertex_count == verts
    assert mesh.face_count == faces


def test_level7_counts_and_hemisphere():
    mesh = build_icosphere(7)
    assert mesh.face_count == 327680
    hemi = hemisphere_filter(mesh)
    assert hemi.face_count == 163840
    assert np.all(hemi.vertices[hemi.faces][:, :, 2] >= -1e-12)


@pytest.mark.parametrize("level", [0, 1, 2, 3, 4])
def test_euler_characteristic(level):
    mesh = build_icosphere(level)
    V, F = mesh.vertex_count, mesh.face_count
    E = edge_count(mesh)
    assert V - E + F == 2
    assert F == 20 * 4 ** level
    assert V == 10 * 4 ** level + 2


def test_vertices_unit_norm():
    mesh = build_icosphere(4)
    norms = np.linalg.norm(mesh.vertices, axis=1)
    assert np.abs(norms - 1.0).max() < 1e-12


def test_faces_ccw_outward():
    mesh = build_icosphere(3)
    corners = mesh.vertices[mesh.faces]
    dets = np.einsum("ij,ij->i",
                     np.cross(corners[:, 0], corners[:, 1]), corners[:, 2])
    assert (dets > 0).all()
    assert np.einsum("ij,ij->i", mesh.normals, mesh.centroids).min() > 0


def test_area_sum_converges_to_sphere():
    deficits = []
    for level in (3, 4, 5):
        mesh = build_icosphere(level)
        deficits.append((4 * math.pi - mesh.areas.sum()) / (4 * math.pi))
    assert deficits[-1] < 1e-3
    # O(h^2): one level quarters the deficit
    assert 0.2 < deficits[2] / deficits[1] < 0.3
    assert 0.2 < deficits[1] / deficits[0] < 0.3


def test_every_vertex_referenced():
    mesh = build_icosphere(2)
    assert set(mesh.faces.ravel()) == set(range(mesh.vertex_count))


def test_level_guard():
    with pytest.raises(ValueError, match="guard"):
        build_icosphere(10)
    with pytest.raises(ValueError):
        build_icosphere(-1)


def test_triangle_geometry_equilateral():
    s = 1.3
    verts = [(0.0, 0.0, 0.0), (s, 0.0, 0.0), (s / 2, s * math.sqrt(3) / 2, 0.0)]
    # shift off the origin plane so the outward rule has a defined sign
    verts = [(x, y, 1.0) for x, y, z in verts]
    mesh = TriMesh(verts, [(0, 1, 2)])
    geom = triangle_geometry(mesh, 0)
    assert geom.area == pytest.approx(math.sqrt(3) / 4 * s * s, rel=1e-14)
    for j in range(3):
        assert np.linalg.norm(geom.heights[j]) == pytest.approx(
            math.sqrt(3) / 2 * s, rel=1e-13)


def test_triangle_geometry_right_triangle():
    mesh = TriMesh([(0, 0, 1), (1, 0, 1), (0, 1, 1)], [(0, 1, 2)])
    geom = triangle_geometry(mesh, 0)
    assert geom.area == pytest.approx(0.5, abs=1e-15)
    assert np.allclose(geom.normal, [0, 0, 1], atol=1e-15)


def test_triangle_geometry_height_invariants():
    mesh = build_icosphere(2)
    for f in (0, 57, 200):
        geom = triangle_geometry(mesh, f)
        corners = mesh.vertices[mesh.faces[f]]
        for j in range(3):
            opposite = corners[(j + 2) % 3] - corners[(j + 1) % 3]
            assert abs(geom.heights[j] @ opposite) < 1e-12
            assert abs(geom.heights[j] @ geom.normal) < 1e-12
            # |h_j| = 2 A / |opposite edge|
            assert np.linalg.norm(geom.heights[j]) == pytest.approx(
                2 * geom.area / np.linalg.norm(opposite), rel=1e-12)


def test_triangle_area_matches_heron():
    mesh = build_icosphere(2)
    corners = mesh.vertices[mesh.faces[0]]
    assert triangle_geometry(mesh, 0).area == pytest.approx(
        heron_area(*corners), abs=1e-14)


def test_degenerate_triangle_rejected():
    with pytest.raises(MeshError, match="degenerate"):
        TriMesh([(0, 0, 1), (1, 0, 1), (2, 0, 1)], [(0, 1, 2)])


def test_bad_face_indices_rejected():
    with pytest.raises(MeshError):
        TriMesh([(0, 0, 1), (1, 0, 1), (0, 1, 1)], [(0, 1, 3)])


def test_locate_centroids(ico3):
    pts = ico3.centroids / np.linalg.norm(ico3.centroids, axis=1)[:, None]
    assert np.array_equal(locate_faces(ico3, pts),
                          np.arange(ico3.face_count))


def test_locate_vertex_tie_break(ico2):
    vertex = 17
    sharing = sorted(np.nonzero((ico2.faces == vertex).any(axis=1))[0])
    assert locate(ico2, ico2.vertices[vertex]) == sharing[0]


def test_locate_matches_centroid_scan_oracle(ico3):
    rng = np.random.default_rng(7)
    pts = rng.standard_normal((10_000, 3))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    ours = locate_faces(ico3, pts)
    sample = rng.choice(len(pts), size=300, replace=False)
    for i in sample:
        assert ours[i] == locate_by_centroid_scan(ico3, pts[i])


def test_locate_brute_agrees_with_walk(ico3):
    rng = np.random.default_rng(11)
    pts = rng.standard_normal((200, 3))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    walk = locate_faces(ico3, pts)
    for i in range(len(pts)):
        assert walk[i] == locate_brute(ico3, pts[i])


def test_hemisphere_locate(ico3):
    hemi = hemisphere_filter(ico3)
    assert hemi.face_count == ico3.face_count // 2
    # a northern point works, a southern one raises
    assert locate(hemi, (0.3, 0.2, 0.9)) >= 0
    with pytest.raises(CoverageError):
        locate(hemi, (0.0, 0.0, -1.0))
    # equator points are covered despite the lowest-index full face being a
    # dropped southern one
    equator = hemi.vertices[np.abs(hemi.vertices[:, 2]) < 1e-12]
    assert len(equator)
    for p in equator[:5]:
        f = locate(hemi, p)
        assert 0 <= f < hemi.face_count


def test_mesh_file_roundtrip(tmp_path, ico2):
    path = tmp_path / "mesh.txt"
    write_mesh(ico2, path)
    back = read_mesh(path)
    assert np.array_equal(back.vertices, ico2.vertices)
    assert np.array_equal(back.faces, ico2.faces)
    assert back.level == 2
    # reattached construction keeps the fast point-location path
    pts = ico2.centroids[:50] / np.linalg.norm(ico2.centroids[:50], axis=1)[:, None]
    assert np.array_equal(locate_faces(back, pts), np.arange(50))


def test_hemisphere_file_roundtrip(tmp_path, ico2):
    hemi = hemisphere_filter(ico2)
    path = tmp_path / "hemi.txt"
    write_mesh(hemi, path)
    back = read_mesh(path)
    assert np.array_equal(back.vertices, hemi.vertices)
    assert np.array_equal(back.faces, hemi.faces)
    with pytest.raises(CoverageError):
        locate(back, (0.0, 0.0, -1.0))


def test_read_mesh_rejects_malformed(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("wrongmagic 1\n3 1 0\n")
    with pytest.raises(FormatError, match="line 1"):
        read_mesh(bad)
    bad.write_text("spheremesh 1\n3 1 0\n0 0 1\n1 0 1\n")
    with pytest.raises(FormatError):
        read_mesh(bad)
    bad.write_text("spheremesh 1\nnot counts\n")
    with pytest.raises(FormatError, match="line 2"):
        read_mesh(bad)

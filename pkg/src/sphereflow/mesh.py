"""Triangulated unit sphere: icosphere construction, geometry, point location.

The icosphere is built by recursive 4-way subdivision of a regular
icosahedron with edge midpoints pushed back onto the sphere.  The base
icosahedron is oriented vertex-up (one vertex at +z, vertex rings at
z = +-1/sqrt(5)).  With this orientation every subdivision level >= 1 has
its equator tiled exactly by mesh edges, so restricting to the closed
northern hemisphere keeps exactly half of the faces.  The construction is
fully deterministic; meshes are bit-reproducible across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoverageError, FormatError, MeshError

MAX_LEVEL = 9  # memory guard: level 9 is ~5.2M faces
HEMISPHERE_TOL = 1e-12  # vertex z >= -tol counts as northern
_CONTAIN_TOL = 1e-12  # signed-volume slack for containment tests
_DEGENERATE_REL = 1e-14  # area below this fraction of sq edge length is degenerate


@dataclass(frozen=True)
class TriangleGeom:
    """Flat geometry of one triangle: area, height vectors, unit normal.

    heights[j] points from vertex j to the foot of its perpendicular on the
    opposite edge; each height lies in the triangle plane.
    """

    area: float
    heights: np.ndarray  # (3, 3)
    normal: np.ndarray  # (3,)


class TriMesh:
    """Immutable triangle mesh, normally an icosphere or a hemisphere of one.

    Vertices are (V, 3) floats, faces (F, 3) int indices wound
    counter-clockwise seen from outside.  Per-face areas, height vectors and
    outward unit normals are precomputed; degenerate faces are rejected.
    """

    def __init__(self, vertices, faces, level: int = 0, _ancestry=None,
                 _face_origin=None, _full_mesh=None):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (V, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f"faces must be (F, 3), got {faces.shape}")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("vertices contain non-finite coordinates")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise MeshError("face indices out of vertex range")
        referenced = np.zeros(len(vertices), dtype=bool)
        referenced[faces.ravel()] = True
        if not referenced.all():
            raise MeshError("mesh has unreferenced vertices")

        self.vertices = vertices
        self.faces = faces
        self.level = int(level)
        self._ancestry = _ancestry  # [(verts, faces), ...] coarse -> fine
        self._face_origin = _face_origin  # hemisphere: local -> full face index
        self._full_mesh = _full_mesh  # hemisphere: the unrestricted mesh

        corners = vertices[faces]  # (F, 3, 3)
        e1 = corners[:, 1] - corners[:, 0]
        e2 = corners[:, 2] - corners[:, 0]
        cross = np.cross(e1, e2)
        cross_norm = np.linalg.norm(cross, axis=1)
        self.areas = 0.5 * cross_norm
        edge_sq = max(
            float(np.max(np.sum(e1 * e1, axis=1), initial=0.0)),
            float(np.max(np.sum(e2 * e2, axis=1), initial=0.0)),
        )
        if np.any(self.areas <= _DEGENERATE_REL * edge_sq):
            bad = int(np.argmin(self.areas))
            raise MeshError(f"degenerate (zero-area) face {bad}")
        normals = cross / cross_norm[:, None]
        self.centroids = corners.mean(axis=1)
        # orient outward: positive dot with the centroid (no flip if coplanar
        # with the origin, which cannot happen for sphere meshes)
        flip = np.einsum("ij,ij->i", normals, self.centroids) < 0.0
        normals[flip] *= -1.0
        self.normals = normals
        self.heights = _height_vectors(corners)

        for arr in (self.vertices, self.faces, self.areas, self.normals,
                    self.centroids, self.heights):
            arr.setflags(write=False)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def is_hemisphere(self) -> bool:
        return self._face_origin is not None

    def __repr__(self):
        kind = "hemisphere" if self.is_hemisphere() else "sphere"
        return (f"TriMesh(level={self.level}, V={self.vertex_count}, "
                f"F={self.face_count}, {kind})")


def _height_vectors(corners: np.ndarray) -> np.ndarray:
    """Height vectors h_j from vertex j to the opposite edge, per face."""
    heights = np.empty_like(corners)
    for j in range(3):
        a = corners[:, (j + 1) % 3]
        b = corners[:, (j + 2) % 3]
        v = corners[:, j]
        edge = b - a
        edge_unit = edge / np.linalg.norm(edge, axis=1)[:, None]
        w = v - a
        foot = a + np.einsum("ij,ij->i", w, edge_unit)[:, None] * edge_unit
        heights[:, j] = foot - v
    return heights


def base_icosahedron() -> tuple[np.ndarray, np.ndarray]:
    """Unit icosahedron, vertex-up: vertex 0 at +z, rings at z = +-1/sqrt(5)."""
    zr = 1.0 / math.sqrt(5.0)
    rr = 2.0 / math.sqrt(5.0)
    verts = [(0.0, 0.0, 1.0)]
    for i in range(5):
        a = 2.0 * math.pi * i / 5.0
        verts.append((rr * math.cos(a), rr * math.sin(a), zr))
    for i in range(5):
        a = 2.0 * math.pi * (i + 0.5) / 5.0
        verts.append((rr * math.cos(a), rr * math.sin(a), -zr))
    verts.append((0.0, 0.0, -1.0))
    faces = []
    for i in range(5):
        j = (i + 1) % 5
        faces.append((0, 1 + i, 1 + j))
        faces.append((1 + i, 6 + i, 1 + j))
        faces.append((6 + i, 6 + j, 1 + j))
        faces.append((11, 6 + j, 6 + i))
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64)


def _subdivide(vertices: np.ndarray, faces: np.ndarray):
    """Split every face into 4; new edge midpoints are deduplicated via a
    canonical (min, max) vertex-pair key and projected onto the sphere.

    Children of face f occupy slots 4f..4f+3, which makes ancestor lookup a
    single integer division.
    """
    nf = len(faces)
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    keys = np.sort(edges, axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    mids = vertices[uniq[:, 0]] + vertices[uniq[:, 1]]
    mids /= np.linalg.norm(mids, axis=1)[:, None]
    new_vertices = np.vstack([vertices, mids])
    m01 = len(vertices) + inverse[:nf]
    m12 = len(vertices) + inverse[nf:2 * nf]
    m20 = len(vertices) + inverse[2 * nf:]
    v0, v1, v2 = faces[:, 0], faces[:, 1], faces[:, 2]
    new_faces = np.empty((4 * nf, 3), dtype=np.int64)
    new_faces[0::4] = np.column_stack([v0, m01, m20])
    new_faces[1::4] = np.column_stack([v1, m12, m01])
    new_faces[2::4] = np.column_stack([v2, m20, m12])
    new_faces[3::4] = np.column_stack([m01, m12, m20])
    return new_vertices, new_faces


def build_icosphere(level: int) -> TriMesh:
    """Icosphere with 20 * 4^level faces and 10 * 4^level + 2 vertices."""
    if level < 0:
        raise ValueError(f"subdivision level must be >= 0, got {level}")
    if level > MAX_LEVEL:
        raise ValueError(
            f"subdivision level {level} exceeds the guard ({MAX_LEVEL}); "
            f"a level-{level} icosphere has {20 * 4 ** level} faces")
    vertices, faces = base_icosahedron()
    ancestry = []
    for _ in range(level):
        ancestry.append((vertices, faces))
        vertices, faces = _subdivide(vertices, faces)
    return TriMesh(vertices, faces, level=level, _ancestry=ancestry)


def hemisphere_filter(mesh: TriMesh, tol: float = HEMISPHERE_TOL) -> TriMesh:
    """Keep faces whose three vertices all satisfy z >= -tol.

    Unreferenced vertices are dropped and renumbered; face order is
    preserved.  The result remembers its source mesh so point location still
    works (points outside the kept faces raise CoverageError).
    """
    keep = np.all(mesh.vertices[mesh.faces][:, :, 2] >= -tol, axis=1)
    if not keep.any():
        raise MeshError("hemisphere filter kept no faces")
    kept_faces = mesh.faces[keep]
    used = np.unique(kept_faces.ravel())
    remap = np.full(mesh.vertex_count, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(
        mesh.vertices[used],
        remap[kept_faces],
        level=mesh.level,
        _face_origin=np.nonzero(keep)[0],
        _full_mesh=mesh,
    )


def triangle_geometry(mesh: TriMesh, face_index: int) -> TriangleGeom:
    """Geometry of one face (precomputed at mesh construction)."""
    if not 0 <= face_index < mesh.face_count:
        raise IndexError(f"face index {face_index} out of range "
                         f"[0, {mesh.face_count})")
    return TriangleGeom(
        area=float(mesh.areas[face_index]),
        heights=mesh.heights[face_index],
        normal=mesh.normals[face_index],
    )


def _normalize_points(points):
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    norms = np.linalg.norm(pts, axis=1)
    if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
        raise ValueError("cannot locate zero or non-finite points")
    return pts / norms[:, None]


def _containment(corners_a, corners_b, corners_c, pts):
    """Minimum signed volume det(a, b, p), det(b, c, p), det(c, a, p).

    Nonnegative for points inside the radial projection of a CCW face.
    """
    d0 = np.einsum("...j,...j->...", np.cross(corners_a, corners_b), pts)
    d1 = np.einsum("...j,...j->...", np.cross(corners_b, corners_c), pts)
    d2 = np.einsum("...j,...j->...", np.cross(corners_c, corners_a), pts)
    return np.minimum(d0, np.minimum(d1, d2))


def _first_containing(mindets: np.ndarray) -> np.ndarray:
    """Lowest candidate index with mindet >= -tol, else the most-inside one."""
    ok = mindets >= -_CONTAIN_TOL
    first = np.argmax(ok, axis=1)
    none = ~ok.any(axis=1)
    if none.any():
        first = first.copy()
        first[none] = np.argmax(mindets[none], axis=1)
    return first


def locate_faces(mesh: TriMesh, points, allow_missing: bool = False) -> np.ndarray:
    """Faces whose radial projection contains each point.

    Ties on shared edges or vertices resolve to the lowest face index.  For
    hemisphere meshes, points outside the kept faces yield -1 when
    allow_missing is true and raise CoverageError otherwise.
    """
    pts = _normalize_points(points)
    if mesh._face_origin is not None:
        full = mesh._full_mesh
        full_idx = locate_faces(full, pts)
        lookup = np.full(full.face_count, -1, dtype=np.int64)
        lookup[mesh._face_origin] = np.arange(mesh.face_count)
        local = lookup[full_idx]
        misses = local < 0
        if misses.any():
            # the lowest-index full face can be a dropped southern one while a
            # kept face still touches the point (equator edges); rescan those
            for i in np.nonzero(misses)[0]:
                local[i] = _brute_scan(mesh, pts[i], allow_missing=True)
        if np.any(local < 0) and not allow_missing:
            raise CoverageError("point not covered by the hemisphere mesh")
        return local
    if mesh._ancestry:
        return _locate_walk(mesh, pts)
    return np.array([_brute_scan(mesh, p, allow_missing) for p in pts],
                    dtype=np.int64)


def locate(mesh: TriMesh, point) -> int:
    """Single-point variant of locate_faces."""
    return int(locate_faces(mesh, np.asarray(point, dtype=np.float64))[0])


def _locate_walk(mesh: TriMesh, pts: np.ndarray) -> np.ndarray:
    """Coarse-to-fine walk: pick a level-0 face, then descend through the
    4-child blocks (children of face f are 4f..4f+3 on the next level)."""
    levels = list(mesh._ancestry) + [(mesh.vertices, mesh.faces)]
    verts0, faces0 = levels[0]
    corners = verts0[faces0]  # (20, 3, 3)
    mindets = _containment(corners[None, :, 0], corners[None, :, 1],
                           corners[None, :, 2], pts[:, None, :])
    current = _first_containing(mindets)
    for verts, faces in levels[1:]:
        cand = 4 * current[:, None] + np.arange(4)[None, :]
        corners = verts[faces[cand]]  # (N, 4, 3, 3)
        mindets = _containment(corners[:, :, 0], corners[:, :, 1],
                               corners[:, :, 2], pts[:, None, :])
        current = cand[np.arange(len(pts)), _first_containing(mindets)]
    return current


def _brute_scan(mesh: TriMesh, p: np.ndarray, allow_missing: bool = False) -> int:
    corners = mesh.vertices[mesh.faces]
    mindets = _containment(corners[:, 0], corners[:, 1], corners[:, 2],
                           p[None, :])
    hits = np.nonzero(mindets >= -_CONTAIN_TOL)[0]
    if len(hits):
        return int(hits[0])
    if mesh._face_origin is None:
        return int(np.argmax(mindets))  # roundoff fallback on a full cover
    if allow_missing:
        return -1
    raise CoverageError("point not covered by the mesh")


def locate_brute(mesh: TriMesh, point) -> int:
    """Exhaustive lowest-index containment scan (test oracle / fallback)."""
    pts = _normalize_points(point)
    return _brute_scan(mesh, pts[0])


def write_mesh(mesh: TriMesh, path) -> None:
    """Text format: 'spheremesh 1', counts+level, vertex rows, face rows."""
    lines = ["spheremesh 1",
             f"{mesh.vertex_count} {mesh.face_count} {mesh.level}"]
    lines.extend(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}" for v in mesh.vertices)
    lines.extend(f"{f[0]} {f[1]} {f[2]}" for f in mesh.faces)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> TriMesh:
    """Read a mesh file; full or hemisphere icospheres regain fast location.

    If the stored arrays are bit-identical to a freshly built icosphere of
    the recorded level (or its hemisphere restriction), that construction is
    returned so the subdivision ancestry is available again.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].split() != ["spheremesh", "1"]:
        raise FormatError(f"{path}: line 1: expected 'spheremesh 1'")
    try:
        nv, nf, level = (int(tok) for tok in lines[1].split())
    except (ValueError, IndexError):
        raise FormatError(f"{path}: line 2: expected '<V> <F> <level>'")
    if len(lines) < 2 + nv + nf:
        raise FormatError(f"{path}: expected {2 + nv + nf} lines, "
                          f"got {len(lines)}")
    try:
        vertices = np.array(
            [[float(t) for t in lines[2 + i].split()] for i in range(nv)])
        faces = np.array(
            [[int(t) for t in lines[2 + nv + i].split()] for i in range(nf)])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed vertex or face row: {exc}")
    if vertices.shape != (nv, 3) or faces.shape != (nf, 3):
        raise FormatError(f"{path}: row width is not 3")

    if 0 <= level <= MAX_LEVEL:
        full_v = 10 * 4 ** level + 2
        full_f = 20 * 4 ** level
        if nv == full_v and nf == full_f:
            rebuilt = build_icosphere(level)
            if (np.array_equal(rebuilt.vertices, vertices)
                    and np.array_equal(rebuilt.faces, faces)):
                return rebuilt
        elif nf == full_f // 2 and level >= 1:
            hemi = hemisphere_filter(build_icosphere(level))
            if (hemi.vertex_count == nv
                    and np.array_equal(hemi.vertices, vertices)
                    and np.array_equal(hemi.faces, faces)):
                return hemi
    return TriMesh(vertices, faces, level=level)

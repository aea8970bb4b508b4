"""Independent oracles used across the test suite.

Everything here is deliberately naive (product quadrature, double loops,
exhaustive scans) and never shares code with the library paths it checks.
"""

import numpy as np


def sphere_quadrature(n_theta: int, n_phi: int):
    """Gauss-Legendre x uniform-azimuth product rule on the sphere.

    Exact for integrands that are trigonometric polynomials of degree below
    the node counts, which covers every spherical-harmonic product used in
    the tests.
    """
    x, w = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    ct, ph = np.meshgrid(x, phi, indexing="ij")
    st = np.sqrt(1.0 - ct ** 2)
    pts = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1)
    wts = np.broadcast_to(w[:, None] * (2.0 * np.pi / n_phi), ct.shape)
    return pts.reshape(-1, 3), wts.ravel().copy()


def naive_data_matrix(q, areas):
    """Triple loop over (p, q, triangle)."""
    dim = q.shape[1]
    A = np.zeros((dim, dim))
    for i in range(q.shape[0]):
        for p in range(dim):
            for r in range(dim):
                A[p, r] += q[i, p] * q[i, r] * areas[i]
    return A


def naive_rhs(q, bvals):
    dim = q.shape[1]
    b = np.zeros(dim)
    for i in range(q.shape[0]):
        for p in range(dim):
            b[p] -= q[i, p] * bvals[i]
    return b


def locate_by_centroid_scan(mesh, point):
    """Faces ordered by angular distance of their centroids to the point;
    the first that contains the point's radial projection wins."""
    p = np.asarray(point, dtype=np.float64)
    p = p / np.linalg.norm(p)
    dirs = mesh.centroids / np.linalg.norm(mesh.centroids, axis=1)[:, None]
    order = np.argsort(-dirs @ p, kind="stable")
    corners = mesh.vertices[mesh.faces]
    for f in order:
        a, b, c = corners[f]
        d0 = np.cross(a, b) @ p
        d1 = np.cross(b, c) @ p
        d2 = np.cross(c, a) @ p
        if min(d0, d1, d2) >= -1e-12:
            return int(f)
    raise AssertionError("oracle found no containing face")


def heron_area(a, b, c):
    la = np.linalg.norm(b - c)
    lb = np.linalg.norm(a - c)
    lc = np.linalg.norm(a - b)
    s = 0.5 * (la + lb + lc)
    return np.sqrt(s * (s - la) * (s - lb) * (s - lc))


def gradient_from_edge_constraints(corners, values):
    """Least-squares solve of grad . edge = value difference for the two
    independent edges, constrained to the triangle plane."""
    e1 = corners[1] - corners[0]
    e2 = corners[2] - corners[0]
    normal = np.cross(e1, e2)
    normal = normal / np.linalg.norm(normal)
    design = np.vstack([e1, e2, normal])
    target = np.array([values[1] - values[0], values[2] - values[0], 0.0])
    return np.linalg.solve(design, target)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphereflow.errors import FormatError
from sphereflow.fields import (ScalarFrame, SphereFit, VoxelGrid, fit_sphere,
                               normalize_frame, pl_gradient, project_voxels,
                               random_band_coeffs, read_frame, read_points,
                               read_voxels, rotation_matrix, synth_rotation,
                               time_derivative, trilinear_sample, write_frame,
                               write_points, write_voxels)
from sphereflow.harmonics import ScalarCoeffs, scalar_dimension
from sphereflow.mesh import TriMesh, build_icosphere

from oracles import gradient_from_edge_constraints


def test_pl_gradient_constant_frame(ico2):
    frame = ScalarFrame(mesh=ico2, values=np.full(ico2.vertex_count, 3.7))
    grad = pl_gradient(frame)
    assert np.abs(grad.vectors).max() < 1e-13


def test_pl_gradient_reproduces_linear(ico2):
    a = np.array([0.4, -1.2, 0.7])
    frame = ScalarFrame(mesh=ico2, values=ico2.vertices @ a)
    grad = pl_gradient(frame).vectors
    expected = a[None, :] - np.einsum("fk,k->f", ico2.normals, a)[:, None] \
        * ico2.normals
    assert np.abs(grad - expected).max() < 1e-12


def test_pl_gradient_single_triangle_oracle():
    corners = np.array([[0.1, 0.2, 1.0], [1.0, -0.1, 1.2], [0.3, 0.9, 0.8]])
    mesh = TriMesh(corners, [(0, 1, 2)])
    rng = np.random.default_rng(4)
    values = rng.random(3)
    grad = pl_gradient(ScalarFrame(mesh=mesh, values=values)).vectors[0]
    assert np.allclose(grad, gradient_from_edge_constraints(corners, values),
                       atol=1e-12)


def test_pl_gradient_in_plane(ico3):
    rng = np.random.default_rng(5)
    frame = ScalarFrame(mesh=ico3, values=rng.random(ico3.vertex_count))
    grad = pl_gradient(frame).vectors
    assert np.abs(np.einsum("fk,fk->f", grad, ico3.normals)).max() < 1e-12


def test_time_derivative(ico2):
    rng = np.random.default_rng(6)
    a = rng.random(ico2.vertex_count)
    b = rng.random(ico2.vertex_count)
    f0 = ScalarFrame(mesh=ico2, values=a)
    f1 = ScalarFrame(mesh=ico2, values=b)
    assert np.array_equal(time_derivative(f0, f1).values, b - a)
    assert np.abs(time_derivative(f0, f0).values).max() == 0.0
    zero = ScalarFrame(mesh=ico2, values=np.zeros(ico2.vertex_count))
    one = ScalarFrame(mesh=ico2, values=np.ones(ico2.vertex_count))
    assert np.array_equal(time_derivative(zero, one).values,
                          np.ones(ico2.vertex_count))


def test_time_derivative_mesh_mismatch(ico2, ico3):
    f0 = ScalarFrame(mesh=ico2, values=np.zeros(ico2.vertex_count))
    f1 = ScalarFrame(mesh=ico3, values=np.zeros(ico3.vertex_count))
    with pytest.raises(ValueError, match="mesh"):
        time_derivative(f0, f1)


def test_normalize_simple(ico2):
    values = np.zeros(ico2.vertex_count)
    values[0], values[1], values[2] = 0.0, 5.0, 10.0
    out = normalize_frame(ScalarFrame(mesh=ico2, values=values)).values
    assert out[0] == 0.0 and out[1] == 0.5 and out[2] == 1.0


def test_normalize_identity_and_idempotent(ico2):
    rng = np.random.default_rng(8)
    values = rng.random(ico2.vertex_count)
    values[0], values[1] = 0.0, 1.0  # already spans [0, 1]
    frame = ScalarFrame(mesh=ico2, values=values)
    out = normalize_frame(frame)
    assert np.array_equal(out.values, values)
    again = normalize_frame(out)
    assert np.array_equal(again.values, out.values)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_normalize_preserves_order(seed):
    mesh = build_icosphere(0)
    rng = np.random.default_rng(seed)
    values = rng.standard_normal(mesh.vertex_count) * 10
    out = normalize_frame(ScalarFrame(mesh=mesh, values=values)).values
    assert out.min() == 0.0 and out.max() == 1.0
    assert np.array_equal(np.argsort(values, kind="stable"),
                          np.argsort(out, kind="stable"))


def test_normalize_constant_warns(ico2):
    frame = ScalarFrame(mesh=ico2, values=np.full(ico2.vertex_count, 2.0))
    with pytest.warns(UserWarning, match="constant"):
        out = normalize_frame(frame)
    assert np.array_equal(out.values, frame.values)


def shell_grid(n=24, radius=2.0, center=(0.0, 0.0, 0.0)):
    """Grid whose value peaks on a sphere of the given radius."""
    axes = [np.arange(n) * 0.25 - 3.0 + c for c in center]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    r = np.sqrt((X - center[0]) ** 2 + (Y - center[1]) ** 2
                + (Z - center[2]) ** 2)
    values = np.exp(-((r - radius) / 0.3) ** 2)
    return VoxelGrid(dims=(n, n, n), spacing=(0.25, 0.25, 0.25),
                     origin=np.array([-3.0 + center[0], -3.0 + center[1],
                                      -3.0 + center[2]]),
                     values=values)


def test_project_constant_grid(ico2):
    grid = VoxelGrid(dims=(8, 8, 8), spacing=(1.0, 1.0, 1.0),
                     origin=np.array([-3.5, -3.5, -3.5]),
                     values=np.full((8, 8, 8), 4.25))
    fit = SphereFit(center=np.zeros(3), radius=2.0, rms=0.0)
    frame = project_voxels(grid, fit, ico2, eps=0.2, samples=5)
    assert np.allclose(frame.values, 4.25, atol=1e-12)


def test_project_radial_monotone_picks_outermost(ico2):
    n = 16
    axes = [np.arange(n) - 7.5] * 3
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    grid = VoxelGrid(dims=(n, n, n), spacing=(1.0, 1.0, 1.0),
                     origin=np.array([-7.5, -7.5, -7.5]),
                     values=np.sqrt(X ** 2 + Y ** 2 + Z ** 2))
    fit = SphereFit(center=np.zeros(3), radius=4.0, rms=0.0)
    eps = 0.25
    frame = project_voxels(grid, fit, ico2, eps=eps, samples=9)
    # radially increasing values: the max sits at c = 1 + eps, and trilinear
    # interpolation of |x| is exact up to the cell-level convexity gap
    assert np.all(frame.values >= 4.0 * (1 + eps) - 0.15)
    assert np.all(frame.values <= 4.0 * (1 + eps) + 0.15)


def test_project_matches_dense_scan(ico2):
    grid = shell_grid()
    fit = SphereFit(center=np.zeros(3), radius=2.0, rms=0.0)
    frame = project_voxels(grid, fit, ico2, eps=0.15, samples=11)
    # dense radial oracle with 10x the samples includes the coarse ones when
    # 10*(samples-1)+1 nests the grid
    dense = project_voxels(grid, fit, ico2, eps=0.15, samples=101)
    assert np.all(dense.values >= frame.values - 1e-12)
    assert np.abs(dense.values - frame.values).max() < 5e-3


def test_project_monotone_in_grid(ico2):
    base = shell_grid()
    bumped = VoxelGrid(dims=base.dims, spacing=base.spacing,
                       origin=base.origin, values=base.values + 0.3)
    fit = SphereFit(center=np.zeros(3), radius=2.0, rms=0.0)
    lo = project_voxels(base, fit, ico2, eps=0.2, samples=7).values
    hi = project_voxels(bumped, fit, ico2, eps=0.2, samples=7).values
    assert np.all(hi >= lo)


def test_project_validation(ico2):
    grid = shell_grid()
    fit = SphereFit(center=np.zeros(3), radius=2.0, rms=0.0)
    with pytest.raises(ValueError):
        project_voxels(grid, fit, ico2, eps=0.0)
    with pytest.raises(ValueError):
        project_voxels(grid, fit, ico2, eps=0.1, samples=1)


def test_trilinear_outside_reads_zero():
    grid = VoxelGrid(dims=(4, 4, 4), spacing=(1.0, 1.0, 1.0),
                     origin=np.zeros(3), values=np.ones((4, 4, 4)))
    inside = trilinear_sample(grid, np.array([[1.5, 1.5, 1.5]]))[0]
    outside = trilinear_sample(grid, np.array([[10.0, 0.0, 0.0]]))[0]
    boundary = trilinear_sample(grid, np.array([[3.5, 1.5, 1.5]]))[0]
    assert inside == pytest.approx(1.0)
    assert outside == 0.0
    assert boundary == pytest.approx(0.5)  # blends with the zero exterior


def sphere_points(n, center, radius, seed):
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return center + radius * d


def test_fit_sphere_exact():
    pts = sphere_points(100, np.array([1.0, 2.0, 3.0]), 2.0, seed=12)
    fit = fit_sphere(pts)
    assert np.linalg.norm(fit.center - [1, 2, 3]) < 1e-10
    assert abs(fit.radius - 2.0) < 1e-10
    assert fit.rms < 1e-10


def test_fit_sphere_four_points():
    pts = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    fit = fit_sphere(pts)
    assert fit.rms < 1e-12
    assert np.allclose(np.linalg.norm(pts - fit.center, axis=1), fit.radius)


def test_fit_sphere_noisy():
    pts = sphere_points(500, np.array([0.5, -0.25, 1.5]), 1.0, seed=42)
    pts = pts + np.random.default_rng(43).normal(scale=0.01, size=pts.shape)
    fit = fit_sphere(pts)
    assert np.linalg.norm(fit.center - [0.5, -0.25, 1.5]) < 0.01


def test_fit_sphere_degenerate():
    rng = np.random.default_rng(1)
    flat = rng.random((20, 3))
    flat[:, 2] = 0.0  # coplanar
    with pytest.raises(ValueError):
        fit_sphere(flat)
    with pytest.raises(ValueError):
        fit_sphere(flat[:3])


def test_synth_zero_delta(ico3):
    base = random_band_coeffs(6, seed=2)
    truth = synth_rotation(ico3, base, (0, 0, 1), 0.0)
    assert np.array_equal(truth.frame0.values, truth.frame1.values)
    assert np.abs(truth.true_flow.values).max() == 0.0


def test_synth_zonal_aperture_problem(ico3):
    # zonal data is invariant under the rotation generating the flow: the
    # frames agree exactly while the true flow does not vanish
    values = np.zeros(scalar_dimension(1))
    values[2] = 1.0  # the (n=1, m=0) harmonic, a function of z only
    base = ScalarCoeffs(n_max=1, values=values)
    truth = synth_rotation(ico3, base, (0, 0, 1), 0.01)
    assert np.array_equal(truth.frame0.values, truth.frame1.values)
    assert truth.true_flow.norm() > 0


def test_synth_frames_in_unit_range(rotation_truth):
    v = rotation_truth.frame0.values
    assert v.min() == pytest.approx(0.0, abs=1e-12)
    assert v.max() == pytest.approx(1.0, abs=1e-12)


def test_synth_flow_is_degree_one_toroidal(rotation_truth):
    truth = rotation_truth
    spec = truth.true_flow.spec
    expected = 0.01 * math.sqrt(8 * math.pi / 3)
    assert truth.true_flow.values[spec.position(3, 1, 2)] == pytest.approx(
        expected, rel=1e-14)
    others = [p for p in range(spec.dimension) if p != spec.position(3, 1, 2)]
    assert np.abs(truth.true_flow.values[others]).max() == 0.0


def test_synth_opposite_delta(ico3):
    base = random_band_coeffs(5, seed=9)
    plus = synth_rotation(ico3, base, (0, 1, 0), 0.05)
    minus = synth_rotation(ico3, base, (0, 1, 0), -0.05)
    assert np.array_equal(plus.true_flow.values, -minus.true_flow.values)


def test_synth_guards(ico3):
    base = random_band_coeffs(3, seed=1)
    with pytest.raises(ValueError, match="small-motion"):
        synth_rotation(ico3, base, (0, 0, 1), 0.5)
    with pytest.raises(ValueError, match="axis"):
        synth_rotation(ico3, base, (0, 0, 0), 0.01)


def test_rotation_matrix_properties():
    R = rotation_matrix((0, 0, 1), 0.3)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-15)
    assert np.linalg.det(R) == pytest.approx(1.0)
    v = np.array([1.0, 0.0, 0.0])
    assert np.allclose(R @ v, [math.cos(0.3), math.sin(0.3), 0.0])


def test_frame_io_roundtrip(tmp_path, ico2):
    rng = np.random.default_rng(3)
    frame = ScalarFrame(mesh=ico2, values=rng.random(ico2.vertex_count))
    path = tmp_path / "frame.txt"
    write_frame(frame, path)
    back = read_frame(path, ico2)
    assert np.array_equal(back.values, frame.values)


def test_frame_io_rejects_bad(tmp_path, ico2):
    path = tmp_path / "bad.txt"
    path.write_text("wrong 1\n")
    with pytest.raises(FormatError):
        read_frame(path, ico2)
    path.write_text(f"spherefield 1\n{ico2.vertex_count + 1}\n")
    with pytest.raises(FormatError, match="vertices"):
        read_frame(path, ico2)


def test_voxel_io_roundtrip(tmp_path):
    grid = shell_grid(n=6)
    path = tmp_path / "grid.bin"
    write_voxels(grid, path)
    back = read_voxels(path)
    assert back.dims == grid.dims
    assert back.spacing == grid.spacing
    assert np.allclose(back.origin, grid.origin)
    assert np.allclose(back.values, grid.values, atol=1e-6)  # float32 payload
    assert path.stat().st_size == 64 + 4 * 6 ** 3


def test_voxel_header_layout(tmp_path):
    grid = VoxelGrid(dims=(2, 3, 4), spacing=(0.5, 1.0, 2.0),
                     origin=np.array([-1.0, 0.0, 1.0]),
                     values=np.arange(24, dtype=float).reshape(2, 3, 4))
    path = tmp_path / "g.bin"
    write_voxels(grid, path)
    raw = path.read_bytes()
    assert raw[:64].decode().startswith("voxelgrid 1 2 3 4 0.5 1.0 2.0")
    assert raw[63:64] == b"\n"
    back = read_voxels(path)
    # x-fastest payload ordering
    flat = np.frombuffer(raw[64:], dtype="<f4")
    assert flat[0] == grid.values[0, 0, 0]
    assert flat[1] == grid.values[1, 0, 0]
    assert np.allclose(back.values, grid.values)


def test_points_io_roundtrip(tmp_path):
    pts = np.random.default_rng(0).random((17, 3))
    path = tmp_path / "pts.csv"
    write_points(pts, path)
    assert np.array_equal(read_points(path), pts)
    path.write_text("1,2\n")
    with pytest.raises(FormatError, match="line 1"):
        read_points(path)

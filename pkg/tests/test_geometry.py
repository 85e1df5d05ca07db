from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from graspsynth import backend
from graspsynth._fallback import trilinear as py_trilinear
from graspsynth.geometry import (MeshError, PrimitiveShape, SdfError, SdfGrid, build_sdf_grid,
                                 is_watertight, load_mesh, load_mesh_with_properties, make_mesh,
                                 mesh_signed_distance, sample_surface, save_obj, save_ply, sdf_query)
from graspsynth.geometry.shapes import box_mesh, cylinder_mesh, icosphere
from graspsynth.geometry.transforms import random_rotation


def box_sdf(p, half):
    q = np.abs(p) - half
    return np.linalg.norm(np.maximum(q, 0), axis=1) + np.minimum(q.max(axis=1), 0)


@pytest.fixture(scope="module")
def sphere_grid():
    mesh = icosphere(0.05, 3)
    return mesh, build_sdf_grid(mesh, 0.002)


@pytest.fixture(scope="module")
def box_grid():
    mesh = box_mesh([0.1, 0.1, 0.1])
    return mesh, build_sdf_grid(mesh, 0.002)


# -- mesh I/O ---------------------------------------------------------------------

def test_icosphere_obj_roundtrip(tmp_path):
    path = tmp_path / "ico.obj"
    save_obj(path, icosphere(1.0, 2))
    mesh = load_mesh(path)
    assert np.allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0, atol=1e-5)
    assert np.allclose(np.linalg.norm(mesh.face_normals, axis=1), 1.0, atol=1e-6)


def test_zero_area_face_dropped(tmp_path):
    base = icosphere(1.0, 1)
    assert len(base.faces) == 80
    extra = np.array([[0, 0, 0]] * 20)
    extra[:, 1] = 1
    extra[-1] = [0, 1, 1]  # one degenerate triangle
    faces = np.vstack([base.faces, base.faces[:19], extra[-1:]])
    path = tmp_path / "degenerate.obj"
    save_obj(path, make_mesh(base.vertices, base.faces))
    with open(path, "a") as fh:
        for a, b, c in faces[80:] + 1:
            fh.write(f"f {a} {b} {c}\n")
    mesh = load_mesh(path)
    assert len(mesh.faces) == 99
    assert mesh.dropped_faces == 1


def test_cylinder_ply_aabb(tmp_path):
    path = tmp_path / "cyl.ply"
    save_ply(path, cylinder_mesh(0.02, 0.15))
    lo, hi = load_mesh(path).bounds
    assert np.allclose(hi - lo, [0.04, 0.04, 0.15], atol=1e-6)


def test_ascii_ply_with_scalar(tmp_path):
    mesh = box_mesh([1, 1, 1])
    q = np.linspace(0, 1, len(mesh.vertices))
    path = tmp_path / "field.ply"
    save_ply(path, mesh, {"quality": q}, binary=False)
    loaded, props = load_mesh_with_properties(path)
    assert np.allclose(loaded.vertices, mesh.vertices)
    assert np.allclose(props["quality"], q, atol=1e-6)


def test_mesh_errors(tmp_path):
    with pytest.raises(MeshError):
        load_mesh(tmp_path / "missing.obj")
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(MeshError):
        load_mesh(bad)
    flat = tmp_path / "flat.obj"
    flat.write_text("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n")
    with pytest.raises(MeshError):
        load_mesh(flat)
    junk = tmp_path / "junk.ply"
    junk.write_text("not a ply\n")
    with pytest.raises(MeshError):
        load_mesh(junk)


# -- sampling -----------------------------------------------------------------------

def test_cube_face_counts():
    mesh = box_mesh([1.0, 1.0, 1.0])
    s = sample_surface(mesh, 6000, 7)
    normals = mesh.face_normals[s.faces]
    side = np.argmax(np.abs(normals), axis=1) * 2 + (normals.sum(axis=1) > 0)
    counts = np.bincount(side, minlength=6)
    assert np.all(np.abs(counts - 1000) <= 50), counts


def test_single_sample_on_face():
    mesh = icosphere(0.3, 1)
    s = sample_surface(mesh, 1, 3)
    assert len(s) == 1
    b = s.barycentric[0]
    assert np.all(b >= 0) and abs(b.sum() - 1) < 1e-12
    tri = mesh.vertices[mesh.faces[s.faces[0]]]
    assert np.allclose(b @ tri, s.positions[0])


def test_sampling_deterministic():
    mesh = icosphere(0.3, 2)
    a, b = sample_surface(mesh, 500, 11), sample_surface(mesh, 500, 11)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.faces, b.faces)


def test_sampling_area_weighted_chi_square():
    # deliberately uneven triangles
    mesh = cylinder_mesh(0.01, 0.3, segments=12)
    n = 100_000
    s = sample_surface(mesh, n, 5)
    counts = np.bincount(s.faces, minlength=len(mesh.faces))
    expected = n * mesh.areas / mesh.areas.sum()
    assert stats.chisquare(counts, expected).pvalue > 0.01


def test_sample_normals_and_barycentric():
    s = sample_surface(icosphere(0.1, 2), 300, 1)
    assert np.allclose(np.linalg.norm(s.normals, axis=1), 1, atol=1e-6)
    assert np.all(s.barycentric >= 0) and np.allclose(s.barycentric.sum(axis=1), 1)
    p = s[0]
    assert p.face == s.faces[0]


# -- SDF grids ------------------------------------------------------------------------

def test_sphere_grid_examples(sphere_grid):
    _, grid = sphere_grid
    assert sdf_query(grid, [0, 0, 0])[0] == pytest.approx(-0.05, abs=0.002)
    v, g = sdf_query(grid, [0.1, 0, 0])
    assert v == pytest.approx(0.05, abs=0.002)
    assert g[0] > 0.9


def test_grid_invariants(sphere_grid):
    mesh, grid = sphere_grid
    lo, hi = mesh.bounds
    assert np.all(grid.origin <= lo - 2 * grid.h + 1e-12)
    assert np.all(grid.upper >= hi + 2 * grid.h - 1e-12)
    v, _ = grid.query(mesh.vertices)
    assert np.max(np.abs(v)) <= grid.h


def test_box_grid_matches_analytic(box_grid, rng):
    _, grid = box_grid
    p = rng.uniform(-0.07, 0.07, size=(1000, 3))
    v, _ = grid.query(p)
    assert np.max(np.abs(v - box_sdf(p, 0.05))) <= grid.h


def test_grid_gradient_unit_norm(sphere_grid, rng):
    _, grid = sphere_grid
    p = rng.uniform(-0.06, 0.06, size=(500, 3))
    v, g = grid.query(p)
    far = np.abs(v) > 2 * grid.h
    n = np.linalg.norm(g[far], axis=1)
    assert np.all((n > 0.9) & (n < 1.1))


def test_grid_gradient_matches_finite_differences(sphere_grid, rng):
    _, grid = sphere_grid
    p = rng.uniform(-0.06, 0.06, size=(200, 3))
    _, g = grid.query(p)
    eps = 1e-7
    fd = np.stack([(grid.query(p + eps * e)[0] - grid.query(p - eps * e)[0]) / (2 * eps)
                   for e in np.eye(3)], axis=1)
    # cell faces make the interpolant kinked; compare where the two agree in cell
    _, _, _, c0 = grid.query_full(p)
    stable = np.all([grid.query_full(p + s * eps * e)[3] == c0 for e in np.eye(3) for s in (1, -1)], axis=0)
    assert stable.sum() > 150
    assert np.allclose(g[stable], fd[stable], atol=1e-5)


def test_sign_against_ray_parity(box_grid, rng):
    mesh, grid = box_grid
    p = rng.uniform(-0.07, 0.07, size=(200, 3))
    v, _ = grid.query(p)
    keep = np.abs(v) > grid.h
    # ray along +x crosses the box surface once from inside, never from outside
    inside = np.all(np.abs(p) < 0.05, axis=1)
    assert np.array_equal(v[keep] < 0, inside[keep])


def test_outside_extent_is_flagged_and_smooth(sphere_grid):
    _, grid = sphere_grid
    p = np.array([[0.5, 0.0, 0.0], [0.0, 0.0, 0.0]])
    v, g, outside, _ = grid.query_full(p)
    assert outside[0] and not outside[1]
    assert v[0] == pytest.approx(0.45, abs=0.003)
    assert g[0][0] > 0.99


def test_rigid_equivariance_of_rebuilt_grid(rng):
    mesh = box_mesh([0.06, 0.04, 0.08])
    grid = build_sdf_grid(mesh, 0.002)
    R, t = random_rotation(rng), rng.normal(0, 0.05, 3)
    moved = build_sdf_grid(mesh.transformed(R, t), 0.002)
    p = rng.uniform(-0.05, 0.05, size=(200, 3))
    a, _ = grid.query(p)
    b, _ = moved.query(p @ R.T + t)
    assert np.max(np.abs(a - b)) <= 2 * grid.h


def test_non_watertight_mesh_reports(caplog):
    mesh = box_mesh([0.05, 0.05, 0.05])
    open_box = make_mesh(mesh.vertices, mesh.faces[:-1])
    assert not is_watertight(open_box)
    grid = build_sdf_grid(open_box, 0.005)
    assert not grid.watertight
    assert "not watertight" in caplog.text
    assert sdf_query(grid, [0, 0, 0])[0] < 0


def test_grid_size_cap():
    with pytest.raises(SdfError):
        build_sdf_grid(box_mesh([1, 1, 1]), 0.001, max_nodes=1000)
    with pytest.raises(SdfError):
        build_sdf_grid(box_mesh([1, 1, 1]), 0.0)


def test_sdfgrid_file_roundtrip(tmp_path, box_grid):
    _, grid = box_grid
    path = tmp_path / "box.sdfgrid"
    grid.save(path)
    back = SdfGrid.load(path)
    assert np.array_equal(back.values, grid.values)
    assert np.array_equal(back.origin, grid.origin) and back.h == grid.h
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(SdfError):
        SdfGrid.load(path)


def test_mesh_signed_distance_exact():
    mesh = box_mesh([0.1, 0.1, 0.1])
    p = np.array([[0.2, 0, 0], [0, 0, 0], [0.06, 0.06, 0]])
    assert np.allclose(mesh_signed_distance(mesh, p), box_sdf(p, 0.05), atol=1e-12)


# -- primitives ---------------------------------------------------------------------

def test_sphere_primitive_exact():
    s = PrimitiveShape("sphere", {"radius": 0.05})
    v, g = sdf_query(s, [0.1, 0, 0])
    assert v == 0.05 and np.array_equal(g, [1.0, 0.0, 0.0])


def test_capsule_axis_midpoint():
    c = PrimitiveShape("capsule", {"a": [0, 0, 0], "b": [0, 0, 0.1], "radius": 0.01})
    v, g = sdf_query(c, [0, 0, 0.05])
    assert v == pytest.approx(-0.01)
    assert np.linalg.norm(g) == pytest.approx(1.0)


def test_box_primitive_matches_mesh_sdf(rng):
    half = np.array([0.03, 0.02, 0.04])
    b = PrimitiveShape("box", {"half_extents": half})
    p = rng.uniform(-0.06, 0.06, size=(300, 3))
    v, _ = b.query(p)
    assert np.allclose(v, mesh_signed_distance(box_mesh(2 * half), p), atol=1e-12)


@pytest.mark.parametrize("kind,params", [
    ("sphere", {"radius": 0.0}),
    ("capsule", {"a": [0, 0, 0], "b": [0, 0, 0], "radius": 0.01}),
    ("box", {"half_extents": [0.1, -0.1, 0.1]}),
    ("cone", {}),
])
def test_primitive_validation(kind, params):
    with pytest.raises(SdfError):
        PrimitiveShape(kind, params)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["sphere", "capsule", "box"]),
       st.lists(st.floats(-0.1, 0.1), min_size=3, max_size=3))
def test_primitive_gradient_is_unit_and_consistent(kind, p):
    params = {"sphere": {"radius": 0.03},
              "capsule": {"a": [0, 0, 0], "b": [0.02, 0, 0.05], "radius": 0.01},
              "box": {"half_extents": [0.02, 0.03, 0.01]}}[kind]
    shape = PrimitiveShape(kind, params)
    p = np.array(p)
    v, g = sdf_query(shape, p)
    assert np.linalg.norm(g) == pytest.approx(1.0, abs=1e-9)
    # one small step along the gradient raises the value by about the step
    step = 1e-6
    v2, _ = sdf_query(shape, p + step * g)
    assert v2 - v == pytest.approx(step, abs=2e-7)


# -- compiled kernels against the fallback ------------------------------------------

@pytest.mark.skipif(backend.NAME != "compiled", reason="extension not built")
def test_backends_agree(rng):
    from graspsynth import _core, _fallback

    mesh = icosphere(0.05, 2)
    p = np.ascontiguousarray(rng.uniform(-0.08, 0.08, size=(300, 3)))
    d1, _ = _core.triangle_distances(p, mesh.vertices, mesh.faces)
    d2, _ = _fallback.triangle_distances(p, mesh.vertices, mesh.faces)
    assert np.allclose(d1, d2, atol=1e-14)
    w1 = _core.winding_numbers(p, mesh.vertices, mesh.faces)
    w2 = _fallback.winding_numbers(p, mesh.vertices, mesh.faces)
    assert np.allclose(w1, w2, atol=1e-12)
    grid = build_sdf_grid(mesh, 0.004)
    q = np.ascontiguousarray(rng.uniform(-0.1, 0.1, size=(300, 3)))
    a = _core.trilinear(grid.values, grid.origin, grid.h, q)
    b = py_trilinear(grid.values, grid.origin, grid.h, q)
    for x, y in zip(a, b):
        assert np.allclose(np.asarray(x, dtype=float), np.asarray(y, dtype=float), atol=1e-14)

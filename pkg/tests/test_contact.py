from __future__ import annotations

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graspsynth.contact import (ContactMap, ContactMapError, ScalarContactField, build_contact_map,
                                load_contact_map, manual_contact_map, region_predicate,
                                save_contact_map)
from graspsynth.geometry.sampling import sample_surface
from graspsynth.geometry.shapes import cylinder_mesh, icosphere

BAND = {"type": "slab", "axis": 2, "lo": 0.03, "hi": 0.12}


@pytest.fixture(scope="module")
def sphere_mesh():
    return icosphere(0.05, 2)


@pytest.fixture(scope="module")
def sphere_samples(sphere_mesh):
    return sample_surface(sphere_mesh, 800, 3)


@pytest.fixture(scope="module")
def cyl():
    mesh = cylinder_mesh(0.02, 0.15)
    return mesh, sample_surface(mesh, 2000, 0)


def test_constant_fields(sphere_mesh, sphere_samples):
    ones = ScalarContactField(sphere_mesh, np.ones(len(sphere_mesh.vertices)))
    zeros = ScalarContactField(sphere_mesh, np.zeros(len(sphere_mesh.vertices)))
    assert build_contact_map(ones, sphere_samples, 0.3).n_attractive == len(sphere_samples)
    assert build_contact_map(zeros, sphere_samples, 0.3).n_repulsive == len(sphere_samples)


def test_threshold_boundary_is_attractive(sphere_mesh, sphere_samples):
    field = ScalarContactField(sphere_mesh, np.full(len(sphere_mesh.vertices), 0.3))
    cmap = build_contact_map(field, sphere_samples, 0.3)
    assert np.all(cmap.labels == 1)


def test_field_is_clamped(sphere_mesh):
    field = ScalarContactField(sphere_mesh, np.linspace(-2, 3, len(sphere_mesh.vertices)))
    assert field.values.min() == 0.0 and field.values.max() == 1.0


def test_field_interpolates_barycentrically(sphere_mesh, sphere_samples):
    # a linear vertex field is reproduced exactly by barycentric interpolation
    v = sphere_mesh.vertices
    field = ScalarContactField(sphere_mesh, 0.5 + 4 * v[:, 2])
    expected = 0.5 + 4 * sphere_samples.positions[:, 2]
    assert np.allclose(field.at(sphere_samples), expected, atol=1e-12)


def test_field_mesh_mismatch(sphere_mesh, sphere_samples):
    with pytest.raises(ContactMapError):
        ScalarContactField(sphere_mesh, np.ones(3))
    other = icosphere(0.05, 1)
    field = ScalarContactField(other, np.ones(len(other.vertices)))
    with pytest.raises(ContactMapError):
        field.at(sphere_samples)


@pytest.mark.parametrize("tau", [0.0, 1.0, -0.1, 1.5])
def test_tau_out_of_range(sphere_mesh, sphere_samples, tau):
    field = ScalarContactField(sphere_mesh, np.ones(len(sphere_mesh.vertices)))
    with pytest.raises(ContactMapError):
        build_contact_map(field, sphere_samples, tau)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.98), st.floats(0.0, 0.5), st.integers(0, 2**16))
def test_threshold_monotone(tau, bump, seed):
    mesh = icosphere(0.05, 1)
    rng = np.random.default_rng(seed)
    field = ScalarContactField(mesh, rng.random(len(mesh.vertices)))
    samples = sample_surface(mesh, 200, seed)
    low = build_contact_map(field, samples, tau)
    high = build_contact_map(field, samples, min(tau + bump, 0.99))
    assert not np.any((low.labels == -1) & (high.labels == 1))
    assert high.n_attractive + high.n_repulsive == len(high)


def test_build_is_deterministic(sphere_mesh, sphere_samples):
    field = ScalarContactField(sphere_mesh, np.linspace(0, 1, len(sphere_mesh.vertices)))
    a = build_contact_map(field, sphere_samples, 0.4)
    b = build_contact_map(field, sphere_samples, 0.4)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.positions, b.positions)


# -- manual regions ----------------------------------------------------------------------

def test_band_labels(cyl):
    mesh, samples = cyl
    cmap = manual_contact_map(mesh, samples, [(region_predicate(BAND), 1)])
    z = samples.positions[:, 2]
    inside = (z >= 0.03) & (z <= 0.12)
    assert np.array_equal(cmap.labels == 1, inside)
    caps = np.abs(samples.normals[:, 2]) > 0.99
    assert np.all(cmap.labels[caps] == -1)


def test_empty_regions_warn(cyl, caplog):
    mesh, samples = cyl
    with caplog.at_level(logging.WARNING):
        cmap = manual_contact_map(mesh, samples, [])
    assert cmap.n_repulsive == len(cmap)
    assert "no contact regions" in caplog.text


def test_later_region_wins(cyl):
    mesh, samples = cyl
    repel = region_predicate({"type": "slab", "axis": 2, "lo": 0.05, "hi": 0.07})
    cmap = manual_contact_map(mesh, samples, [(region_predicate(BAND), 1), (repel, -1)])
    z = samples.positions[:, 2]
    assert np.all(cmap.labels[(z >= 0.05) & (z <= 0.07)] == -1)
    assert np.all(cmap.labels[(z >= 0.08) & (z <= 0.12)] == 1)


@pytest.mark.parametrize("spec", [
    {"type": "sphere", "center": [0, 0, 0.075], "radius": 0.03},
    {"type": "box", "lo": [0, -1, 0], "hi": [1, 1, 1]},
    {"type": "all"},
])
def test_region_kinds(cyl, spec):
    mesh, samples = cyl
    pred = region_predicate(spec)
    mask = pred(samples.positions)
    assert mask.dtype == bool and len(mask) == len(samples)
    assert 0 < mask.sum() <= len(samples)


def test_unknown_region():
    with pytest.raises(ContactMapError):
        region_predicate({"type": "blob"})


def test_bad_region_label(cyl):
    mesh, samples = cyl
    with pytest.raises(ContactMapError):
        manual_contact_map(mesh, samples, [(region_predicate(BAND), 2)])


# -- ContactMap -------------------------------------------------------------------------

def test_contactmap_validation():
    with pytest.raises(ContactMapError):
        ContactMap(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))
    with pytest.raises(ContactMapError):
        ContactMap(np.zeros((2, 3)), np.zeros((2, 3)), [1, 0])
    with pytest.raises(ContactMapError):
        ContactMap(np.zeros((2, 3)), np.zeros((1, 3)), [1, 1])


def test_all_repulsive_warns(caplog):
    with caplog.at_level(logging.WARNING):
        ContactMap(np.zeros((1, 3)), [[0, 0, 1]], [-1])
    assert "no attractive" in caplog.text


def test_transformed_moves_points_and_normals(band_map, rng):
    from graspsynth.geometry.transforms import random_rotation

    R, t = random_rotation(rng), rng.normal(size=3)
    moved = band_map.transformed(R, t)
    assert np.allclose(moved.positions, band_map.positions @ R.T + t, atol=1e-6)
    assert np.allclose(np.linalg.norm(moved.normals, axis=1), 1.0, atol=1e-6)
    assert np.array_equal(moved.labels, band_map.labels)


# -- files ----------------------------------------------------------------------------

def test_roundtrip_bit_exact(tmp_path, rng):
    n = 10_000
    cmap = ContactMap(rng.normal(size=(n, 3)), rng.normal(size=(n, 3)), rng.choice([-1, 1], n),
                      0.3, "random points")
    path = tmp_path / "big.contactmap"
    save_contact_map(cmap, path)
    back = load_contact_map(path)
    assert np.array_equal(back.positions, cmap.positions)
    assert np.array_equal(back.normals, cmap.normals)
    assert np.array_equal(back.labels, cmap.labels)
    assert back.tau_t == 0.3 and back.source == "random points"


def test_roundtrip_without_tau(tmp_path, band_map):
    path = tmp_path / "band.contactmap"
    save_contact_map(band_map, path)
    back = load_contact_map(path)
    assert back.tau_t is None and back.source == "manual"
    assert back.summary() == band_map.summary()


def test_file_layout(tmp_path):
    cmap = ContactMap([[1, 2, 3]], [[0, 0, 1]], [1], 0.3, "x")
    path = tmp_path / "one.contactmap"
    save_contact_map(cmap, path)
    raw = path.read_bytes()
    header, _, body = raw.partition(b"end_header\n")
    assert header.startswith(b"contactmap 1\nN 1\n")
    assert len(body) == 25
    assert np.frombuffer(body[:12], "<f4").tolist() == [1, 2, 3]
    assert body[24] == 1


def test_empty_file(tmp_path):
    path = tmp_path / "empty.contactmap"
    path.write_bytes(b"")
    with pytest.raises(ContactMapError, match="empty"):
        load_contact_map(path)


def test_version_mismatch(tmp_path, band_map):
    path = tmp_path / "v.contactmap"
    save_contact_map(band_map, path)
    path.write_bytes(path.read_bytes().replace(b"contactmap 1", b"contactmap 9", 1))
    with pytest.raises(ContactMapError, match="version"):
        load_contact_map(path)


def test_truncated_file(tmp_path, band_map):
    path = tmp_path / "t.contactmap"
    save_contact_map(band_map, path)
    path.write_bytes(path.read_bytes()[:-7])
    with pytest.raises(ContactMapError, match="records"):
        load_contact_map(path)


def test_not_a_contactmap(tmp_path):
    path = tmp_path / "x.contactmap"
    path.write_bytes(b"hello\nend_header\n")
    with pytest.raises(ContactMapError):
        load_contact_map(path)

import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import random_box, random_transform, tetra, unit_cube
from jointforge.errors import DegenerateInputError, EmptyMeshError, MeshError, MeshParseError
from jointforge.geom import (RigidTransform, SpatialIndex, TriMesh, farthest_point_sample,
                             load_mesh, mesh_intersects, nearest_surface_distance, pca,
                             rotation_about, save_mesh, signed_distance)

seeds = st.integers(0, 2**32 - 1)

CUBE_OBJ = """\
v -0.5 -0.5 -0.5
v 0.5 -0.5 -0.5
v 0.5 0.5 -0.5
v -0.5 0.5 -0.5
v -0.5 -0.5 0.5
v 0.5 -0.5 0.5
v 0.5 0.5 0.5
v -0.5 0.5 0.5
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


def test_load_unit_cube_obj(tmp_path):
    p = tmp_path / "cube.obj"
    p.write_text(CUBE_OBJ)
    m = load_mesh(p)
    assert (m.n_vertices, m.n_faces) == (8, 12)
    assert m.dropped_faces == 0
    assert m.is_watertight()


def test_degenerate_face_dropped(tmp_path, caplog):
    p = tmp_path / "cube.obj"
    p.write_text(CUBE_OBJ + "f 1 1 2\n")
    with caplog.at_level(logging.WARNING):
        m = load_mesh(p)
    assert m.n_faces == 12 and m.dropped_faces == 1
    assert "dropped 1" in caplog.text


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_mesh(tmp_path / "missing.obj")
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n")
    with pytest.raises(MeshParseError) as e:
        load_mesh(bad)
    assert e.value.line == 4
    empty = tmp_path / "empty.obj"
    empty.write_text("v 0 0 0\n")
    with pytest.raises(EmptyMeshError):
        load_mesh(empty)


@pytest.mark.parametrize("fmt", ["obj", "ply", "stl"])
def test_save_load_roundtrip(tmp_path, fmt, rng):
    m = random_box(rng)
    p = tmp_path / f"m.{fmt}"
    save_mesh(m, p)
    back = load_mesh(p)
    if fmt == "stl":
        # STL stores float32 triangle soup; compare the welded geometry loosely
        assert back.n_faces == m.n_faces
        assert np.allclose(np.sort(back.triangles.reshape(-1, 3), 0),
                           np.sort(m.triangles.reshape(-1, 3), 0), atol=1e-6)
    else:
        assert np.array_equal(back.vertices, m.vertices)
        assert np.array_equal(back.faces, m.faces)


def test_ascii_ply_roundtrip(tmp_path, rng):
    m = tetra(rng)
    save_mesh(m, tmp_path / "a.ply", binary=False)
    back = load_mesh(tmp_path / "a.ply")
    assert np.array_equal(back.vertices, m.vertices) and np.array_equal(back.faces, m.faces)


def test_synth_drawer_ply_roundtrip(tmp_path):
    from jointforge import synth
    a = synth.generate(synth.TemplateSpec("drawer_cabinet", seed=1))
    m = a.tree["drawer"].mesh
    save_mesh(m, tmp_path / "d.ply")
    back = load_mesh(tmp_path / "d.ply")
    assert back.content_hash() == m.content_hash()


def test_trimesh_invariants():
    with pytest.raises(MeshError):
        TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])
    with pytest.raises(MeshError):
        TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 1]])
    with pytest.raises(MeshError):
        TriMesh([[0, 0, np.nan], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    with pytest.raises(EmptyMeshError):
        SpatialIndex(TriMesh(np.zeros((3, 3)), np.zeros((0, 3), int)))


def test_cube_distance_examples():
    idx = SpatialIndex(unit_cube())
    d, _ = nearest_surface_distance(idx, [0.0, 0.0, 0.0])
    assert d == pytest.approx(0.5, abs=1e-12)
    d, cp = nearest_surface_distance(idx, [2.0, 0.0, 0.0])
    assert d == pytest.approx(1.5, abs=1e-12)
    assert np.allclose(cp, [0.5, 0.0, 0.0], atol=1e-12)
    assert signed_distance(idx, [0.0, 0.0, 0.0]) == pytest.approx(-0.5, abs=1e-12)
    assert signed_distance(idx, [1.0, 0.0, 0.0]) == pytest.approx(0.5, abs=1e-12)


def test_open_mesh_flagged():
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    idx = SpatialIndex(m)
    assert idx.approximate_sign and not idx.watertight
    assert SpatialIndex(unit_cube()).watertight


def test_cube_intersection_examples():
    a = unit_cube()
    assert not mesh_intersects(a, a, RigidTransform(np.eye(3), [2.0, 0.0, 0.0]))
    assert mesh_intersects(a, a, RigidTransform(np.eye(3), [0.5, 0.0, 0.0]))
    # face-to-face touching counts as intersecting
    assert mesh_intersects(a, a, RigidTransform(np.eye(3), [1.0, 0.0, 0.0]))


def test_pca_examples(rng):
    t = np.linspace(0, 1, 50)
    seg = np.stack([0 * t, 0 * t, t], 1)
    assert abs(pca(seg).primary @ [0, 0, 1]) > 1 - 1e-9
    a = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    ring = np.stack([0.1 * np.cos(a), 0.1 * np.sin(a), 0 * a], 1)
    assert abs(pca(ring).normal @ [0, 0, 1]) > 1 - 1e-9
    g = rng.normal(size=(10000, 3)) * np.sqrt([4.0, 1.0, 0.25])
    assert np.allclose(pca(g).eigenvalues, [4.0, 1.0, 0.25], rtol=0.05)
    with pytest.raises(DegenerateInputError):
        pca(np.zeros((5, 3)))
    with pytest.raises(DegenerateInputError):
        pca(np.zeros((2, 3)))


def test_pca_sign_convention(rng):
    r = pca(rng.normal(size=(100, 3)))
    for k in range(3):
        v = r.eigenvectors[:, k]
        assert v[np.argmax(np.abs(v))] > 0
    assert np.allclose(r.eigenvectors.T @ r.eigenvectors, np.eye(3), atol=1e-9)
    assert np.all(np.diff(r.eigenvalues) <= 0)


def test_farthest_point_sample(rng):
    p = rng.normal(size=(300, 3))
    i = farthest_point_sample(p, 50)
    assert len(i) == 50 and len(set(i.tolist())) == 50
    assert np.array_equal(i, farthest_point_sample(p, 50))
    assert len(farthest_point_sample(p[:10], 50)) == 10


# -- properties -----------------------------------------------------------------

@given(seeds)
def test_pca_rigid_equivariance(seed):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(40, 3)) * rng.uniform(0.1, 2.0, 3)
    t = random_transform(rng, 2.0)
    a, b = pca(p), pca(t.apply(p))
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-9)
    gap = np.min(np.abs(np.diff(a.eigenvalues)))
    if gap > 1e-3:
        mapped = t.rotation @ a.eigenvectors
        assert np.all(np.abs(np.sum(mapped * b.eigenvectors, 0)) > 1 - 1e-6)


@given(seeds)
def test_signed_distance_lipschitz(seed):
    rng = np.random.default_rng(seed)
    m = random_box(rng) if seed % 2 else tetra(rng)
    idx = SpatialIndex(m)
    p = rng.uniform(-0.6, 0.6, (30, 3))
    q = p + rng.normal(scale=rng.uniform(0.001, 0.2), size=p.shape)
    sp, sq = idx.signed_distance(p), idx.signed_distance(q)
    assert np.all(np.abs(sp - sq) <= np.linalg.norm(p - q, axis=1) + 1e-9)


@given(seeds)
def test_distance_zero_on_surface(seed):
    rng = np.random.default_rng(seed)
    m = random_box(rng) if seed % 2 else tetra(rng)
    idx = SpatialIndex(m)
    f = rng.integers(0, m.n_faces, 20)
    w = rng.dirichlet(np.ones(3), 20)
    on = np.einsum("nk,nkj->nj", w, m.triangles[f])
    assert np.all(idx.distance(on) < 1e-9)
    off = on + rng.normal(size=on.shape) * 0.01 + 1e-3
    d, cp = nearest_surface_distance(idx, off)
    assert np.all(d > 0)
    assert np.all(idx.distance(cp) < 1e-9)


@given(seeds)
def test_mesh_intersects_symmetric(seed):
    rng = np.random.default_rng(seed)
    a = tetra(rng)
    b = tetra(rng, rng.uniform(-0.4, 0.4, 3))
    t = random_transform(rng, 0.3)
    assert mesh_intersects(a, b, t) == mesh_intersects(b, a, t.inverse())


@given(seeds)
def test_transform_algebra(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_transform(rng, 1.0) for _ in range(3))
    assert np.allclose(a.rotation @ a.rotation.T, np.eye(3), atol=1e-9)
    p = rng.normal(size=(5, 3))
    assert np.allclose(((a @ b) @ c).apply(p), (a @ (b @ c)).apply(p), atol=1e-9)
    assert np.allclose((a @ a.inverse()).apply(p), p, atol=1e-9)
    ax = rng.normal(size=3)
    r = rotation_about(ax, rng.uniform(-np.pi, np.pi))
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-12) and np.linalg.det(r) == pytest.approx(1)


def test_rigid_transform_validates():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

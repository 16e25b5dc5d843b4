import numpy as np
import pytest
from hypothesis import given, strategies as st

from jointforge import synth
from jointforge.asset import load_decomposition
from jointforge.contact import extract_contact
from jointforge.errors import InvalidSpecError
from jointforge.geom import SpatialIndex, mesh_intersects, RigidTransform

seeds = st.integers(0, 2**16)


def test_deterministic(tmp_path):
    spec = synth.TemplateSpec("laptop", seed=11, pose=synth.random_pose(11),
                              noise=synth.Noise(0.002, 0.1))
    a = synth.generate(spec, tmp_path / "a")
    b = synth.generate(spec, tmp_path / "b")
    for p, q in zip(a.tree.parts, b.tree.parts):
        assert p.mesh.content_hash() == q.mesh.content_hash()
    assert (tmp_path / "a" / "gt.json").read_bytes() == (tmp_path / "b" / "gt.json").read_bytes()
    c = synth.generate(synth.spec_with(spec, seed=12))
    assert c.tree["lid"].mesh.content_hash() != a.tree["lid"].mesh.content_hash()


@pytest.mark.parametrize("kw", [dict(template="teapot"),
                                dict(template="laptop", dimensions={"colour": 1.0}),
                                dict(template="laptop", dimensions={"width": -0.1}),
                                dict(template="laptop", noise=synth.Noise(-1.0)),
                                dict(template="laptop", noise=synth.Noise(0.0, 0.7))])
def test_invalid_specs(kw):
    with pytest.raises(InvalidSpecError):
        synth.generate(synth.TemplateSpec(**kw))


def test_dimension_override():
    a = synth.generate(synth.TemplateSpec("drawer_cabinet", {"depth": 0.33}, seed=2))
    assert a.dimensions["depth"] == 0.33
    assert a.gt("drawer").limits == (0.0, 0.33)
    lo, hi = a.tree["drawer"].mesh.bounds
    assert hi[0] - lo[0] == pytest.approx(0.33)


@pytest.mark.parametrize("template", synth.TEMPLATES)
def test_templates_valid(template):
    a = synth.generate(synth.TemplateSpec(template, seed=5))
    t = a.tree
    assert [g.part_id for g in a.gt_joints] == t.movable()
    for pid in t.movable():
        child, parent = t[pid].mesh, t[t[pid].parent_id].mesh
        assert len(extract_contact(child, parent, 0.01, pid)) > 0
        assert all(t[pid].mesh.is_watertight() for pid in t.ids)
        assert t[pid].joint_type is a.gt(pid).joint_type
    for i, p in enumerate(t.ids):
        for q in t.ids[i + 1:]:
            assert not mesh_intersects(t[p].mesh, t[q].mesh, RigidTransform.identity()), (p, q)


@pytest.mark.parametrize("template", synth.TEMPLATES)
def test_manifest_roundtrip(tmp_path, template):
    a = synth.generate(synth.TemplateSpec(template, seed=1), tmp_path)
    back = load_decomposition(a.manifest_path)
    assert back.topology() == a.tree.topology()
    gt = synth.load_gt(tmp_path / "gt.json")
    assert [g.to_dict() for g in gt] == [g.to_dict() for g in a.gt_joints]


def test_noisy_asset_keeps_clean_copy(tmp_path):
    a = synth.generate(synth.TemplateSpec("hinged_door", seed=0,
                                          noise=synth.Noise(0.002, 0.1)), tmp_path)
    assert a.clean_tree is not None and a.clean_manifest_path.exists()
    clean = synth.generate(synth.TemplateSpec("hinged_door", seed=0))
    for p in clean.tree.parts:
        assert a.clean_tree[p.part_id].mesh.content_hash() == p.mesh.content_hash()


def test_suite_cycles_templates():
    specs = synth.suite(20)
    assert [s.template for s in specs[:5]] == list(synth.TEMPLATES[:5])
    assert {s.template for s in specs} == set(synth.TEMPLATES[:5])
    assert len({s.seed for s in specs}) == 20


def test_part_labels():
    a = synth.generate(synth.TemplateSpec("lamp", seed=0))
    lab = synth.part_labels(a.tree)
    assert lab["parts"] == a.tree.ids and lab["static"] == [0]
    assert len(lab["labels"]) == sum(p.mesh.n_vertices for p in a.tree.parts)


# -- perturbation ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def door():
    return synth.generate(synth.TemplateSpec("hinged_door", seed=0))


def test_outlier_count_exact(door):
    n = synth.perturb(door, synth.Noise(0.0, 0.1), seed=3)
    for p in door.tree.parts:
        moved = np.any(n.tree[p.part_id].mesh.vertices != p.mesh.vertices, axis=1)
        assert np.count_nonzero(moved) == int(np.floor(0.1 * p.mesh.n_vertices))
        d = np.abs(n.tree[p.part_id].mesh.vertices - p.mesh.vertices)
        assert d.max() <= 0.025


def test_jitter_bounded(door):
    n = synth.perturb(door, synth.Noise(0.002, 0.0), seed=3)
    for p in door.tree.parts:
        d = n.tree[p.part_id].mesh.vertices - p.mesh.vertices
        assert np.abs(d).max() < 6 * 0.002
        assert np.std(d) == pytest.approx(0.002, rel=0.1)
        assert np.array_equal(n.tree[p.part_id].mesh.faces, p.mesh.faces)


def test_zero_noise_is_identity(door):
    n = synth.perturb(door, synth.Noise(), seed=3)
    for p in door.tree.parts:
        assert np.array_equal(n.tree[p.part_id].mesh.vertices, p.mesh.vertices)
    assert n.gt_joints is door.gt_joints


@given(seed=seeds)
def test_pose_maps_geometry_and_joints(seed):
    template = synth.TEMPLATES[seed % len(synth.TEMPLATES)]
    if template in ("lamp", "multi_drawer"):
        template = "spin_knob"
    pose = synth.random_pose(seed)
    a = synth.generate(synth.TemplateSpec(template, seed=seed % 7))
    b = synth.generate(synth.TemplateSpec(template, seed=seed % 7, pose=pose))
    for p in a.tree.parts:
        assert np.allclose(pose.apply(p.mesh.vertices), b.tree[p.part_id].mesh.vertices,
                           atol=1e-12)
    for g, h in zip(a.gt_joints, b.gt_joints):
        assert np.allclose(pose.apply_vector(g.axis), h.axis, atol=1e-12)
        if g.pivot is not None:
            assert np.allclose(pose.apply(g.pivot), h.pivot, atol=1e-12)
        assert g.limits == h.limits
    # distances between parts are pose invariant
    pid = a.tree.movable()[0]
    par = a.tree[pid].parent_id
    da = SpatialIndex(a.tree[par].mesh).distance(a.tree[pid].mesh.vertices[:50])
    db = SpatialIndex(b.tree[par].mesh).distance(b.tree[pid].mesh.vertices[:50])
    assert np.allclose(da, db, atol=1e-9)

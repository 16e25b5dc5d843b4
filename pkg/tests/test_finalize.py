import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import tetra
from jointforge import synth
from jointforge.asset import JointEstimate, JointType
from jointforge.errors import InvalidTreeError, UnsetLimitsError, UrdfError
from jointforge.finalize import (LimitSweepConfig, emit_urdf, estimate_limits,
                                 estimate_prismatic_limits, estimate_revolute_limits, parse_urdf,
                                 revolute_transform)
from jointforge.geom import RigidTransform, SpatialIndex, merge_meshes, mesh_intersects
from jointforge.geom.primitives import box

seeds = st.integers(0, 2**32 - 1)
STEP = np.radians(1.0)


def env(asset, pid):
    t = asset.tree
    return (t[pid].mesh, merge_meshes([t[i].mesh for i in t.outside_subtree(pid)]),
            t[t[pid].parent_id].mesh)


def sweep(asset, pid, joint=None, cfg=LimitSweepConfig()):
    moving, static, parent = env(asset, pid)
    j = (joint or asset.gt(pid)).replace(limits=None)
    return estimate_limits(j, moving, static, None, cfg, parent)


@pytest.fixture(scope="module")
def drawer():
    return synth.generate(synth.TemplateSpec("drawer_cabinet", seed=0))


def test_free_lid_full_turn():
    lid = box([0.0, -0.1, -0.005], [0.3, 0.1, 0.005], 0.05)
    far = box([2.0, 2.0, 2.0], [2.2, 2.2, 2.2], 0.2)
    j = JointEstimate("lid", JointType.HINGE, [0, 1, 0], [0, 0, 0])
    sw = estimate_revolute_limits(j, lid, far)
    assert sw.status == "ok" and sw.limits == (-np.pi, np.pi)


def test_door_stops_match_ground_truth():
    a = synth.generate(synth.TemplateSpec("hinged_door", seed=0))
    lo, hi = sweep(a, "door")
    glo, ghi = a.gt("door").limits
    assert abs(hi - ghi) <= STEP and abs(lo - glo) <= STEP


def test_drawer_range(drawer):
    sw = sweep(drawer, "drawer")
    depth = drawer.dimensions["depth"]
    assert sw.status == "ok"
    assert abs(sw.limits[0]) <= 0.005
    assert abs(sw.limits[1] - depth) <= 2 * 0.005
    assert "contact_lost" in sw.evidence


def test_drawer_axis_oriented_outward(drawer):
    g = drawer.gt("drawer")
    sw = sweep(drawer, "drawer", g.replace(axis=-g.axis))
    assert np.allclose(sw.axis, g.axis)
    assert sw.limits[1] > 0.3


def test_wrong_axis_drawer_is_stuck(drawer):
    sw = sweep(drawer, "drawer", drawer.gt("drawer").replace(axis=[0.0, 0.0, 1.0]))
    lo, hi = sw.limits
    assert hi - lo < 0.01


def test_halving_step_refines(drawer):
    coarse = sweep(drawer, "drawer")
    fine = sweep(drawer, "drawer", cfg=LimitSweepConfig(linear_step=0.0025))
    # the coarse grid is a subset of the fine one
    assert coarse.limits[1] <= fine.limits[1] < coarse.limits[1] + 0.005
    assert coarse.limits[0] - 0.005 < fine.limits[0] <= coarse.limits[0]


def test_dmax_monotone_in_tau(drawer):
    d = [sweep(drawer, "drawer", cfg=LimitSweepConfig(contact_tau=t)).limits[1]
         for t in (0.005, 0.01, 0.02, 0.04)]
    assert np.all(np.diff(d) >= 0)


def test_rest_collision_status():
    a = box([0, 0, 0], [1, 1, 1], 0.5)
    b = box([0.5, 0, 0], [1.5, 1, 1], 0.5)
    sw = estimate_prismatic_limits(JointEstimate("a", JointType.PRISMATIC, [1, 0, 0]), a, b)
    assert sw.status == "rest_collision" and sw.limits == (0.0, 0.0)
    h = JointEstimate("a", JointType.HINGE, [0, 0, 1], [0, 0, 0])
    assert estimate_revolute_limits(h, a, b).status == "rest_collision"


def test_no_outward_contact():
    a = box([0, 0, 0], [1, 1, 1], 0.5)
    wall = box([-1, 0, 0], [-0.2, 1, 1], 0.5)
    sw = estimate_prismatic_limits(JointEstimate("a", JointType.PRISMATIC, [1, 0, 0]), a, wall,
                                   cfg=LimitSweepConfig(linear_step=0.05, max_travel=0.5))
    assert sw.status == "no_outward_contact"
    assert sw.limits[1] == 0.0


def test_sweep_config_validation():
    with pytest.raises(ValueError):
        LimitSweepConfig(angular_step=0.0)
    with pytest.raises(ValueError):
        LimitSweepConfig(max_angle=4.0)


def test_wrong_joint_kind():
    m = box([0, 0, 0], [1, 1, 1], 0.5)
    with pytest.raises(ValueError):
        estimate_revolute_limits(JointEstimate("a", JointType.PRISMATIC, [1, 0, 0]), m, m)
    with pytest.raises(ValueError):
        estimate_prismatic_limits(JointEstimate("a", JointType.HINGE, [1, 0, 0], [0, 0, 0]), m, m)


# -- URDF ------------------------------------------------------------------------

def limited(asset):
    out = []
    for g in asset.gt_joints:
        out.append(g.replace(axis=sweep(asset, g.part_id).axis,
                             limits=sweep(asset, g.part_id).limits))
    return out


def test_urdf_roundtrip(tmp_path, drawer):
    joints = limited(drawer)
    u = emit_urdf(drawer.tree, joints, tmp_path, name="drawer")
    back = parse_urdf(u.path)
    assert back.topology() == {"root": "cabinet", "parents": {"drawer": "cabinet"}}
    assert back.document == u.document
    (j,) = back.joint_estimates()
    assert j.part_id == "drawer" and j.joint_type is JointType.PRISMATIC
    assert np.array_equal(j.axis, joints[0].axis)
    assert j.limits == tuple(joints[0].limits)
    assert (tmp_path / "meshes" / "drawer.obj").exists()
    assert all(isinstance(v, float) for ln in back.links for v in ln.inertia)
    assert back.links[0].inertia == u.links[0].inertia
    assert parse_urdf(u.document).topology() == back.topology()


def test_urdf_deterministic(tmp_path, drawer):
    joints = limited(drawer)
    a = emit_urdf(drawer.tree, joints, tmp_path / "a").document
    b = emit_urdf(drawer.tree, joints, tmp_path / "b").document
    assert a == b
    for name in ("cabinet.obj", "drawer.obj"):
        assert (tmp_path / "a" / "meshes" / name).read_bytes() == \
            (tmp_path / "b" / "meshes" / name).read_bytes()


def test_continuous_knob(tmp_path):
    a = synth.generate(synth.TemplateSpec("spin_knob", seed=0))
    u = emit_urdf(a.tree, limited(a), tmp_path)
    j = u.joint_for("knob")
    assert j.type == "continuous" and j.limits is None
    back = parse_urdf(u.path)
    (est,) = back.joint_estimates({"knob": JointType.SPIN.value})
    assert est.joint_type is JointType.SPIN and est.limits == (-np.pi, np.pi)
    assert np.allclose(est.pivot, a.gt("knob").pivot)


def test_lamp_structure(tmp_path):
    a = synth.generate(synth.TemplateSpec("lamp", seed=0))
    u = parse_urdf(emit_urdf(a.tree, limited(a), tmp_path).path)
    assert len(u.links) == 4 and len(u.joints) == 3
    assert u.topology()["parents"] == {"arm_lower": "base", "arm_upper": "arm_lower",
                                       "head": "arm_upper"}
    org = u.link_origins()
    for g in a.gt_joints:
        assert np.allclose(org[g.part_id], g.pivot, atol=1e-12)


def test_emit_rejects_bad_inputs(tmp_path, drawer):
    g = drawer.gt("drawer")
    with pytest.raises(UnsetLimitsError):
        emit_urdf(drawer.tree, [g.replace(limits=None)], tmp_path)
    with pytest.raises(InvalidTreeError):
        emit_urdf(drawer.tree, [], tmp_path)
    with pytest.raises(InvalidTreeError):
        emit_urdf(drawer.tree, [g, g.replace(part_id="ghost")], tmp_path)


def test_parse_errors():
    with pytest.raises(UrdfError):
        parse_urdf("<robot><joint")
    with pytest.raises(UrdfError):
        parse_urdf("<link/>")
    with pytest.raises(UrdfError):
        parse_urdf('<robot><joint name="j" type="floating"/></robot>')


# -- properties ----------------------------------------------------------------------

@given(seeds)
def test_poses_inside_limits_collision_free(seed):
    rng = np.random.default_rng(seed)
    moving = tetra(rng, size=0.3)
    static = tetra(rng, rng.uniform(-0.5, 0.5, 3), size=0.3)
    if mesh_intersects(static, moving, RigidTransform.identity()):
        return
    step = np.radians(10.0)
    pivot = moving.vertices.mean(0) + rng.normal(scale=0.2, size=3)
    axis = rng.normal(size=3)
    j = JointEstimate("m", JointType.HINGE, axis, pivot)
    sw = estimate_revolute_limits(j, moving, SpatialIndex(static),
                                  LimitSweepConfig(angular_step=step))
    lo, hi = sw.limits
    assert lo <= 0 <= hi
    for theta in np.arange(np.ceil(lo / step), np.floor(hi / step) + 1) * step:
        assert not mesh_intersects(static, moving, revolute_transform(j.axis, pivot, theta))
    for key, bound in (("first_hit_positive", hi), ("first_hit_negative", lo)):
        v = sw.evidence[key]
        if v is not None:
            assert abs(v - bound) == pytest.approx(step)
            assert mesh_intersects(static, moving, revolute_transform(j.axis, pivot, v))

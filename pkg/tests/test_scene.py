import math

import numpy as np
import pytest

from graspfield.scene import (
    CLUTTER_MAX_PENETRATION,
    DEFAULT_WORKSPACE,
    GRASP_DEPTH,
    GRIPPER_OPENING,
    GraspOutcome,
    PrismObject,
    R_TOL,
    SIMPLE_MIN_SEPARATION,
    SLIDE_MARGIN,
    Scene,
    SceneGenerationError,
    T_TOL,
    apply_outcome,
    demonstrate_grasp,
    enumerate_valid_grasps,
    generate_scene,
    grasp_errors,
    load_scene,
    nearest_valid_grasp,
    negative_grasp_error,
    object_grasp_families,
    object_penetration,
    object_sdf,
    save_scene,
    scene_from_dict,
    scene_to_dict,
    simulate_grasp,
)
from graspfield.se3 import Pose6, quat_from_axis_angle, quat_multiply, quat_rotate, random_quaternion


def test_prism_object_validation():
    with pytest.raises(ValueError):
        PrismObject("sphere", (0.1, 0.1, 0.1), Pose6.identity())
    with pytest.raises(ValueError):
        PrismObject("box", (0.1, 0.1), Pose6.identity())
    with pytest.raises(ValueError):
        PrismObject("box", (0.1, -0.1, 0.1), Pose6.identity())
    with pytest.raises(ValueError):
        PrismObject("t_shape", (0.1, 0.1, 0.1), Pose6.identity())


def test_grasp_outcome_validation():
    with pytest.raises(ValueError):
        GraspOutcome("success")
    with pytest.raises(ValueError):
        GraspOutcome("miss", object_index=2)
    GraspOutcome("miss")
    GraspOutcome("collision", 0)


def test_box_families_hand_checked():
    # lx=0.10 exceeds the gripper opening, ly=0.05 fits: one top-down family
    # sliding along x, plus two side families approaching along +-x.
    obj = PrismObject("box", (0.10, 0.05, 0.06), Pose6.identity())
    fams = object_grasp_families(obj)
    assert len(fams) == 3
    top = [f for f in fams if np.allclose(f.axis, [1.0, 0.0, 0.0])]
    assert len(top) == 1
    (top,) = top
    assert np.allclose(top.anchor, [0.0, 0.0, 0.06 - GRASP_DEPTH])
    assert top.lo == pytest.approx(-(0.05 - SLIDE_MARGIN))
    assert top.hi == pytest.approx(0.05 - SLIDE_MARGIN)
    assert len(top.orientations) == 2
    # top-down grasps approach along -z
    for q in top.orientations:
        assert np.allclose(quat_rotate(q, [0.0, 0.0, 1.0]), [0.0, 0.0, -1.0], atol=1e-12)
    side = [f for f in fams if np.allclose(f.axis, [0.0, 0.0, 1.0])]
    assert len(side) == 2
    for f in side:
        assert f.hi == pytest.approx(0.03 - SLIDE_MARGIN)
        assert abs(f.anchor[0]) == pytest.approx(0.05 - GRASP_DEPTH)


def test_wide_box_has_no_families():
    obj = PrismObject("box", (0.1, 0.1, 0.05), Pose6.identity())
    assert GRIPPER_OPENING < 0.1
    assert object_grasp_families(obj) == []


def test_t_shape_families_hand_checked():
    obj = PrismObject("t_shape", (0.12, 0.04, 0.08, 0.04, 0.05), Pose6.identity())
    fams = object_grasp_families(obj)
    assert len(fams) == 3
    arm = [f for f in fams if np.allclose(f.axis, [0.0, 1.0, 0.0])]
    stem = [f for f in fams if np.allclose(f.axis, [1.0, 0.0, 0.0])]
    assert len(arm) == 2 and len(stem) == 1
    # arm families keep the fingers clear of the junction region
    intervals = sorted((f.lo, f.hi) for f in arm)
    assert intervals[0] == pytest.approx((-0.05, -0.035))
    assert intervals[1] == pytest.approx((0.035, 0.05))
    assert (stem[0].lo, stem[0].hi) == pytest.approx((0.035, 0.09))


def test_enumerated_grasps_have_zero_error(box_scene):
    poses = enumerate_valid_grasps(box_scene, trans_resolution=0.01)
    assert poses
    for p in poses:
        t, r = grasp_errors(p, box_scene)
        assert t < 1e-9 and r < 1e-6
        assert negative_grasp_error(p, box_scene) > -1e-8


def test_enumerate_resolution_validation(box_scene):
    with pytest.raises(ValueError):
        enumerate_valid_grasps(box_scene, trans_resolution=0.0)


def test_negative_grasp_error_off_grasp(box_scene):
    rng = np.random.default_rng(5)
    for _ in range(20):
        p = Pose6(rng.uniform(-0.2, 0.2, 3), random_quaternion(rng))
        t, r = grasp_errors(p, box_scene)
        err = negative_grasp_error(p, box_scene)
        assert err == pytest.approx(-0.5 * (t / 0.10 + r / (math.pi / 2)))
        if t > 1e-3 or r > 1e-3:
            assert err < 0


def test_nearest_valid_grasp_idempotent(box_scene, rng):
    for _ in range(10):
        p = Pose6(rng.uniform(-0.2, 0.2, 3), random_quaternion(rng))
        g = nearest_valid_grasp(p, box_scene)
        t, r = grasp_errors(g, box_scene)
        assert t < 1e-9 and r < 1e-6
        g2 = nearest_valid_grasp(g, box_scene)
        assert np.allclose(g.position, g2.position, atol=1e-9)


def test_demonstrate_grasp_valid_and_deterministic(simple_scene):
    d1 = demonstrate_grasp(simple_scene, np.random.default_rng(9))
    d2 = demonstrate_grasp(simple_scene, np.random.default_rng(9))
    assert np.array_equal(d1.as_vec7(), d2.as_vec7())
    t, r = grasp_errors(d1, simple_scene)
    assert t < 1e-9 and r < 1e-6


def test_simulate_grasp_outcomes(box_scene):
    demo = demonstrate_grasp(box_scene, np.random.default_rng(0))
    assert simulate_grasp(box_scene, demo).kind == "success"
    # far away in free space: a miss
    high = Pose6(np.array([-0.25, 0.25, 0.20]), demo.orientation)
    assert simulate_grasp(box_scene, high).kind == "miss"
    # right position but upside-down orientation: not a success
    flipped = Pose6(demo.position, quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), math.pi / 2))
    t, r = grasp_errors(flipped, box_scene)
    assert r > R_TOL
    assert simulate_grasp(box_scene, flipped).kind != "success"


def test_simulate_respects_tolerances(box_scene):
    # a top-down grasp slides horizontally, so a vertical nudge beyond t_tol
    # must leave the success region
    obj = box_scene.objects[0]
    fam = next(f for f in object_grasp_families(obj) if np.allclose(f.axis, [1.0, 0.0, 0.0]))
    pos = obj.pose.transform_point(fam.anchor)
    quat = quat_multiply(obj.pose.orientation, np.asarray(fam.orientations[0]))
    nudged = Pose6(pos + np.array([0.0, 0.0, T_TOL + 0.005]), quat)
    t, _ = grasp_errors(nudged, box_scene)
    assert t > T_TOL
    assert simulate_grasp(box_scene, nudged).kind != "success"


def test_apply_outcome(box_scene, rng):
    after = apply_outcome(box_scene, GraspOutcome("success", 0), rng)
    assert len(after.objects) == 0
    same = apply_outcome(box_scene, GraspOutcome("miss"), rng)
    assert same is box_scene
    bumped = apply_outcome(box_scene, GraspOutcome("collision", 0), rng)
    assert len(bumped.objects) <= 1
    if bumped.objects:
        moved = np.linalg.norm(bumped.objects[0].pose.position - box_scene.objects[0].pose.position)
        assert 0.0 < moved <= 0.03 + 1e-9


def test_generate_scene_deterministic():
    a = generate_scene(42, "simple")
    b = generate_scene(42, "simple")
    assert scene_to_dict(a) == scene_to_dict(b)


def test_generate_simple_scene_properties():
    for seed in range(5):
        scene = generate_scene(seed, "simple")
        assert 1 <= len(scene.objects) <= 5
        centers = [o.pose.position[:2] for o in scene.objects]
        for i in range(len(centers)):
            assert scene.workspace.contains(scene.objects[i].pose.position)
            for j in range(i + 1, len(centers)):
                assert np.linalg.norm(centers[i] - centers[j]) >= SIMPLE_MIN_SEPARATION - 1e-12


def test_generate_clutter_scene_properties():
    for seed in range(3):
        scene = generate_scene(seed, "clutter")
        assert len(scene.objects) == 5
        for i, a in enumerate(scene.objects):
            for b in scene.objects[i + 1:]:
                assert object_penetration(a, b) <= CLUTTER_MAX_PENETRATION + 1e-12


def test_generate_scene_rejects_unknown_kind():
    with pytest.raises(ValueError):
        generate_scene(0, "cosmic")


def test_generate_scene_impossible_raises():
    with pytest.raises(SceneGenerationError):
        generate_scene(0, "simple", n_objects=200)


def test_object_sdf_hand_values():
    obj = PrismObject("box", (0.10, 0.05, 0.06), Pose6.identity())
    pts = np.array([
        [0.0, 0.0, 0.08],   # 2 cm above the top face
        [0.0, 0.0, 0.03],   # center: 2.5 cm inside (nearest face is y)
        [0.06, 0.0, 0.03],  # 1 cm outside the +x face
    ])
    d = object_sdf(obj, pts)
    assert d[0] == pytest.approx(0.02, abs=1e-12)
    assert d[1] == pytest.approx(-0.025, abs=1e-12)
    assert d[2] == pytest.approx(0.01, abs=1e-12)


def test_object_penetration():
    a = PrismObject("box", (0.10, 0.05, 0.06), Pose6.identity())
    b = PrismObject("box", (0.10, 0.05, 0.06), Pose6(np.array([0.02, 0.0, 0.0]), np.array([1.0, 0.0, 0.0, 0.0])))
    c = PrismObject("box", (0.10, 0.05, 0.06), Pose6(np.array([0.30, 0.0, 0.0]), np.array([1.0, 0.0, 0.0, 0.0])))
    # along x the boxes overlap by 0.08, along y by 0.05: depth is the minimum
    assert object_penetration(a, b) == pytest.approx(0.05, abs=1e-12)
    assert object_penetration(a, c) == 0.0


def test_scene_serialization_roundtrip(simple_scene, tmp_path):
    path = tmp_path / "scene.json"
    save_scene(simple_scene, path)
    loaded = load_scene(path)
    assert len(loaded.objects) == len(simple_scene.objects)
    assert np.array_equal(loaded.workspace.min, simple_scene.workspace.min)
    # loading renormalizes quaternions, so compare within one ulp rather than
    # demanding bit equality
    for a, b in zip(loaded.objects, simple_scene.objects):
        assert a.shape == b.shape and a.dims == b.dims and a.color_tag == b.color_tag
        assert np.allclose(a.pose.position, b.pose.position, atol=0.0, rtol=0.0)
        assert np.allclose(a.pose.orientation, b.pose.orientation, atol=1e-15)


def test_scene_from_dict_rejects_bad_quaternion(box_scene):
    data = scene_to_dict(box_scene)
    data["objects"][0]["quaternion"] = [1.0, 1.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        scene_from_dict(data)


def test_default_workspace_on_table():
    assert DEFAULT_WORKSPACE.min[2] == 0.0
    assert np.all(DEFAULT_WORKSPACE.extent > 0)

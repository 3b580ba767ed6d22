import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from articap.errors import DataError, DegenerateInputError, ParameterError
from articap.geometry import rodrigues
from articap.models import (NUM_BETAS, POSE_DIM, ArticulatedObject, CameraParams, HandParams, Mesh, ObjectPose,
                            fps_landmarks, hand_joints, pose_hand, pose_object, project, regress_joints,
                            weak_to_perspective)
from articap.synth import generate_object_asset

from conftest import random_rotvec


def zero_params(**kw):
    p = dict(theta=np.zeros(POSE_DIM), beta=np.zeros(NUM_BETAS), translation=np.zeros(3))
    p.update(kw)
    return HandParams(**p)


def test_zero_params_give_template(hand):
    v = pose_hand(hand, zero_params()).vertices
    assert np.abs(v - hand.template.vertices).max() <= 1e-12


def test_global_rotation_is_rigid(hand, rng):
    for _ in range(10):
        r = random_rotvec(rng)
        theta = np.zeros(POSE_DIM)
        theta[:3] = r
        v = pose_hand(hand, zero_params(theta=theta)).vertices
        expect = hand.template.vertices @ rodrigues(r).T
        assert np.abs(v - expect).max() < 1e-9


def test_global_rotation_equivariance_with_finger_pose(hand, rng):
    theta = rng.normal(scale=0.2, size=POSE_DIM)
    theta[:3] = 0.0
    base = pose_hand(hand, zero_params(theta=theta)).vertices
    r = random_rotvec(rng)
    theta[:3] = r
    rotated = pose_hand(hand, zero_params(theta=theta)).vertices
    assert np.abs(rotated - base @ rodrigues(r).T).max() < 1e-9


def test_first_shape_component_adds_blendshape(hand):
    beta = np.zeros(NUM_BETAS)
    beta[0] = 1.0
    v = pose_hand(hand, zero_params(beta=beta)).vertices
    expect = hand.template.vertices + hand.shape_blendshapes[:, :, 0]
    assert np.abs(v - expect).max() < 1e-12


def test_translation_moves_everything(hand, rng):
    theta = rng.normal(scale=0.2, size=POSE_DIM)
    T = rng.normal(size=3)
    a = pose_hand(hand, zero_params(theta=theta)).vertices
    b = pose_hand(hand, zero_params(theta=theta, translation=T)).vertices
    assert np.allclose(b - a, T, atol=1e-12)


@pytest.mark.parametrize("field,size", [("theta", 47), ("beta", 9), ("translation", 2)])
def test_wrong_param_sizes_raise(field, size):
    with pytest.raises(ParameterError):
        zero_params(**{field: np.zeros(size)})


def test_nonfinite_params_raise():
    with pytest.raises(ParameterError):
        zero_params(translation=np.array([0.0, np.nan, 0.0]))


def test_regressor_rows_sum_to_one_and_commute_with_translation(hand, rng):
    assert np.allclose(hand.joint_regressor.sum(axis=1), 1.0)
    posed = pose_hand(hand, zero_params(theta=rng.normal(scale=0.3, size=POSE_DIM))).vertices
    d = rng.normal(size=3)
    assert np.allclose(regress_joints(hand, posed + d), regress_joints(hand, posed) + d, atol=1e-12)


def test_regress_template_gives_rest_joints(hand):
    J = regress_joints(hand, hand.template)
    assert J.shape == (21, 3)
    assert np.allclose(J, hand.joint_regressor @ hand.template.vertices)
    assert np.allclose(J, hand_joints(hand, zero_params()))


def test_one_hot_regressor_selects_vertices(hand):
    W = np.zeros((3, hand.num_vertices))
    W[[0, 1, 2], [5, 17, 40]] = 1.0
    assert np.allclose(W @ hand.template.vertices, hand.template.vertices[[5, 17, 40]])


def test_regress_wrong_vertex_count(hand):
    with pytest.raises(DataError):
        regress_joints(hand, np.zeros((hand.num_vertices - 1, 3)))


# -- object -------------------------------------------------------------------

def flap():
    base = Mesh(np.array([[0.0, 0, 0], [-1, 0, 0], [0, -1, 0]]), [[0, 1, 2]])
    top = Mesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 0, 1]]), [[0, 1, 2]])
    return ArticulatedObject(base, top, axis_origin=[0, 0, 0], axis_direction=[0, 0, 1], rest_angle=0.25)


def test_rest_pose_is_canonical():
    obj = flap()
    base, top = pose_object(obj, ObjectPose(obj.rest_angle, np.zeros(3), np.zeros(3)))
    assert np.array_equal(base.vertices, obj.base_part.vertices)
    assert np.allclose(top.vertices, obj.top_part.vertices, atol=1e-15)


def test_quarter_turn_maps_x_to_y():
    obj = flap()
    _, top = pose_object(obj, ObjectPose(obj.rest_angle + np.pi / 2, np.zeros(3), np.zeros(3)))
    assert np.allclose(top.vertices[1], [0, 1, 0], atol=1e-12)
    # hinge-line points stay put
    assert np.allclose(top.vertices[0], [0, 0, 0], atol=1e-15)
    assert np.allclose(top.vertices[2], [0, 0, 1], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(omega=st.floats(-3, 3), seed=st.integers(0, 2**31))
def test_object_rigidity_and_base_independence(omega, seed):
    obj = generate_object_asset("flap", resolution=3)
    rng = np.random.default_rng(seed)
    rot, t = random_rotvec(rng), rng.normal(size=3)
    base, top = pose_object(obj, ObjectPose(omega, rot, t))
    base0, top0 = pose_object(obj, ObjectPose(0.0, rot, t))
    assert np.array_equal(base.vertices, base0.vertices)
    for a, b in ((top.vertices, obj.top_part.vertices), (base.vertices, obj.base_part.vertices)):
        da = np.linalg.norm(a[:, None] - a[None], axis=-1)
        db = np.linalg.norm(b[:, None] - b[None], axis=-1)
        assert np.abs(da - db).max() < 1e-9


def test_object_axis_must_be_unit():
    obj = flap()
    with pytest.raises(DataError):
        ArticulatedObject(obj.base_part, obj.top_part, [0, 0, 0], [0, 0, 2.0])


# -- camera -------------------------------------------------------------------

def test_weak_to_perspective_values():
    assert np.allclose(weak_to_perspective(CameraParams(1.0, 0.0, 0.0, 1000.0, 224.0)), [0, 0, 1000 / 112])
    assert weak_to_perspective(CameraParams(0.5, 0.1, 0.2, 500.0, 256.0))[2] == pytest.approx(7.8125, abs=1e-12)
    a = weak_to_perspective(CameraParams(1.0, 0, 0, 800.0, 224.0))[2]
    b = weak_to_perspective(CameraParams(2.0, 0, 0, 800.0, 224.0))[2]
    assert b == pytest.approx(a / 2)


@pytest.mark.parametrize("s", [0.0, -1.0])
def test_nonpositive_scale_raises(s):
    with pytest.raises(DegenerateInputError):
        CameraParams(s, 0, 0, 1000.0, 224.0)


def test_project_axis_point_hits_center():
    cam = CameraParams(1.0, 0.0, 0.0, 1000.0, 224.0)
    assert np.allclose(project([[0, 0, 0]], cam), [[112, 112]])


def test_project_similar_triangles():
    # depth 1 exactly: T_z = 2f/(ws) = 1 with s = 2f/w
    cam = CameraParams(2 * 1000.0 / 224.0, 0.0, 0.0, 1000.0, 224.0)
    uv = project([[0.1, 0.0, 0.0]], cam)
    assert np.allclose(uv, [[112 + 100, 112]])


def test_project_matches_weak_perspective_for_planar_set(rng):
    # planar, centred set at the converted depth: perspective equals weak perspective exactly
    f, w = 1000.0, 224.0
    for s in (0.5, 1.0, 3.0):
        cam = CameraParams(s, 0.0, 0.0, f, w)
        P = np.c_[rng.uniform(-0.05, 0.05, size=(20, 2)), np.zeros(20)]
        weak = s * P[:, :2] * (w / 2) + w / 2
        assert np.allclose(project(P, cam), weak, rtol=1e-6)


def test_project_behind_camera():
    cam = CameraParams(1.0, 0.0, 0.0, 1000.0, 224.0)
    with pytest.raises(DegenerateInputError):
        project([[0, 0, -20.0]], cam)


# -- FPS ----------------------------------------------------------------------

def greedy_fps(P, k, start):
    sel = [start]
    while len(sel) < k:
        best, arg = -1.0, None
        for i in range(len(P)):
            if i in sel:
                continue
            d = min(np.linalg.norm(P[i] - P[j]) for j in sel)
            if d > best:
                best, arg = d, i
        sel.append(arg)
    return sel


def test_fps_collinear(backend):
    P = np.c_[np.arange(11.0), np.zeros(11), np.zeros(11)]
    assert list(fps_landmarks(P, 3, 0, backend=backend)) == [0, 10, 5]


def test_fps_full_is_permutation(backend, rng):
    P = rng.normal(size=(30, 3))
    P[5] = P[3]  # duplicates must still be picked once each
    idx = fps_landmarks(P, 30, 2, backend=backend)
    assert sorted(idx) == list(range(30))


def test_fps_matches_greedy_oracle(backend, rng):
    for _ in range(5):
        P = rng.normal(size=(200, 3))
        start = int(rng.integers(200))
        assert list(fps_landmarks(P, 16, start, backend=backend)) == greedy_fps(P, 16, start)


def test_fps_prefix_and_min_distance(rng):
    P = rng.normal(size=(100, 3))
    full = list(fps_landmarks(P, 20, 0))
    prev = np.inf
    for k in range(2, 21):
        part = list(fps_landmarks(P, k, 0))
        assert part == full[:k]
        S = P[part]
        d = np.linalg.norm(S[:, None] - S[None], axis=-1)
        m = d[np.triu_indices(k, 1)].min()
        assert m <= prev + 1e-15
        prev = m


def test_fps_too_many():
    with pytest.raises(DataError):
        fps_landmarks(np.zeros((3, 3)), 4)

import numpy as np
import pytest

from articap.capture import solve_sequence
from articap.errors import DataError
from articap.models import ObjectPose, fps_landmarks, hand_joints, object_mesh, pose_object, pose_vertices
from articap.synth import (OBJECT_KINDS, SynthConfig, generate_assets, generate_hand_asset, generate_object_asset,
                           generate_sequence, smooth_track)


def edges_watertight(faces):
    count = {}
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (min(a, b), max(a, b))
            count[key] = count.get(key, 0) + 1
    return all(c == 2 for c in count.values())


@pytest.mark.parametrize("kind", OBJECT_KINDS)
@pytest.mark.parametrize("res", [2, 4, 7])
def test_object_assets_valid(kind, res):
    obj = generate_object_asset(kind, res)
    assert np.linalg.norm(obj.axis_direction) == pytest.approx(1.0)
    assert obj.rest_angle == 0.0
    for part in (obj.base_part, obj.top_part):
        assert edges_watertight(part.faces)
    # rigidity of the top under articulation
    _, top = pose_object(obj, ObjectPose(np.pi / 4, np.zeros(3), np.zeros(3)))
    d0 = np.linalg.norm(obj.top_part.vertices[:, None] - obj.top_part.vertices[None], axis=-1)
    d1 = np.linalg.norm(top.vertices[:, None] - top.vertices[None], axis=-1)
    assert np.abs(d0 - d1).max() < 1e-12


def test_object_landmarks_are_fps(assets):
    obj = assets.object
    merged = object_mesh(obj, ObjectPose(obj.rest_angle, np.zeros(3), np.zeros(3)))
    ids = fps_landmarks(merged, len(obj.landmarks), obj.fps_start)
    nb = obj.base_part.num_vertices
    expect = [("base", int(i)) if i < nb else ("top", int(i - nb)) for i in ids]
    assert [tuple(x) for x in obj.landmarks] == expect


def test_hand_asset_shape():
    h = generate_hand_asset("left")
    assert h.skinning_weights.shape == (h.num_vertices, 16)
    assert np.allclose(h.skinning_weights.sum(axis=1), 1.0)
    assert h.joint_regressor.shape == (21, h.num_vertices)
    r = generate_hand_asset("right")
    assert np.allclose(h.template.vertices * [-1, 1, 1], r.template.vertices)


def test_noise_free_markers_are_posed_vertices(assets):
    seq, gt = generate_sequence(assets, SynthConfig(seed=1, frame_count=5))
    for f, g in zip(seq.frames, gt):
        base, top = pose_object(assets.object, g.object)
        for c in seq.correspondences:
            if c.entity == "object-base":
                expect = base.vertices[c.vertex_index]
            elif c.entity == "object-top":
                expect = top.vertices[c.vertex_index]
            else:
                side = c.entity.split("-")[0]
                p = g.hand(side)
                expect = pose_vertices(assets.hand(side), p.theta, p.beta, p.translation,
                                       vertex_ids=[c.vertex_index])[0, 0]
            assert np.abs(f.get(c.marker_id) - expect).max() < 1e-12


def test_deterministic(assets):
    cfg = SynthConfig(seed=4, frame_count=20, marker_noise_sigma=0.001, dropout_rate=0.2)
    a, ga = generate_sequence(assets, cfg)
    b, gb = generate_sequence(assets, cfg)
    assert [g.to_dict() for g in ga] == [g.to_dict() for g in gb]
    for fa, fb in zip(a.frames, b.frames):
        assert fa.positions.keys() == fb.positions.keys()
        for k in fa.positions:
            pa, pb = fa.positions[k], fb.positions[k]
            assert (pa is None and pb is None) or np.array_equal(pa, pb)
    ga2 = generate_assets(seed=3)
    gb2 = generate_assets(seed=3)
    assert np.array_equal(ga2.left_beta, gb2.left_beta)


def test_dropout_rate(assets):
    cfg = SynthConfig(seed=2, frame_count=200, dropout_rate=0.1, hands=False)
    seq, _ = generate_sequence(assets, cfg)
    n = len(seq.correspondences)
    missing = sum(1 for f in seq.frames for m in seq.marker_ids if not f.visible(m))
    p = missing / (200 * n)
    sd = np.sqrt(0.1 * 0.9 / (200 * n))
    assert abs(p - 0.1) < 4 * sd


def test_params_within_amplitudes(assets):
    cfg = SynthConfig(seed=6, frame_count=80)
    _, gt = generate_sequence(assets, cfg)
    om = np.array([g.object.omega for g in gt])
    assert om.min() >= cfg.articulation_min - 1e-12 and om.max() <= cfg.articulation_max + 1e-12
    tr = np.array([g.object.translation for g in gt])
    assert np.ptp(tr, axis=0).max() <= 2 * cfg.amplitudes["object_translation"] + 1e-12
    assert all(np.isfinite(g.right.theta).all() for g in gt)


def test_smooth_track_c1():
    # a kink at a keyframe gives a velocity jump of order range/spacing; C1 joins
    # only show the second-derivative scale seen between keyframes
    rng = np.random.default_rng(0)
    spacing = 30
    x = smooth_track(rng, 301, spacing, [-1.0], [1.0])[:, 0]
    jump = np.abs(np.diff(x, 2))  # jump[k-1] is the velocity change at frame k
    knots = np.arange(spacing, 300, spacing)
    at_knots = jump[knots - 1]
    elsewhere = np.delete(jump, knots - 1)
    assert at_knots.max() < 3 * elsewhere.max()
    assert np.all(np.abs(x) <= 1.0)


@pytest.mark.parametrize("bad", [{"dropout_rate": 1.5}, {"marker_noise_sigma": -1.0}, {"bogus": 1},
                                 {"frame_count": 0}])
def test_bad_config(bad):
    with pytest.raises(DataError):
        SynthConfig.from_dict(bad)


def test_round_trip_through_solver(assets):
    seq, gt = generate_sequence(assets, SynthConfig(seed=8, frame_count=10))
    poses = solve_sequence(assets, seq.frames, seq.correspondences)
    for p, g in zip(poses, gt):
        assert abs(p.object.omega - g.object.omega) < 1e-9
        err = np.linalg.norm(hand_joints(assets.right, p.right) - hand_joints(assets.right, g.right), axis=1)
        assert err.mean() < 1e-3

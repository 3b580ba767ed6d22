import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from articap.errors import CoverageError, DataError
from articap.metrics import (EvalReport, SequenceEval, SequenceMeta, aae, evaluate_split, mpjpe, mrrpe, pcd,
                             split_sequences, v2v)


def test_mpjpe_offset_cancels(rng):
    gt = rng.normal(size=(21, 3))
    assert mpjpe(gt + [0.01, 0.02, -0.3], gt) == pytest.approx(0.0, abs=1e-12)


def test_mpjpe_one_joint():
    gt = np.zeros((21, 3))
    pred = gt.copy()
    pred[4, 0] = 0.005
    assert mpjpe(pred, gt) == pytest.approx(5 / 21)


def test_mpjpe_not_rotation_invariant(rng):
    gt = rng.normal(size=(21, 3))
    R = Rotation.from_rotvec([0, 0, 0.3]).as_matrix()
    assert mpjpe(gt @ R.T, gt) > 1.0


def test_mpjpe_shape_mismatch():
    with pytest.raises(DataError):
        mpjpe(np.zeros((21, 3)), np.zeros((20, 3)))


def test_mpjpe_monte_carlo():
    # root exact, other joints perturbed by isotropic noise: E||e|| = sigma * sqrt(8/pi)
    rng = np.random.default_rng(0)
    sigma = 0.002
    gt = rng.normal(size=(4000, 21, 3))
    noise = rng.normal(0, sigma, size=gt.shape)
    noise[:, 0] = 0
    expect = 20 / 21 * sigma * np.sqrt(8 / np.pi) * 1000
    assert mpjpe(gt + noise, gt) == pytest.approx(expect, rel=0.01)


def test_mrrpe_values():
    z = np.zeros(3)
    assert mrrpe([0, 0, 0.010], z, [0, 0, 0.013], z) == pytest.approx(3.0)
    assert mrrpe(z, z, z, z) == 0.0


def test_mrrpe_common_offsets(rng):
    a, b, c, d = rng.normal(size=(4, 3))
    base = mrrpe(a, b, c, d)
    s, t = rng.normal(size=(2, 3))
    assert mrrpe(a + s, b + s, c + t, d + t) == pytest.approx(base, rel=1e-9)


def test_aae_values():
    assert aae(np.deg2rad(30), np.deg2rad(45)) == pytest.approx(15.0)
    assert aae(np.deg2rad([10, 0]), np.deg2rad([0, 20])) == pytest.approx(15.0)
    assert aae(0.3, 0.3) == 0.0
    # no wrap-around
    assert aae(np.deg2rad(179), np.deg2rad(-179)) == pytest.approx(358.0)


def test_v2v_values(rng):
    gt = rng.normal(size=(4, 3))
    root = gt.mean(axis=0)
    t = rng.normal(size=3)
    assert v2v(gt + t, gt, root + t, root) == pytest.approx(0.0, abs=1e-12)
    pred = gt.copy()
    pred[2, 1] += 0.002
    assert v2v(pred, gt, root, root) == pytest.approx(0.5)


def test_pcd_values():
    gt = np.zeros(3)
    pred = np.array([0.001, 0.003, 0.007])
    curve = dict(pcd(pred, gt, [0, 5, 100]))
    assert curve[0.0] == 0.0
    assert curve[5.0] == pytest.approx(2 / 3)
    assert curve[100.0] == 1.0
    # strict inequality at the boundary
    assert dict(pcd(np.array([0.005]), np.zeros(1), [5]))[5.0] == 0.0


def test_pcd_length_mismatch():
    with pytest.raises(DataError):
        pcd(np.zeros(3), np.zeros(4))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_pcd_monotone(seed):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0, 0.1, 100)
    pred = np.clip(gt + rng.normal(0, 0.01, 100), 0, 0.1)
    fr = [f for _, f in pcd(pred, gt, np.linspace(0, 200, 50))]
    assert fr[0] == 0.0 and fr[-1] == 1.0
    assert all(b >= a for a, b in zip(fr, fr[1:]))


# -- splits -------------------------------------------------------------------

def metas(subjects=9, objects=("box", "flap"), per=3, views=tuple(range(9))):
    return [SequenceMeta(f"s{s:02d}_{o}_{k}", f"s{s:02d}", o, views)
            for s in range(subjects) for o in objects for k in range(per)]


@pytest.mark.parametrize("protocol", ["P1", "P2", "P3"])
def test_split_partition(protocol):
    ms = metas()
    sp = split_sequences(ms, protocol)
    seen = [s for part in sp.values() for s in part]
    assert len(seen) == len(set(seen)) == len(ms)
    assert sp["test"] and sp["train"]


def test_p3_holds_out_subjects():
    sp = split_sequences(metas(), "P3")
    subj = {k: {s.split("_")[0] for s in v} for k, v in sp.items() if v}
    assert subj["test"] == {"s07", "s08"} and subj["val"] == {"s06"}
    assert len(subj["train"]) == 6


def test_p1_holds_out_last_sequence_per_object():
    sp = split_sequences(metas(subjects=2), "P1")
    assert sp["test"] == ["s01_box_2", "s01_flap_2"]
    assert sp["val"] == ["s01_box_1", "s01_flap_1"]


def test_p2_needs_egocentric_view():
    ms = metas(subjects=2) + [SequenceMeta("x_allo", "s00", "box", (1, 2))]
    sp = split_sequences(ms, "P2")
    assert sp["excluded"] == ["x_allo"]
    ego_only = [SequenceMeta("x_ego", "s00", "box", (0,))]
    assert split_sequences(ego_only, "P1")["excluded"] == ["x_ego"]


def test_split_rejects_duplicates_and_unknown():
    ms = metas(subjects=1)
    with pytest.raises(DataError):
        split_sequences(ms + ms[:1], "P1")
    with pytest.raises(DataError):
        split_sequences(ms, "P4")


# -- evaluation ---------------------------------------------------------------

def seq_eval(meta, rng, F=5):
    return SequenceEval(
        meta,
        joints_left=rng.normal(size=(F, 21, 3)),
        joints_right=rng.normal(size=(F, 21, 3)),
        omega=rng.uniform(0, 1, F),
        verts_top=rng.normal(size=(F, 12, 3)),
        verts_bottom=rng.normal(size=(F, 10, 3)),
        fields={"l->o": rng.uniform(0, 0.1, (F, 21)), "o->r": rng.uniform(0, 0.1, (F, 30))},
    )


def dataset(rng):
    return [seq_eval(m, rng, F=3 + i % 3) for i, m in enumerate(metas(subjects=3))]


@pytest.mark.parametrize("protocol", ["P1", "P2", "P3"])
def test_identity_predictions_give_zero(protocol, rng):
    gt = dataset(rng)
    rep = evaluate_split(gt, {g.meta.sequence_id: g for g in gt}, protocol)
    for k in EvalReport.SCALARS:
        assert getattr(rep, k) == 0.0
    for curve in rep.pcd_curves.values():
        assert all(f == 1.0 for _, f in curve)
    assert set(rep.per_object) == {"box", "flap"}


def test_uniform_right_offset_cancels(rng):
    gt = dataset(rng)
    preds = {}
    for g in gt:
        p = SequenceEval(**{**g.__dict__})
        p.joints_right = g.joints_right + 0.010
        preds[g.meta.sequence_id] = p
    rep = evaluate_split(gt, preds, "P1")
    assert rep.mpjpe_right == pytest.approx(0.0, abs=1e-9)
    assert rep.mrrpe_lr == pytest.approx(np.linalg.norm([10, 10, 10]), rel=1e-9)


def test_frame_uniform_average(rng):
    gt = dataset(rng)
    preds = {g.meta.sequence_id: SequenceEval(**{**g.__dict__, "omega": g.omega + 0.01 * (i + 1)})
             for i, g in enumerate(gt)}
    rep = evaluate_split(gt, preds, "P1")
    test = set(split_sequences([g.meta for g in gt], "P1")["test"])
    errs = np.concatenate([np.abs(preds[g.meta.sequence_id].omega - g.omega) for g in gt if g.meta.sequence_id in test])
    assert rep.aae == pytest.approx(np.rad2deg(errs.mean()), rel=1e-12)
    assert rep.frame_count == len(errs)


def test_missing_frames_listed(rng):
    gt = dataset(rng)
    preds = {g.meta.sequence_id: g for g in gt}
    test = split_sequences([g.meta for g in gt], "P1")["test"]
    short = preds[test[0]]
    preds[test[0]] = SequenceEval(short.meta, omega=short.omega[:-1])
    del preds[test[1]]
    with pytest.raises(CoverageError) as err:
        evaluate_split(gt, preds, "P1")
    ids = [sid for sid, _ in err.value.gaps]
    assert ids == [test[0], test[1]]


def test_report_serialisation(rng):
    gt = dataset(rng)
    rep = evaluate_split(gt, {g.meta.sequence_id: g for g in gt}, "P1")
    d = rep.to_dict()
    assert d["format"] == "articap-report" and d["protocol"] == "P1"
    table = rep.to_table().splitlines()
    assert table[0].split()[:2] == ["Split", "Object"]
    assert len({len(line) for line in table[:1]}) == 1
    csv = rep.pcd_csv("l->o").splitlines()
    assert csv[0] == "alpha_mm,fraction" and len(csv) == 101

import json
import subprocess
import sys

import numpy as np
import pytest

from articap import __version__
from articap.assets import dumps, load_assets
from articap.capture import estimate_axis, solve_sequence
from articap.cli import CONFIG_DIR_ENV, main
from articap.geometry import rodrigues
from articap.metrics import evaluate_split
from articap.seqio import (DatasetEntry, load_dataset, load_markers, load_poses, load_sequence_eval, save_dataset,
                           save_poses)
from articap.schemas import validate_file

SMALL = {"subjects": ["s01", "s02", "s03"], "sequence": {"frame_count": 6}}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    assert main(["synth", str(cfg), "--out", str(root / "data")]) == 0
    assert main(["solve", "--dataset", str(root / "data/dataset.json"), "--out", str(root / "solved"),
                 "--jobs", "1"]) == 0
    assert main(["fields", "--dataset", str(root / "solved/dataset.json"), "--out", str(root / "fields"),
                 "--jobs", "1"]) == 0
    return root


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as e:
        main(["eval", "--gt", "a", "--pred", "b", "--protocol", "P7", "--out", "x"])
    assert e.value.code == 2


def test_synth_outputs_validate(pipeline):
    files = [p for d in ("data", "solved", "fields") for p in (pipeline / d).rglob("*.json")]
    assert len(files) > 20
    for p in files:
        assert validate_file(p) == [], p


def test_synth_is_byte_identical(pipeline, tmp_path):
    assert main(["synth", str(pipeline / "cfg.json"), "--out", str(tmp_path / "again")]) == 0
    for p in (pipeline / "data").rglob("*"):
        if p.is_file() and p.name != "manifest.json":
            q = tmp_path / "again" / p.relative_to(pipeline / "data")
            assert p.read_bytes() == q.read_bytes(), p


def test_refuses_overwrite(pipeline, capsys):
    rc = main(["synth", str(pipeline / "cfg.json"), "--out", str(pipeline / "data")])
    assert rc == 2 and "--force" in capsys.readouterr().err


def test_bad_config_is_data_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sequence": {"dropout_rate": 2.0}}))
    assert main(["synth", str(cfg), "--out", str(tmp_path / "o")]) == 3
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["synth", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_config_dir_env(tmp_path, monkeypatch):
    (tmp_path / "synth.json").write_text(json.dumps({"subjects": ["a"], "sequence": {"frame_count": 2}}))
    monkeypatch.setenv(CONFIG_DIR_ENV, str(tmp_path))
    assert main(["synth", "--out", str(tmp_path / "o")]) == 0
    (e,) = load_dataset(tmp_path / "o/dataset.json")
    assert e.meta.subject == "a" and len(load_poses(e.poses)) == 2


def test_solve_matches_library(pipeline, tmp_path):
    (e,) = load_dataset(pipeline / "data/dataset.json")[:1]
    out = tmp_path / "poses.json"
    assert main(["solve", "--assets", str(e.assets), "--markers", str(e.markers), "--out", str(out)]) == 0
    seq = load_markers(e.markers)
    lib = solve_sequence(load_assets(e.assets), seq.frames, seq.correspondences)
    assert out.read_text() == dumps([p.to_dict() for p in lib])
    solved = pipeline / "solved/sequences" / e.meta.sequence_id / "poses.json"
    assert solved.read_text() == out.read_text()


def test_identity_eval_is_zero(pipeline, tmp_path, capsys):
    idx = str(pipeline / "fields/dataset.json")
    for proto in ("P1", "P2", "P3"):
        out = tmp_path / proto
        assert main(["eval", "--gt", idx, "--pred", idx, "--protocol", proto, "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        for k in ("mpjpe_left", "mpjpe_right", "mrrpe_lr", "mrrpe_or", "aae", "v2v_top", "v2v_bottom"):
            assert rep[k] == 0.0
        assert len(rep["pcd_curves"]) == 4
        assert all(f == 1.0 for c in rep["pcd_curves"].values() for _, f in c)
        assert (out / "table.txt").exists() and (out / "pcd_l-o.csv").exists()


def test_perturbed_eval_matches_library(pipeline, tmp_path):
    entries = load_dataset(pipeline / "solved/dataset.json")
    rng = np.random.default_rng(0)
    pert = []
    for e in entries:
        poses = load_poses(e.poses)
        for p in poses:
            p.object = type(p.object)(p.object.omega + rng.normal(0, 0.05), p.object.rotation, p.object.translation)
        path = tmp_path / f"{e.meta.sequence_id}.json"
        save_poses(poses, path)
        pert.append(DatasetEntry(e.meta, e.assets, e.markers, path))
    save_dataset(pert, tmp_path / "pred.json")
    gt_idx = pipeline / "data/dataset.json"
    assert main(["eval", "--gt", str(gt_idx), "--pred", str(tmp_path / "pred.json"), "--protocol", "P3",
                 "--out", str(tmp_path / "rep")]) == 0
    lib = evaluate_split([load_sequence_eval(e) for e in load_dataset(gt_idx)],
                         {e.meta.sequence_id: load_sequence_eval(e) for e in pert}, "P3")
    assert (tmp_path / "rep/report.json").read_text() == dumps(lib.to_dict())
    assert lib.aae > 0


def test_missing_prediction_is_coverage_error(pipeline, tmp_path, capsys):
    entries = load_dataset(pipeline / "solved/dataset.json")
    save_dataset(entries[:1], tmp_path / "pred.json")
    rc = main(["eval", "--gt", str(pipeline / "data/dataset.json"), "--pred", str(tmp_path / "pred.json"),
               "--protocol", "P1", "--no-fields", "--out", str(tmp_path / "rep")])
    assert rc == 3
    assert "s03_box-hinge_00" in capsys.readouterr().err


def test_heatmap_command(pipeline, tmp_path):
    (e,) = load_dataset(pipeline / "data/dataset.json")[:1]
    out = tmp_path / "hm"
    assert main(["heatmap", "--assets", str(e.assets), "--poses", str(e.poses), "--threshold", "0.02",
                 "--out", str(out)]) == 0
    for name in ("left", "right", "object"):
        d = json.loads((out / f"{name}.json").read_text())
        assert d["frame_count"] == 6 and all(0 <= f <= 1 for f in d["frequencies"])
        assert validate_file(out / f"{name}.json") == []
    assert main(["heatmap", "--assets", str(e.assets), "--poses", str(e.poses), "--threshold", "-1",
                 "--out", str(tmp_path / "hm2")]) == 3


def test_axis_command(tmp_path):
    origin = np.array([0.1, 0.2, 0.0])
    poses = []
    for a in np.deg2rad([0, 15, 30, 60]):
        R = rodrigues(np.array([0, 0, a]))
        poses.append({"rot": [0, 0, float(a)], "trans": (origin - R @ origin).tolist()})
    src = tmp_path / "rel.json"
    src.write_text(json.dumps({"poses": poses}))
    assert main(["axis", str(src), "--out", str(tmp_path / "axis.json")]) == 0
    d = json.loads((tmp_path / "axis.json").read_text())
    lib = estimate_axis([(p["rot"], p["trans"]) for p in poses])
    assert d["axis_direction"] == lib[0].tolist() and np.allclose(d["axis_origin"][:2], origin[:2])
    src.write_text(json.dumps({"poses": poses[:1]}))
    assert main(["axis", str(src), "--out", str(tmp_path / "axis2.json")]) == 4


def test_validate_command(pipeline, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format": "articap-axis", "axis_direction": [1, 0]}))
    assert main(["validate", str(pipeline / "data/dataset.json")]) == 0
    assert main(["validate", str(bad)]) == 3


def test_console_script_runs():
    out = subprocess.run([sys.executable, "-m", "articap.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "articap" in out.stdout

"""Command-line entry point: ``articap <command> ...``.

Exit codes: 0 success, 2 usage (including refusing to overwrite without
``--force``), 3 bad data or schema, 4 numerical failure.
"""
import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .assets import FORMAT_VERSION, dumps, load_assets, read_json, save_assets, write_obj
from .capture import estimate_axis, solve_sequence
from .errors import DataError, NumericalError
from .fields import DEFAULT_CONTACT_THRESHOLD, DEFAULT_D_MAX, aggregate_heatmap, contact_labels
from .metrics import PROTOCOLS, SequenceMeta, evaluate_split
from .seqio import (DatasetEntry, load_dataset, load_markers, load_poses, load_sequence_eval, save_dataset,
                    save_field_set, save_markers, save_poses, sequence_fields)
from .synth import OBJECT_KINDS, SynthConfig, generate_assets, generate_sequence

CONFIG_DIR_ENV = "ARTICAP_CONFIG_DIR"
EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4

DEFAULT_DATASET = {
    "seed": 0,
    "subjects": ["s01", "s02", "s03"],
    "objects": ["box-hinge"],
    "sequences_per_pair": 1,
    "views": list(range(9)),
    "resolution": 6,
    "sequence": {"frame_count": 60, "marker_noise_sigma": 0.0005, "dropout_rate": 0.05},
}


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    """Provenance record written next to every command's output."""

    command: str
    inputs: list
    outputs: list
    config: dict = field(default_factory=dict)
    version: str = __version__
    seed: int = None

    def to_dict(self):
        return {"format": "articap-run", "format_version": FORMAT_VERSION, **asdict(self)}


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _claim(paths, force):
    """Refuse to clobber existing outputs unless ``--force``."""
    for p in map(Path, paths):
        busy = p.is_file() or (p.is_dir() and any(p.iterdir()))
        if busy and not force:
            raise UsageError(f"{p} exists; pass --force to overwrite")


def _write_manifest(manifest, path):
    Path(path).write_text(dumps(manifest.to_dict()))


def _jobs(n):
    return max(1, n if n else (os.cpu_count() or 1))


def _pmap(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))


def _str_paths(paths):
    return [str(p) for p in paths]


# -- synth --------------------------------------------------------------------

def _seed_for(seed, *key):
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


def load_dataset_config(path=None):
    """Dataset config: explicit file, else ``$ARTICAP_CONFIG_DIR/synth.json``, else built-in defaults."""
    cfg = json.loads(json.dumps(DEFAULT_DATASET))
    if path is None and os.environ.get(CONFIG_DIR_ENV):
        candidate = Path(os.environ[CONFIG_DIR_ENV]) / "synth.json"
        path = candidate if candidate.is_file() else None
    if path is not None:
        user = read_json(path)
        if not isinstance(user, dict):
            raise DataError(f"{path}: config must be a JSON object")
        bad = set(user) - set(DEFAULT_DATASET)
        if bad:
            raise DataError(f"{path}: unknown config keys {sorted(bad)}")
        seq = dict(cfg["sequence"])
        seq.update(user.get("sequence", {}))
        cfg.update(user)
        cfg["sequence"] = seq
    if "seed" in cfg["sequence"]:
        raise DataError("set the seed at the top level, not inside 'sequence'")
    for kind in cfg["objects"]:
        if kind not in OBJECT_KINDS:
            raise DataError(f"unknown object kind {kind!r}; choose from {OBJECT_KINDS}")
    if not cfg["subjects"] or int(cfg["sequences_per_pair"]) < 1:
        raise DataError("need at least one subject and one sequence per subject/object pair")
    SynthConfig.from_dict(cfg["sequence"])  # validate early
    return cfg


def synthesize_dataset(cfg, out_dir):
    """Write assets, markers and ground-truth poses for every sequence; returns the index path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for si, subject in enumerate(cfg["subjects"]):
        for oi, kind in enumerate(cfg["objects"]):
            assets = generate_assets(_seed_for(cfg["seed"], si), kind, cfg["resolution"])
            adir = out / "assets" / f"{subject}_{kind}"
            apath = save_assets(assets, adir)
            for k in range(int(cfg["sequences_per_pair"])):
                sid = f"{subject}_{kind}_{k:02d}"
                sc = SynthConfig.from_dict({**cfg["sequence"], "seed": _seed_for(cfg["seed"], si, oi, k)})
                markers, gt = generate_sequence(assets, sc)
                sdir = out / "sequences" / sid
                sdir.mkdir(parents=True, exist_ok=True)
                save_markers(markers, sdir / "markers.json")
                save_poses(gt, sdir / "poses.json")
                meta = SequenceMeta(sid, subject, kind, tuple(cfg["views"]))
                entries.append(DatasetEntry(meta, apath, sdir / "markers.json", sdir / "poses.json"))
    index = out / "dataset.json"
    save_dataset(entries, index, extra={"synth": cfg})
    return index


def cmd_synth(args):
    cfg = load_dataset_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.frames is not None:
        cfg["sequence"]["frame_count"] = args.frames
    _claim([args.out], args.force)
    man = RunManifest("synth", _str_paths([args.config] if args.config else []), [str(args.out)], cfg,
                      seed=cfg["seed"])
    index = synthesize_dataset(cfg, args.out)
    _write_manifest(man, Path(args.out) / "manifest.json")
    _log(f"wrote {index}")


# -- solve --------------------------------------------------------------------

def _progress(label):
    def report(k, n):
        if k == n or k % 20 == 0:
            _log(f"{label}: frame {k}/{n}")
    return report


def _gap_summary(label, poses):
    counts = {}
    for p in poses:
        for f in p.flags:
            counts[f] = counts.get(f, 0) + 1
    if counts:
        _log(f"{label}: " + ", ".join(f"{k} x{v}" for k, v in sorted(counts.items())))


def solve_files(assets_path, markers_path, out_path, label="solve"):
    assets = load_assets(assets_path)
    seq = load_markers(markers_path)
    poses = solve_sequence(assets, seq.frames, seq.correspondences, progress=_progress(label))
    _gap_summary(label, poses)
    save_poses(poses, out_path)
    return out_path


def _solve_job(job):
    return solve_files(*job)


def cmd_solve(args):
    if args.dataset:
        entries = load_dataset(args.dataset)
        out = Path(args.out)
        _claim([out], args.force)
        jobs = []
        for e in entries:
            if e.markers is None:
                raise DataError(f"{e.meta.sequence_id}: no marker file")
            jobs.append((e.assets, e.markers, out / "sequences" / e.meta.sequence_id / "poses.json",
                         e.meta.sequence_id))
        man = RunManifest("solve", _str_paths([args.dataset]), [str(out)], {"jobs": args.jobs})
        for j in jobs:
            j[2].parent.mkdir(parents=True, exist_ok=True)
        _pmap(_solve_job, jobs, _jobs(args.jobs))
        solved = [DatasetEntry(e.meta, e.assets, e.markers, j[2]) for e, j in zip(entries, jobs)]
        save_dataset(solved, out / "dataset.json")
        _write_manifest(man, out / "manifest.json")
        _log(f"wrote {out / 'dataset.json'}")
    else:
        if not (args.assets and args.markers):
            raise UsageError("solve needs --assets and --markers, or --dataset")
        out = Path(args.out)
        _claim([out], args.force)
        man = RunManifest("solve", _str_paths([args.assets, args.markers]), [str(out)])
        solve_files(args.assets, args.markers, out)
        _write_manifest(man, out.with_name(out.name + ".manifest.json"))


# -- fields -------------------------------------------------------------------

def fields_files(assets_path, poses_path, out_dir, d_max, binary, backend=None):
    frames = sequence_fields(load_assets(assets_path), load_poses(poses_path), d_max, backend)
    return save_field_set(frames, out_dir, binary=binary)


def _fields_job(job):
    return fields_files(*job)


def cmd_fields(args):
    if args.dmax <= 0:
        raise DataError("--dmax must be positive")
    out = Path(args.out)
    _claim([out], args.force)
    cfg = {"d_max": args.dmax, "binary": args.binary}
    if args.dataset:
        entries = load_dataset(args.dataset)
        jobs = [(e.assets, e.poses, out / "sequences" / e.meta.sequence_id, args.dmax, args.binary)
                for e in entries]
        man = RunManifest("fields", _str_paths([args.dataset]), [str(out)], cfg)
        idx = _pmap(_fields_job, jobs, _jobs(args.jobs))
        with_fields = [DatasetEntry(e.meta, e.assets, e.markers, e.poses, i) for e, i in zip(entries, idx)]
        save_dataset(with_fields, out / "dataset.json")
        _log(f"wrote {out / 'dataset.json'}")
    else:
        if not (args.assets and args.poses):
            raise UsageError("fields needs --assets and --poses, or --dataset")
        man = RunManifest("fields", _str_paths([args.assets, args.poses]), [str(out)], cfg)
        fields_files(args.assets, args.poses, out, args.dmax, args.binary)
    _write_manifest(man, out / "manifest.json")


# -- eval ---------------------------------------------------------------------

def evaluate_datasets(gt_index, pred_index, protocol, split="test", with_fields=True):
    gt_entries = load_dataset(gt_index)
    pred_entries = {e.meta.sequence_id: e for e in load_dataset(pred_index)}
    gt = [load_sequence_eval(e, with_fields) for e in gt_entries]
    preds = {sid: load_sequence_eval(e, with_fields) for sid, e in pred_entries.items()}
    return evaluate_split(gt, preds, protocol, split)


def write_report(report, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(dumps(report.to_dict()))
    (out / "table.txt").write_text(report.to_table())
    for name in report.pcd_curves:
        (out / f"pcd_{name.replace('->', '-')}.csv").write_text(report.pcd_csv(name))


def cmd_eval(args):
    out = Path(args.out)
    _claim([out], args.force)
    man = RunManifest("eval", _str_paths([args.gt, args.pred]), [str(out)],
                      {"protocol": args.protocol, "split": args.split, "fields": not args.no_fields})
    report = evaluate_datasets(args.gt, args.pred, args.protocol, args.split, not args.no_fields)
    write_report(report, out)
    _write_manifest(man, out / "manifest.json")
    sys.stdout.write(report.to_table())


# -- heatmap ------------------------------------------------------------------

def contact_heatmaps(assets, poses, threshold, d_max=DEFAULT_D_MAX):
    frames = sequence_fields(assets, poses, d_max)
    out = {}
    for entity, key in (("left", "l->o"), ("right", "r->o")):
        out[entity] = aggregate_heatmap([contact_labels(f[key], threshold) for f in frames], entity)
    obj = [contact_labels(f["o->l"], threshold) | contact_labels(f["o->r"], threshold) for f in frames]
    out["object"] = aggregate_heatmap(obj, "object")
    return out


def heatmap_to_dict(hm, threshold):
    return {"format": "articap-heatmap", "entity": hm.entity, "threshold": float(threshold),
            "frame_count": int(hm.frame_count), "frequencies": [float(x) for x in hm.frequencies]}


def cmd_heatmap(args):
    if args.threshold < 0:
        raise DataError("--threshold must be nonnegative")
    out = Path(args.out)
    _claim([out], args.force)
    man = RunManifest("heatmap", _str_paths([args.assets, args.poses]), [str(out)], {"threshold": args.threshold})
    assets = load_assets(args.assets)
    maps = contact_heatmaps(assets, load_poses(args.poses), args.threshold)
    out.mkdir(parents=True, exist_ok=True)
    meshes = {"left": assets.left.template, "right": assets.right.template}
    for name, hm in maps.items():
        (out / f"{name}.json").write_text(dumps(heatmap_to_dict(hm, args.threshold)))
    for name, mesh in meshes.items():
        write_obj(mesh, out / f"{name}.obj")
    write_obj(assets.object.base_part, out / "object_base.obj")
    write_obj(assets.object.top_part, out / "object_top.obj")
    _write_manifest(man, out / "manifest.json")


# -- axis ---------------------------------------------------------------------

def axis_from_file(path):
    doc = read_json(path)
    items = doc.get("poses") if isinstance(doc, dict) else doc
    try:
        poses = [(p["rot"], p["trans"]) for p in items]
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: expected a list of {{rot, trans}} poses") from exc
    direction, origin, rms = estimate_axis(poses)
    return {"format": "articap-axis", "axis_direction": direction.tolist(), "axis_origin": origin.tolist(),
            "rms": rms, "pose_count": len(poses)}


def cmd_axis(args):
    out = Path(args.out)
    _claim([out], args.force)
    result = axis_from_file(args.poses)
    out.write_text(dumps(result))
    _write_manifest(RunManifest("axis", [str(args.poses)], [str(out)]), out.with_name(out.name + ".manifest.json"))


# -- validate -----------------------------------------------------------------

def cmd_validate(args):
    from .schemas import validate_file

    failed = 0
    for p in args.files:
        errs = validate_file(p)
        if errs:
            failed += 1
            for e in errs:
                _log(f"{p}: {e}")
        else:
            print(f"{p}: ok")
    if failed:
        raise DataError(f"{failed} of {len(args.files)} files failed validation")


# -- main ---------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="articap", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version",
                    version=f"articap {__version__} (file format {FORMAT_VERSION}, kernels {kernels.DEFAULT_BACKEND})")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, jobs=False):
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if jobs:
            p.add_argument("--jobs", type=int, default=0, help="worker processes (default: logical cores)")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("config", nargs="?", help=f"dataset config JSON (default: ${CONFIG_DIR_ENV}/synth.json)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--frames", type=int)
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("solve", help="solve poses from markers")
    p.add_argument("--assets")
    p.add_argument("--markers")
    p.add_argument("--dataset")
    p.add_argument("--out", required=True)
    common(p, jobs=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("fields", help="extract interaction fields from poses")
    p.add_argument("--assets")
    p.add_argument("--poses")
    p.add_argument("--dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--dmax", type=float, default=DEFAULT_D_MAX)
    p.add_argument("--binary", action="store_true", help="write float32 field files")
    common(p, jobs=True)
    p.set_defaults(func=cmd_fields)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--protocol", choices=PROTOCOLS, default="P1")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--no-fields", action="store_true", help="skip PCD even if fields are indexed")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("heatmap", help="aggregate contact frequencies")
    p.add_argument("--assets", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_CONTACT_THRESHOLD)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("axis", help="estimate a hinge axis from relative part poses")
    p.add_argument("poses")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_axis)

    p = sub.add_parser("validate", help="check files against the JSON schemas")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        _log(f"articap: {exc}")
        return EXIT_USAGE
    except (DataError, OSError, json.JSONDecodeError) as exc:
        _log(f"articap: {exc}")
        return EXIT_DATA
    except NumericalError as exc:
        _log(f"articap: numerical failure: {exc}")
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())

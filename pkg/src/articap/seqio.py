"""Sequence-level files: marker sequences, pose tracks, field sets and dataset indexes.

All JSON goes through :func:`assets.dumps`, so equal inputs give byte-equal files.
"""
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assets import FORMAT_VERSION, dumps, load_assets, read_json
from .capture import FramePose, MarkerCorrespondence, MarkerFrame, MarkerSequence
from .errors import DataError
from .fields import FIELD_NAMES, extract_gt_fields, load_field, save_field
from .metrics import SequenceEval, SequenceMeta
from .models import hand_joints, object_mesh, pose_hand, pose_object

MARKERS_FORMAT = "articap-markers"
FIELDS_FORMAT = "articap-fields"
DATASET_FORMAT = "articap-dataset"


# -- markers ------------------------------------------------------------------

def markers_to_dict(seq):
    ids = seq.marker_ids
    frames = []
    for fr in seq.frames:
        pos = [None if not fr.visible(m) else [float(x) for x in fr.get(m)] for m in ids]
        frames.append({"time": float(fr.time), "positions": pos})
    return {
        "format": MARKERS_FORMAT,
        "version": FORMAT_VERSION,
        "units": seq.units,
        "fps": float(seq.fps),
        "marker_ids": ids,
        "correspondences": [{"marker_id": c.marker_id, "entity": c.entity, "vertex_index": int(c.vertex_index)}
                            for c in seq.correspondences],
        "frames": frames,
    }


def markers_from_dict(d):
    if d.get("format") != MARKERS_FORMAT:
        raise DataError(f"not a marker sequence (format={d.get('format')!r})")
    if d.get("units", "m") != "m":
        raise DataError(f"marker units must be meters, got {d.get('units')!r}")
    try:
        ids = list(d["marker_ids"])
        corr = [MarkerCorrespondence(c["marker_id"], c["entity"], int(c["vertex_index"])) for c in d["correspondences"]]
        if sorted(c.marker_id for c in corr) != sorted(ids):
            raise DataError("correspondences and marker_ids disagree")
        frames = []
        for k, fr in enumerate(d["frames"]):
            if len(fr["positions"]) != len(ids):
                raise DataError(f"frame {k}: {len(fr['positions'])} positions for {len(ids)} markers")
            pos = {m: (None if p is None else np.asarray(p, dtype=np.float64)) for m, p in zip(ids, fr["positions"])}
            frames.append(MarkerFrame(float(fr["time"]), pos))
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed marker sequence: {exc}") from exc
    return MarkerSequence(corr, frames, fps=float(d.get("fps", 30.0)), units="m")


def save_markers(seq, path):
    Path(path).write_text(dumps(markers_to_dict(seq)))


def load_markers(path):
    return markers_from_dict(read_json(path))


# -- poses --------------------------------------------------------------------

def poses_to_list(poses):
    return [p.to_dict() for p in poses]


def poses_from_list(items):
    if not isinstance(items, list):
        raise DataError("pose file must hold a JSON array of frames")
    try:
        return [FramePose.from_dict(d) for d in items]
    except (KeyError, TypeError, AttributeError) as exc:
        raise DataError(f"malformed pose record: {exc}") from exc


def save_poses(poses, path):
    Path(path).write_text(dumps(poses_to_list(poses)))


def load_poses(path):
    return poses_from_list(read_json(path))


# -- fields -------------------------------------------------------------------

def _field_filename(frame, name, binary):
    return f"f{frame:05d}_{name.replace('->', '-')}.{'bin' if binary else 'json'}"


def sequence_fields(assets, poses, d_max, backend=None):
    """Ground-truth fields for every frame: list of {name: InteractionField}."""
    out = []
    for k, p in enumerate(poses):
        if p.left is None or p.right is None or p.object is None:
            raise DataError(f"frame {k}: fields need both hands and the object")
        left = pose_hand(assets.left, p.left)
        right = pose_hand(assets.right, p.right)
        out.append(extract_gt_fields(left, right, object_mesh(assets.object, p.object), d_max, backend))
    return out


def save_field_set(frames, directory, binary=False):
    """One file per frame and field plus a ``fields.json`` index; returns the index path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = [n for n in FIELD_NAMES if n in frames[0]]
    files = []
    for k, fr in enumerate(frames):
        row = {}
        for name in names:
            fn = _field_filename(k, name, binary)
            save_field(fr[name], d / fn, binary=binary)
            row[name] = fn
        files.append(row)
    index = {"format": FIELDS_FORMAT, "version": FORMAT_VERSION, "frame_count": len(frames),
             "names": names, "d_max": float(frames[0][names[0]].d_max), "files": files}
    path = d / "fields.json"
    path.write_text(dumps(index))
    return path


def load_field_set(path):
    path = Path(path)
    idx = read_json(path)
    if idx.get("format") != FIELDS_FORMAT:
        raise DataError(f"not a field index (format={idx.get('format')!r})")
    return [{name: load_field(path.parent / fn) for name, fn in row.items()} for row in idx["files"]]


# -- dataset index --------------------------------------------------------------

@dataclass
class DatasetEntry:
    meta: SequenceMeta
    assets: Path
    markers: Path = None
    poses: Path = None
    fields: Path = None

    def to_dict(self, root):
        def rel(p):
            return None if p is None else Path(os.path.relpath(Path(p).resolve(), Path(root).resolve())).as_posix()

        d = self.meta.to_dict()
        d.update(assets=rel(self.assets), markers=rel(self.markers), poses=rel(self.poses), fields=rel(self.fields))
        return d


def save_dataset(entries, path, extra=None):
    path = Path(path)
    doc = {"format": DATASET_FORMAT, "version": FORMAT_VERSION,
           "sequences": [e.to_dict(path.parent) for e in entries]}
    if extra:
        doc.update(extra)
    path.write_text(dumps(doc))


def load_dataset(path):
    path = Path(path)
    doc = read_json(path)
    if doc.get("format") != DATASET_FORMAT:
        raise DataError(f"not a dataset index (format={doc.get('format')!r})")

    def res(p):
        return None if p is None else (path.parent / p)

    entries = []
    try:
        for s in doc["sequences"]:
            meta = SequenceMeta(s["sequence_id"], s["subject"], s["object"], tuple(s.get("views", range(9))))
            entries.append(DatasetEntry(meta, res(s["assets"]), res(s.get("markers")), res(s.get("poses")),
                                        res(s.get("fields"))))
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed dataset index: {exc}") from exc
    return entries


# -- evaluation inputs ----------------------------------------------------------

def sequence_eval(meta, assets, poses, fields=None):
    """Joints, articulation and part vertices per frame, the form metrics consume."""
    F = len(poses)
    out = SequenceEval(meta)
    for side in ("left", "right"):
        if all(p.hand(side) is not None for p in poses) and F:
            model = assets.hand(side)
            setattr(out, f"joints_{side}", np.stack([hand_joints(model, p.hand(side)) for p in poses]))
    if all(p.object is not None for p in poses) and F:
        out.omega = np.array([p.object.omega for p in poses])
        parts = [pose_object(assets.object, p.object) for p in poses]
        out.verts_bottom = np.stack([b.vertices for b, _ in parts])
        out.verts_top = np.stack([t.vertices for _, t in parts])
    if fields is not None:
        if len(fields) != F:
            raise DataError(f"{meta.sequence_id}: {len(fields)} field frames for {F} pose frames")
        names = set.intersection(*(set(f) for f in fields)) if fields else set()
        out.fields = {n: np.stack([f[n].distances for f in fields]) for n in sorted(names)}
    return out


def load_sequence_eval(entry, with_fields=True):
    if entry.poses is None:
        raise DataError(f"{entry.meta.sequence_id}: dataset entry has no poses")
    fields = load_field_set(entry.fields) if with_fields and entry.fields is not None else None
    return sequence_eval(entry.meta, load_assets(entry.assets), load_poses(entry.poses), fields)


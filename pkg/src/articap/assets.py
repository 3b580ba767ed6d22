"""Asset files.

Hand: one JSON manifest. Each array entry is ``{"dtype": "<f8", "shape": [...]}``
plus either ``"data"`` (base64 of the little-endian bytes) or ``"path"`` (a raw
file next to the manifest). Parents are a plain integer list.

Object: JSON manifest naming two ASCII OBJ files (triangles only) plus hinge
axis, rest angle and landmark list.
"""
import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .models import NUM_BETAS, ArticulatedObject, HandModel, Mesh

HAND_FORMAT = "articap-hand"
OBJECT_FORMAT = "articap-object"
FORMAT_VERSION = 1

_HAND_ARRAYS = {
    "template": "<f8",
    "faces": "<i4",
    "shape_blendshapes": "<f8",
    "skinning_weights": "<f8",
    "joint_regressor": "<f8",
    "rest_joint_offsets": "<f8",
}


def encode_array(a, dtype="<f8", path=None, root=None):
    a = np.ascontiguousarray(a, dtype=np.dtype(dtype))
    entry = {"dtype": dtype, "shape": list(a.shape)}
    if path is None:
        entry["data"] = base64.b64encode(a.tobytes()).decode("ascii")
    else:
        Path(root, path).write_bytes(a.tobytes())
        entry["path"] = str(path)
    return entry


def decode_array(entry, root="."):
    try:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        if "data" in entry:
            raw = base64.b64decode(entry["data"])
        else:
            raw = Path(root, entry["path"]).read_bytes()
        return np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    except (KeyError, ValueError, TypeError, OSError) as exc:
        raise DataError(f"bad array entry: {exc}") from exc


def hand_to_manifest(model, root=None, stem=None):
    """Manifest dict; arrays are inlined unless ``root``/``stem`` ask for raw sidecar files."""
    arrays = {
        "template": model.template.vertices,
        "faces": model.template.faces,
        "shape_blendshapes": model.shape_blendshapes,
        "skinning_weights": model.skinning_weights,
        "joint_regressor": model.joint_regressor,
        "rest_joint_offsets": model.rest_joint_offsets,
    }
    out = {"format": HAND_FORMAT, "version": FORMAT_VERSION, "parents": model.parents.tolist(), "arrays": {}}
    for name, a in arrays.items():
        path = None if stem is None else f"{stem}.{name}.bin"
        out["arrays"][name] = encode_array(a, _HAND_ARRAYS[name], path=path, root=root)
    return out


def hand_from_manifest(d, root="."):
    if d.get("format") != HAND_FORMAT:
        raise DataError(f"not a hand manifest (format={d.get('format')!r})")
    try:
        arr = {k: decode_array(v, root) for k, v in d["arrays"].items()}
        return HandModel(
            template=Mesh(arr["template"], arr["faces"]),
            shape_blendshapes=arr["shape_blendshapes"],
            skinning_weights=arr["skinning_weights"],
            parents=np.asarray(d["parents"]),
            joint_regressor=arr["joint_regressor"],
            rest_joint_offsets=arr["rest_joint_offsets"],
        )
    except KeyError as exc:
        raise DataError(f"hand manifest missing {exc}") from exc


def save_hand(model, path, inline=True):
    path = Path(path)
    d = hand_to_manifest(model, root=path.parent, stem=None if inline else path.stem)
    path.write_text(dumps(d))


def load_hand(path):
    path = Path(path)
    return hand_from_manifest(_read_json(path), root=path.parent)


# -- OBJ ----------------------------------------------------------------------

def write_obj(mesh, path):
    lines = ["v %.17g %.17g %.17g" % tuple(v) for v in mesh.vertices]
    lines += ["f %d %d %d" % tuple(f + 1) for f in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path):
    verts, faces = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            if len(idx) != 3:
                raise DataError(f"{path}:{lineno}: only triangle faces are supported")
            faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    if not verts:
        raise DataError(f"{path}: no vertices")
    return Mesh(np.array(verts), np.array(faces, dtype=np.int64).reshape(-1, 3))


# -- object -------------------------------------------------------------------

def object_to_manifest(obj, base_obj="object_base.obj", top_obj="object_top.obj"):
    return {
        "format": OBJECT_FORMAT,
        "version": FORMAT_VERSION,
        "base_obj": base_obj,
        "top_obj": top_obj,
        "axis_origin": obj.axis_origin.tolist(),
        "axis_direction": obj.axis_direction.tolist(),
        "rest_angle": obj.rest_angle,
        "landmarks": [[p, i] for p, i in obj.landmarks],
        "fps_start": obj.fps_start,
    }


def save_object(obj, path):
    path = Path(path)
    stem = path.stem
    d = object_to_manifest(obj, f"{stem}_base.obj", f"{stem}_top.obj")
    write_obj(obj.base_part, path.parent / d["base_obj"])
    write_obj(obj.top_part, path.parent / d["top_obj"])
    path.write_text(dumps(d))


def load_object(path):
    path = Path(path)
    d = _read_json(path)
    if d.get("format") != OBJECT_FORMAT:
        raise DataError(f"not an object manifest (format={d.get('format')!r})")
    try:
        return ArticulatedObject(
            base_part=read_obj(path.parent / d["base_obj"]),
            top_part=read_obj(path.parent / d["top_obj"]),
            axis_origin=d["axis_origin"],
            axis_direction=d["axis_direction"],
            rest_angle=d.get("rest_angle", 0.0),
            landmarks=[tuple(x) for x in d.get("landmarks", [])],
            fps_start=d.get("fps_start", 0),
        )
    except KeyError as exc:
        raise DataError(f"object manifest missing {exc}") from exc


# -- json ---------------------------------------------------------------------

def dumps(obj):
    """Canonical JSON text used for every file the toolkit writes."""
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


read_json = _read_json


# -- bundle -------------------------------------------------------------------

BUNDLE_FORMAT = "articap-assets"


@dataclass(frozen=True, eq=False)
class CaptureAssets:
    """Everything a capture session needs: both hands, the object, per-subject shapes."""

    left: HandModel
    right: HandModel
    object: ArticulatedObject
    left_beta: np.ndarray = None
    right_beta: np.ndarray = None

    def hand(self, side):
        return self.left if side == "left" else self.right

    def beta(self, side):
        b = self.left_beta if side == "left" else self.right_beta
        return np.zeros(NUM_BETAS) if b is None else np.asarray(b, dtype=np.float64)


def save_assets(assets, directory, prefix=""):
    """Write hand manifests, object manifest + OBJs and the bundle manifest; returns the bundle path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_hand(assets.left, d / f"{prefix}left_hand.json")
    save_hand(assets.right, d / f"{prefix}right_hand.json")
    save_object(assets.object, d / f"{prefix}object.json")
    bundle = {
        "format": BUNDLE_FORMAT,
        "version": FORMAT_VERSION,
        "left_hand": f"{prefix}left_hand.json",
        "right_hand": f"{prefix}right_hand.json",
        "object": f"{prefix}object.json",
        "betas": {"left": assets.beta("left").tolist(), "right": assets.beta("right").tolist()},
    }
    path = d / f"{prefix}assets.json"
    path.write_text(dumps(bundle))
    return path


def load_assets(path):
    """Asset bundle from its ``assets.json`` or from the directory holding it."""
    path = Path(path)
    if path.is_dir():
        path = path / "assets.json"
    b = _read_json(path)
    if b.get("format") != BUNDLE_FORMAT:
        raise DataError(f"not an asset bundle (format={b.get('format')!r})")
    root = path.parent
    betas = b.get("betas", {})
    return CaptureAssets(
        left=load_hand(root / b["left_hand"]),
        right=load_hand(root / b["right_hand"]),
        object=load_object(root / b["object"]),
        left_beta=np.asarray(betas.get("left", np.zeros(NUM_BETAS)), dtype=np.float64),
        right_beta=np.asarray(betas.get("right", np.zeros(NUM_BETAS)), dtype=np.float64),
    )

"""Interaction fields, binary contact and contact heatmaps.

An interaction field from mesh A to mesh B holds, for every vertex of A, the
distance to the closest vertex of B, clamped at ``d_max`` (10 cm by default).
"""
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DataError
from .models import Mesh

DEFAULT_D_MAX = 0.100
DEFAULT_CONTACT_THRESHOLD = 0.005
FIELD_NAMES = ("l->o", "r->o", "o->l", "o->r")
_FIELD_ENTITIES = {"l->o": ("left", "object"), "r->o": ("right", "object"),
                   "o->l": ("object", "left"), "o->r": ("object", "right")}


@dataclass(frozen=True, eq=False)
class InteractionField:
    source: str
    target: str
    distances: np.ndarray
    d_max: float = DEFAULT_D_MAX

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=np.float64).ravel()
        if (d < 0).any() or (d > self.d_max).any() or not np.isfinite(d).all():
            raise DataError("field distances must lie in [0, d_max]")
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)

    def __len__(self):
        return len(self.distances)


@dataclass(frozen=True, eq=False)
class ContactHeatmap:
    entity: str
    frequencies: np.ndarray
    frame_count: int


def _points(m):
    v = m.vertices if isinstance(m, Mesh) else np.asarray(m, dtype=np.float64).reshape(-1, 3)
    if len(v) == 0:
        raise DataError("empty mesh")
    return v


def _triangle_distances(p, tri):
    """Distance from each point (N, 3) to each triangle (T, 3, 3); returns (N, T)."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, ac = b - a, c - a
    ap = p[:, None] - a[None]
    d1 = np.einsum("ntk,tk->nt", ap, ab)
    d2 = np.einsum("ntk,tk->nt", ap, ac)
    bp = p[:, None] - b[None]
    d3 = np.einsum("ntk,tk->nt", bp, ab)
    d4 = np.einsum("ntk,tk->nt", bp, ac)
    cp = p[:, None] - c[None]
    d5 = np.einsum("ntk,tk->nt", cp, ab)
    d6 = np.einsum("ntk,tk->nt", cp, ac)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        # interior barycentric; the region tests below override the outside cases
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        closest = a[None] + v[..., None] * ab[None] + w[..., None] * ac[None]
        t_ab = d1 / (d1 - d3)
        on_ab = a[None] + t_ab[..., None] * ab[None]
        t_ac = d2 / (d2 - d6)
        on_ac = a[None] + t_ac[..., None] * ac[None]
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        on_bc = b[None] + t_bc[..., None] * (c - b)[None]
    regions = [
        (d1 <= 0) & (d2 <= 0), (d3 >= 0) & (d4 <= d3), (d6 >= 0) & (d5 <= d6),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0), (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
    ]
    choices = [np.broadcast_to(a[None], closest.shape), np.broadcast_to(b[None], closest.shape),
               np.broadcast_to(c[None], closest.shape), on_ab, on_ac, on_bc]
    for mask, pt in zip(reversed(regions), reversed(choices)):
        closest = np.where(mask[..., None], pt, closest)
    return np.linalg.norm(p[:, None] - closest, axis=-1)


def field_bruteforce(source, target, d_max=DEFAULT_D_MAX, mode="vertex", names=("a", "b"), chunk=512):
    """Exact field by checking every source/target pair.

    ``mode="surface"`` measures to the closest point on the target's triangles
    instead of its vertices (off by default).
    """
    a = _points(source)
    if mode == "vertex":
        b = _points(target)
        out = np.empty(len(a))
        for i in range(0, len(a), chunk):
            diff = a[i:i + chunk, None, :] - b[None]
            out[i:i + chunk] = np.sqrt((diff * diff).sum(axis=-1)).min(axis=1)
    elif mode == "surface":
        if not isinstance(target, Mesh) or len(target.faces) == 0:
            raise DataError("surface mode needs a target mesh with faces")
        tri = target.vertices[target.faces]
        out = np.empty(len(a))
        step = max(1, chunk * 64 // max(len(tri), 1))
        for i in range(0, len(a), step):
            out[i:i + step] = _triangle_distances(a[i:i + step], tri).min(axis=1)
    else:
        raise DataError(f"unknown field mode {mode!r}")
    return InteractionField(names[0], names[1], np.minimum(out, d_max), d_max)


def field_fast(source, target, d_max=DEFAULT_D_MAX, mode="vertex", names=("a", "b"), backend=None):
    """Same values as :func:`field_bruteforce`, via a spatial grid (or k-d tree fallback)."""
    if mode == "surface":
        # TODO(fields): grid-pruned triangle queries; brute force is exact but O(V*T)
        return field_bruteforce(source, target, d_max, mode, names)
    if mode != "vertex":
        raise DataError(f"unknown field mode {mode!r}")
    a = _points(source)
    b = _points(target)
    return InteractionField(names[0], names[1], kernels.nearest_distances(a, b, d_max, backend=backend), d_max)


def contact_labels(field, threshold=DEFAULT_CONTACT_THRESHOLD):
    """Per-vertex contact: distance at or below ``threshold``."""
    if threshold < 0:
        raise DataError("contact threshold must be nonnegative")
    d = field.distances if isinstance(field, InteractionField) else np.asarray(field)
    return d <= threshold


def aggregate_heatmap(label_frames, entity=""):
    """Fraction of frames in which each vertex is in contact."""
    frames = [np.asarray(f, dtype=bool) for f in label_frames]
    if not frames:
        raise DataError("no label frames to aggregate")
    if len({len(f) for f in frames}) != 1:
        raise DataError("label frames have different vertex counts")
    counts = np.sum(frames, axis=0)
    return ContactHeatmap(entity, counts / len(frames), len(frames))


def extract_gt_fields(left, right, obj, d_max=DEFAULT_D_MAX, backend=None):
    """The four fields l->o, r->o, o->l, o->r for posed meshes in a common frame."""
    meshes = {"left": left, "right": right, "object": obj}
    out = {}
    for name in FIELD_NAMES:
        s, t = _FIELD_ENTITIES[name]
        out[name] = field_fast(meshes[s], meshes[t], d_max, names=(s, t), backend=backend)
    return out


# -- files --------------------------------------------------------------------

FIELD_FORMAT = "articap-field"


def field_header(field):
    return {"format": FIELD_FORMAT, "source": field.source, "target": field.target, "count": len(field),
            "d_max": float(field.d_max)}


def save_field(field, path, binary=False):
    """JSON, or a JSON header line followed by little-endian float32 values."""
    path = Path(path)
    head = field_header(field)
    if binary:
        with open(path, "wb") as fh:
            fh.write((json.dumps(head, sort_keys=True) + "\n").encode())
            fh.write(field.distances.astype("<f4").tobytes())
    else:
        path.write_text(json.dumps({**head, "distances": field.distances.tolist()}, sort_keys=True) + "\n")


def load_field(path):
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        nl = len(raw)
    try:
        head = json.loads(raw[:nl])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: bad field header: {exc}") from exc
    if head.get("format") != FIELD_FORMAT:
        raise DataError(f"{path}: not a field file")
    if "distances" in head:
        d = np.asarray(head["distances"], dtype=np.float64)
    else:
        d = np.frombuffer(raw[nl + 1:], dtype="<f4").astype(np.float64)
        # float32 rounding can step just past the clamp
        d = np.minimum(d, head["d_max"])
    if len(d) != head["count"]:
        raise DataError(f"{path}: expected {head['count']} distances, found {len(d)}")
    return InteractionField(head["source"], head["target"], d, head["d_max"])

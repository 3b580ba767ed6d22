"""Synthetic ground truth: a low-poly mitten hand, hinged objects, smooth
trajectories and simulated markers with noise and dropout."""
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .assets import CaptureAssets
from .capture import FramePose, MarkerCorrespondence, MarkerFrame, MarkerSequence
from .errors import DataError
from .models import (
    NUM_BETAS,
    NUM_JOINTS,
    NUM_REGRESSED,
    ArticulatedObject,
    HandModel,
    HandParams,
    Mesh,
    ObjectPose,
    fps_landmarks,
    pose_object,
    pose_vertices,
)

OBJECT_KINDS = ("box-hinge", "flap", "scissors-like")

# MANO joint order: wrist, index 1-3, middle 1-3, pinky 1-3, ring 1-3, thumb 1-3
_FINGERS = {
    "index": dict(joints=(1, 2, 3), base=(0.030, 0.090, 0.0), dir=(0.08, 1.0, 0.0), lengths=(0.040, 0.025, 0.020)),
    "middle": dict(joints=(4, 5, 6), base=(0.010, 0.092, 0.0), dir=(0.0, 1.0, 0.0), lengths=(0.044, 0.028, 0.021)),
    "pinky": dict(joints=(7, 8, 9), base=(-0.030, 0.084, 0.0), dir=(-0.12, 1.0, 0.0), lengths=(0.030, 0.020, 0.017)),
    "ring": dict(joints=(10, 11, 12), base=(-0.010, 0.090, 0.0), dir=(-0.05, 1.0, 0.0), lengths=(0.040, 0.026, 0.020)),
    "thumb": dict(joints=(13, 14, 15), base=(0.038, 0.025, -0.005), dir=(0.8, 0.6, -0.1), lengths=(0.035, 0.030, 0.025)),
}
_TIP_ORDER = ("thumb", "index", "middle", "ring", "pinky")
_FINGER_RADIUS = 0.008


# -- meshes -------------------------------------------------------------------

def box_mesh(lo, hi, n):
    """Watertight cuboid with ``n`` subdivisions per edge and outward-facing triangles."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    index = {}
    verts = []

    def vid(ijk):
        if ijk not in index:
            index[ijk] = len(verts)
            verts.append(lo + (hi - lo) * np.asarray(ijk) / n)
        return index[ijk]

    faces = []
    for axis in range(3):
        u, v = (axis + 1) % 3, (axis + 2) % 3
        for side in (0, n):
            for a in range(n):
                for b in range(n):
                    quad = []
                    for da, db in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        ijk = [0, 0, 0]
                        ijk[axis], ijk[u], ijk[v] = side, a + da, b + db
                        quad.append(vid(tuple(ijk)))
                    # (u, v, axis) is right-handed, so this winding faces +axis
                    if side == 0:
                        quad = quad[::-1]
                    faces.append([quad[0], quad[1], quad[2]])
                    faces.append([quad[0], quad[2], quad[3]])
    return Mesh(np.array(verts), np.array(faces))


def _frame(d):
    d = np.asarray(d, dtype=np.float64)
    d = d / np.linalg.norm(d)
    up = np.array([0.0, 0.0, 1.0])
    u = np.cross(d, up)
    u /= np.linalg.norm(u)
    n = np.cross(u, d)
    return d, u, n


def generate_hand_asset(side="right", palm_resolution=4):
    """Mitten hand honouring the HandModel contract (16 joints, 21 regressed points).

    The wrist pivot sits at the origin, fingers extend along +y and the dorsal
    side faces +z. The left hand is the mirror image in x.
    """
    palm = box_mesh((-0.04, 0.0, -0.012), (0.04, 0.09, 0.012), palm_resolution)
    verts = [palm.vertices]
    faces = [palm.faces]
    weights = [np.tile(np.eye(NUM_JOINTS)[0], (palm.num_vertices, 1))]
    nv = palm.num_vertices
    pivots = np.zeros((NUM_JOINTS, 3))
    parents = np.full(NUM_JOINTS, -1)
    ring_of_joint = {}
    tip_vertex = {}

    def ring(center, u, n):
        r = _FINGER_RADIUS
        return np.array([center + r * n, center + r * u, center - r * n, center - r * u])

    for name, f in _FINGERS.items():
        d, u, n = _frame(f["dir"])
        base = np.asarray(f["base"])
        joint_pos = [base]
        for L in f["lengths"]:
            joint_pos.append(joint_pos[-1] + L * d)
        j1, j2, j3 = f["joints"]
        chain = (0, j1, j2, j3)
        for k, j in enumerate(f["joints"]):
            parents[j] = chain[k]
            pivots[j] = joint_pos[k]

        rings, rw = [], []
        for k in range(3):
            w = np.zeros(NUM_JOINTS)
            w[chain[k]] += 0.5
            w[chain[k + 1]] += 0.5
            rings.append(ring(joint_pos[k], u, n))
            rw.append(w)
            ring_of_joint[chain[k + 1]] = nv + 4 * (len(rings) - 1) + np.arange(4)
            w = np.eye(NUM_JOINTS)[chain[k + 1]]
            rings.append(ring(0.5 * (joint_pos[k] + joint_pos[k + 1]), u, n))
            rw.append(w)
        rings.append(ring(joint_pos[3], u, n))
        rw.append(np.eye(NUM_JOINTS)[j3])
        R = len(rings)
        fv = np.vstack(rings)
        start_c = nv + 4 * R
        tip_c = start_c + 1
        fv = np.vstack([fv, joint_pos[0], joint_pos[3] + _FINGER_RADIUS * d])
        fw = [w for w in rw for _ in range(4)]
        w0 = np.zeros(NUM_JOINTS)
        w0[0] = w0[j1] = 0.5
        fw += [w0, np.eye(NUM_JOINTS)[j3]]
        ff = []
        for r in range(R - 1):
            for q in range(4):
                a = nv + 4 * r + q
                b = nv + 4 * r + (q + 1) % 4
                c = a + 4
                e = b + 4
                ff += [[a, b, e], [a, e, c]]
        for q in range(4):
            ff.append([start_c, nv + (q + 1) % 4, nv + q])
            a = nv + 4 * (R - 1) + q
            b = nv + 4 * (R - 1) + (q + 1) % 4
            ff.append([a, b, tip_c])
        tip_vertex[name] = tip_c
        verts.append(fv)
        faces.append(np.array(ff))
        weights.append(np.array(fw))
        nv += len(fv)

    V = np.vstack(verts)
    F = np.vstack(faces)
    W = np.vstack(weights)

    reg = np.zeros((NUM_REGRESSED, len(V)))
    wrist = np.flatnonzero(np.abs(palm.vertices[:, 1]) < 1e-12)
    reg[0, wrist] = 1.0 / len(wrist)
    for j, ids in ring_of_joint.items():
        reg[j, ids] = 0.25
    for k, name in enumerate(_TIP_ORDER):
        reg[NUM_JOINTS + k, tip_vertex[name]] = 1.0
    pivots[0] = reg[0] @ V

    S = _shape_basis(V)
    if side == "left":
        V = V * [-1.0, 1.0, 1.0]
        F = F[:, ::-1]
        S = S * np.array([-1.0, 1.0, 1.0])[None, :, None]
        pivots = pivots * [-1.0, 1.0, 1.0]
    elif side != "right":
        raise DataError(f"side must be 'left' or 'right', got {side!r}")

    return HandModel(Mesh(V, F), S, W, parents, reg, pivots)


def _shape_basis(V):
    """Ten smooth displacement fields (meters per unit coefficient)."""
    x, y, z = V.T
    S = np.zeros((len(V), 3, NUM_BETAS))
    S[:, :, 0] = 0.05 * V  # overall size
    S[:, 1, 1] = 0.04 * np.clip(y - 0.09, 0.0, None)  # finger length
    S[:, 0, 2] = 0.05 * x  # width
    S[:, 2, 3] = 0.08 * z  # thickness
    S[:, 1, 4] = 0.03 * y
    for k in range(5, NUM_BETAS):
        S[:, k % 3, k] = 0.002 * np.sin((k - 3) * 20.0 * x + (k - 4) * 15.0 * y + 10.0 * z)
    return S


def hand_marker_vertices(model, layout="dense"):
    """Marker vertex ids: dorsal palm points plus one (sparse) or two (dense) per finger segment.

    Segment markers are the first vertices skinned rigidly to each finger joint,
    which on the mitten are the dorsal and lateral points of the mid-segment ring.
    """
    per = {"dense": 2, "sparse": 1}.get(layout)
    if per is None:
        raise DataError(f"unknown hand marker layout {layout!r}")
    W = model.skinning_weights
    V = model.template.vertices
    palm = np.flatnonzero(W[:, 0] > 1.0 - 1e-12)
    dorsal = palm[np.abs(V[palm, 2] - V[palm, 2].max()) < 1e-9]
    pts = V[dorsal]
    span = np.ptp(pts[:, :2], axis=0) / 2.0
    mid = pts[:, :2].min(axis=0) + span
    rel = (pts[:, :2] - mid) / np.where(span > 0, span, 1.0)
    ids = []
    # four corners, the centre, and the knuckle-side edge centre of the dorsal face
    for tx, ty in ((-1, -1), (1, -1), (-1, 1), (1, 1), (0, 0), (0, 1)):
        ids.append(int(dorsal[np.argmin(np.hypot(rel[:, 0] - tx, rel[:, 1] - ty))]))
    ids = list(dict.fromkeys(ids))
    for j in range(1, NUM_JOINTS):
        rigid = np.flatnonzero(W[:, j] > 1.0 - 1e-12)
        ids += [int(i) for i in rigid[:per]]
    return ids


def generate_object_asset(kind="box-hinge", resolution=6, n_landmarks=16):
    """Two watertight cuboid parts sharing a hinge; rest angle 0 is the closed pose."""
    if resolution < 1:
        raise DataError("resolution must be at least 1")
    n = resolution
    if kind == "box-hinge":
        base = box_mesh((-0.10, -0.07, 0.0), (0.10, 0.07, 0.08), n)
        top = box_mesh((-0.10, -0.07, 0.08), (0.10, 0.07, 0.095), n)
        origin, direction = (0.0, -0.07, 0.08), (1.0, 0.0, 0.0)
    elif kind == "flap":
        base = box_mesh((-0.12, 0.0, 0.0), (0.12, 0.16, 0.010), n)
        top = box_mesh((-0.12, 0.0, 0.010), (0.12, 0.16, 0.018), n)
        origin, direction = (0.0, 0.0, 0.010), (1.0, 0.0, 0.0)
    elif kind == "scissors-like":
        base = box_mesh((-0.10, -0.008, 0.0), (0.06, 0.008, 0.006), n)
        top = box_mesh((-0.10, -0.008, 0.006), (0.06, 0.008, 0.012), n)
        origin, direction = (0.0, 0.0, 0.0), (0.0, 0.0, 1.0)
    else:
        raise DataError(f"unknown object kind {kind!r}; choose from {OBJECT_KINDS}")
    merged = np.vstack([base.vertices, top.vertices])
    picks = fps_landmarks(merged, min(n_landmarks, len(merged)), 0)
    nb = base.num_vertices
    landmarks = [("base", int(i)) if i < nb else ("top", int(i - nb)) for i in picks]
    return ArticulatedObject(base, top, origin, direction, 0.0, landmarks, fps_start=0)


def generate_assets(seed=0, object_kind="box-hinge", resolution=6, beta_sigma=0.5):
    """Both mitten hands, an object, and random per-subject shapes."""
    rng = np.random.default_rng(seed)
    return CaptureAssets(
        left=generate_hand_asset("left"),
        right=generate_hand_asset("right"),
        object=generate_object_asset(object_kind, resolution),
        left_beta=rng.normal(0.0, beta_sigma, NUM_BETAS),
        right_beta=rng.normal(0.0, beta_sigma, NUM_BETAS),
    )


# -- sequences ----------------------------------------------------------------

DEFAULT_AMPLITUDES = {
    "object_rotation": 0.4,  # rad, per axis-angle component
    "object_translation": 0.05,  # m
    "hand_rotation": 0.3,
    "hand_translation": 0.03,
    "finger_pose": 0.25,
}


@dataclass
class SynthConfig:
    seed: int = 0
    frame_count: int = 100
    fps: float = 30.0
    marker_noise_sigma: float = 0.0
    dropout_rate: float = 0.0
    articulation_min: float = 0.0
    articulation_max: float = 1.2
    keyframe_spacing: int = 15  # frames between keyframes; larger is smoother
    object_markers_per_part: int = 8
    hand_marker_layout: str = "dense"
    hands: bool = True
    amplitudes: dict = field(default_factory=lambda: dict(DEFAULT_AMPLITUDES))

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate <= 1.0:
            raise DataError("dropout_rate must be in [0, 1]")
        if self.marker_noise_sigma < 0:
            raise DataError("marker_noise_sigma must be nonnegative")
        if self.frame_count < 1 or self.fps <= 0 or self.keyframe_spacing < 1:
            raise DataError("frame_count, fps and keyframe_spacing must be positive")
        if self.articulation_max < self.articulation_min:
            raise DataError("articulation_max must not be below articulation_min")
        if self.object_markers_per_part < 3:
            raise DataError("need at least 3 markers per object part")
        unknown = set(self.amplitudes) - set(DEFAULT_AMPLITUDES)
        if unknown:
            raise DataError(f"unknown amplitude keys {sorted(unknown)}")

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        bad = set(d) - known
        if bad:
            raise DataError(f"unknown synth config keys {sorted(bad)}")
        d = dict(d)
        if "amplitudes" in d:
            amps = dict(DEFAULT_AMPLITUDES)
            amps.update(d["amplitudes"])
            d["amplitudes"] = amps
        return cls(**d)

    def to_dict(self):
        return asdict(self)


def smooth_track(rng, frame_count, spacing, lo, hi):
    """Band-limited random walk: random keyframes in [lo, hi] joined by monotone cubic (C1) pieces.

    The piecewise-cubic Hermite interpolant never overshoots its keyframes, so
    every sample stays within the bounds.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
    hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
    knots = np.arange(0, frame_count - 1 + spacing, spacing)
    if len(knots) < 2:
        knots = np.array([0, max(frame_count - 1, 1)])
    values = rng.uniform(lo, hi, size=(len(knots), len(lo)))
    return PchipInterpolator(knots, values, axis=0)(np.arange(frame_count))


def _object_correspondences(obj, per_part):
    corr = []
    for part, entity in (("base", "object-base"), ("top", "object-top")):
        mesh = obj.part(part)
        # start from a vertex other than the landmark seed so markers do not simply repeat the landmarks
        ids = fps_landmarks(mesh, min(per_part, mesh.num_vertices), start=mesh.num_vertices // 2)
        corr += [MarkerCorrespondence(f"{part}{k:02d}", entity, int(i)) for k, i in enumerate(ids)]
    return corr


def default_correspondences(assets, config):
    corr = _object_correspondences(assets.object, config.object_markers_per_part)
    if config.hands:
        for side in ("left", "right"):
            ids = hand_marker_vertices(assets.hand(side), config.hand_marker_layout)
            corr += [MarkerCorrespondence(f"{side[0]}h{k:02d}", f"{side}-hand", int(i)) for k, i in enumerate(ids)]
    return corr


def generate_trajectories(assets, config, rng):
    F = config.frame_count
    sp = config.keyframe_spacing
    a = config.amplitudes
    base_rot = np.array([0.0, 0.0, 0.3])
    center = np.array([0.0, 0.0, 0.6])
    omega = smooth_track(rng, F, sp, config.articulation_min, config.articulation_max)[:, 0]
    rot = smooth_track(rng, F, sp, base_rot - a["object_rotation"], base_rot + a["object_rotation"])
    trans = smooth_track(rng, F, sp, center - a["object_translation"], center + a["object_translation"])
    tracks = {"object": (omega, rot, trans)}
    if config.hands:
        for side, sign in (("left", -1.0), ("right", 1.0)):
            hr0 = np.array([0.3, 0.0, -sign * 0.4])
            ht0 = center + np.array([sign * 0.14, -0.05, 0.06])
            hrot = smooth_track(rng, F, sp, hr0 - a["hand_rotation"], hr0 + a["hand_rotation"])
            htr = smooth_track(rng, F, sp, ht0 - a["hand_translation"], ht0 + a["hand_translation"])
            fp = a["finger_pose"]
            # fingers curl about their lateral axis; bias the flexion component
            lo = np.tile([-fp * 0.3, -fp * 0.3, -fp * 0.3], NUM_JOINTS - 1)
            hi = np.tile([fp * 0.3, fp * 0.3, fp * 0.3], NUM_JOINTS - 1)
            lo[0::3] -= fp * 0.5
            hi[0::3] += fp * 0.5
            fingers = smooth_track(rng, F, sp, lo, hi)
            tracks[side] = (np.concatenate([hrot, fingers], axis=1), htr)
    return tracks


def generate_sequence(assets, config):
    """Simulate one capture: ground-truth poses and noisy, partially occluded markers.

    Returns (MarkerSequence, list of FramePose). Deterministic given ``config.seed``.
    """
    if not isinstance(config, SynthConfig):
        raise DataError("config must be a SynthConfig")
    rng = np.random.default_rng(config.seed)
    corr = default_correspondences(assets, config)
    tracks = generate_trajectories(assets, config, rng)
    F = config.frame_count

    gt = []
    clean = np.zeros((F, len(corr), 3))
    obj = assets.object
    by_entity = {}
    for k, c in enumerate(corr):
        by_entity.setdefault(c.entity, []).append(k)
    omega, rot, trans = tracks["object"]
    for f in range(F):
        rec = FramePose(object=ObjectPose(omega[f], rot[f], trans[f]))
        base, top = pose_object(obj, rec.object)
        for k in by_entity.get("object-base", []):
            clean[f, k] = base.vertices[corr[k].vertex_index]
        for k in by_entity.get("object-top", []):
            clean[f, k] = top.vertices[corr[k].vertex_index]
        gt.append(rec)
    if config.hands:
        for side in ("left", "right"):
            theta, T = tracks[side]
            beta = assets.beta(side)
            ks = by_entity[f"{side}-hand"]
            ids = [corr[k].vertex_index for k in ks]
            V = pose_vertices(assets.hand(side), theta, beta, T, vertex_ids=ids)
            clean[:, ks] = V
            for f in range(F):
                setattr(gt[f], side, HandParams(theta[f], beta, T[f]))

    noisy = clean + rng.normal(0.0, config.marker_noise_sigma, clean.shape) if config.marker_noise_sigma > 0 else clean
    dropped = rng.random((F, len(corr))) < config.dropout_rate
    frames = []
    for f in range(F):
        pos = {c.marker_id: (None if dropped[f, k] else noisy[f, k].copy()) for k, c in enumerate(corr)}
        frames.append(MarkerFrame(f / config.fps, pos))
    return MarkerSequence(corr, frames, fps=config.fps), gt

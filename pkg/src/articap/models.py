"""Parametric hand model, single-hinge articulated object, and camera helpers.

The hand is shape blendshapes + forward kinematics + linear blend skinning
(no pose correctives). Global rotation pivots at the model-frame origin, child
joints pivot at their rest locations. All geometry is in meters.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DataError, DegenerateInputError, ParameterError
from .geometry import rodrigues

NUM_JOINTS = 16
NUM_REGRESSED = 21
NUM_BETAS = 10
POSE_DIM = 3 * NUM_JOINTS


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        v = _frozen(self.vertices)
        f = _frozen(np.asarray(self.faces).reshape(-1, 3), dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) < 1:
            raise DataError(f"mesh needs a (V>=1, 3) vertex array, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise DataError("mesh vertices must be finite")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise DataError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def num_vertices(self):
        return len(self.vertices)

    def with_vertices(self, vertices):
        return Mesh(vertices, self.faces)


@dataclass(frozen=True, eq=False)
class HandModel:
    """Skinned hand: 16-joint tree, 21 regressed landmarks (16 joints + 5 tips)."""

    template: Mesh
    shape_blendshapes: np.ndarray  # (V, 3, 10)
    skinning_weights: np.ndarray  # (V, 16)
    parents: np.ndarray  # (16,), root = -1
    joint_regressor: np.ndarray  # (21, V)
    rest_joint_offsets: np.ndarray  # (16, 3) joint pivots of the canonical template

    def __post_init__(self):
        V = self.template.num_vertices
        S = _frozen(self.shape_blendshapes)
        W = _frozen(self.skinning_weights)
        P = _frozen(self.parents, dtype=np.int64)
        R = _frozen(self.joint_regressor)
        J = _frozen(self.rest_joint_offsets)
        if S.shape != (V, 3, NUM_BETAS):
            raise DataError(f"shape_blendshapes must be ({V}, 3, {NUM_BETAS}), got {S.shape}")
        if W.shape != (V, NUM_JOINTS):
            raise DataError(f"skinning_weights must be ({V}, {NUM_JOINTS}), got {W.shape}")
        if (W < 0).any() or np.abs(W.sum(axis=1) - 1.0).max() > 1e-6:
            raise DataError("skinning weight rows must be nonnegative and sum to 1")
        if R.shape != (NUM_REGRESSED, V):
            raise DataError(f"joint_regressor must be ({NUM_REGRESSED}, {V}), got {R.shape}")
        if np.abs(R.sum(axis=1) - 1.0).max() > 1e-6:
            raise DataError("joint regressor rows must sum to 1")
        if J.shape != (NUM_JOINTS, 3):
            raise DataError(f"rest_joint_offsets must be ({NUM_JOINTS}, 3), got {J.shape}")
        object.__setattr__(self, "shape_blendshapes", S)
        object.__setattr__(self, "skinning_weights", W)
        object.__setattr__(self, "parents", P)
        object.__setattr__(self, "joint_regressor", R)
        object.__setattr__(self, "rest_joint_offsets", J)
        object.__setattr__(self, "_order", _topological_order(P))

    @property
    def num_vertices(self):
        return self.template.num_vertices


def _topological_order(parents):
    if parents.shape != (NUM_JOINTS,):
        raise DataError(f"kinematic tree needs {NUM_JOINTS} parent entries")
    roots = np.flatnonzero(parents < 0)
    if len(roots) != 1:
        raise DataError("kinematic tree must have exactly one root")
    if parents.max() >= NUM_JOINTS:
        raise DataError("parent index out of range")
    depth = {}
    for j in range(NUM_JOINTS):
        seen, k = set(), j
        while parents[k] >= 0:
            if k in seen:
                raise DataError("kinematic tree contains a cycle")
            seen.add(k)
            k = parents[k]
        depth[j] = len(seen)
    return tuple(sorted(range(NUM_JOINTS), key=lambda j: (depth[j], j)))


@dataclass(frozen=True, eq=False)
class HandParams:
    theta: np.ndarray = field(default_factory=lambda: np.zeros(POSE_DIM))
    beta: np.ndarray = field(default_factory=lambda: np.zeros(NUM_BETAS))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name, n in (("theta", POSE_DIM), ("beta", NUM_BETAS), ("translation", 3)):
            a = _frozen(getattr(self, name)).ravel()
            if a.shape != (n,):
                raise ParameterError(f"{name} must have {n} entries, got {a.size}")
            if not np.isfinite(a).all():
                raise ParameterError(f"{name} must be finite")
            object.__setattr__(self, name, a)

    def to_dict(self):
        return {"theta": self.theta.tolist(), "beta": self.beta.tolist(), "T": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["theta"], d["beta"], d["T"])


@dataclass(frozen=True, eq=False)
class ObjectPose:
    omega: float = 0.0
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        om = float(self.omega)
        R = _frozen(self.rotation).ravel()
        T = _frozen(self.translation).ravel()
        if R.shape != (3,) or T.shape != (3,):
            raise ParameterError("object rotation and translation need 3 entries each")
        if not (np.isfinite(om) and np.isfinite(R).all() and np.isfinite(T).all()):
            raise ParameterError("object pose must be finite")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", T)

    def as_vector(self):
        return np.concatenate([[self.omega], self.rotation, self.translation])

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (7,):
            raise ParameterError("object pose vector has 7 entries")
        return cls(v[0], v[1:4], v[4:7])

    def to_dict(self):
        return {"omega": self.omega, "rot": self.rotation.tolist(), "trans": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["omega"], d["rot"], d["trans"])


PARTS = ("base", "top")


@dataclass(frozen=True, eq=False)
class ArticulatedObject:
    base_part: Mesh
    top_part: Mesh
    axis_origin: np.ndarray
    axis_direction: np.ndarray
    rest_angle: float = 0.0
    landmarks: tuple = ()  # ((part, vertex_index), ...)
    fps_start: int = 0

    def __post_init__(self):
        o = _frozen(self.axis_origin).ravel()
        d = _frozen(self.axis_direction).ravel()
        if o.shape != (3,) or d.shape != (3,):
            raise DataError("hinge origin and direction need 3 entries")
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise DataError("hinge axis direction must be a unit vector")
        lms = tuple((str(p), int(i)) for p, i in self.landmarks)
        for part, idx in lms:
            mesh = self.part(part)
            if not 0 <= idx < mesh.num_vertices:
                raise DataError(f"landmark {part}:{idx} out of range")
        object.__setattr__(self, "axis_origin", o)
        object.__setattr__(self, "axis_direction", d)
        object.__setattr__(self, "rest_angle", float(self.rest_angle))
        object.__setattr__(self, "landmarks", lms)

    def part(self, name):
        if name == "base":
            return self.base_part
        if name == "top":
            return self.top_part
        raise DataError(f"unknown object part {name!r}")

    def landmark_points(self, base_vertices=None, top_vertices=None):
        """Landmark coordinates, by default in the canonical frame."""
        src = {
            "base": self.base_part.vertices if base_vertices is None else base_vertices,
            "top": self.top_part.vertices if top_vertices is None else top_vertices,
        }
        return np.array([src[p][i] for p, i in self.landmarks]).reshape(-1, 3)


@dataclass(frozen=True)
class CameraParams:
    s: float
    t_x: float
    t_y: float
    focal: float
    patch_width: float

    def __post_init__(self):
        if not (self.s > 0):
            raise DegenerateInputError(f"weak-perspective scale must be positive, got {self.s}")
        if not (self.focal > 0 and self.patch_width > 0):
            raise DataError("focal length and patch width must be positive")


# -- hand ---------------------------------------------------------------------

def _joint_pivots(model, beta):
    """Joint pivots (B, 16, 3) for shape coefficients (B, 10)."""
    dJ = np.einsum("jv,vcb,nb->njc", model.joint_regressor[:NUM_JOINTS], model.shape_blendshapes, beta)
    return model.rest_joint_offsets[None] + dJ


def joint_transforms(model, theta, beta):
    """World affine transforms (B, 16, 3, 4) of each joint for batched params."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1, NUM_JOINTS, 3)
    beta = np.asarray(beta, dtype=np.float64).reshape(-1, NUM_BETAS)
    B = max(len(theta), len(beta))
    pivots = np.broadcast_to(_joint_pivots(model, beta), (B, NUM_JOINTS, 3))
    R = np.broadcast_to(rodrigues(theta), (B, NUM_JOINTS, 3, 3))

    G_R = np.empty((B, NUM_JOINTS, 3, 3))
    G_t = np.empty((B, NUM_JOINTS, 3))
    for j in model._order:
        p = model.parents[j]
        if p < 0:
            G_R[:, j] = R[:, j]
            G_t[:, j] = 0.0
        else:
            # local: rotate about the joint pivot
            c = pivots[:, j]
            loc_t = c - np.einsum("bij,bj->bi", R[:, j], c)
            G_R[:, j] = G_R[:, p] @ R[:, j]
            G_t[:, j] = np.einsum("bij,bj->bi", G_R[:, p], loc_t) + G_t[:, p]
    return np.concatenate([G_R, G_t[..., None]], axis=-1)


def pose_vertices(model, theta, beta, translation, vertex_ids=None):
    """Batched posing of all (or a subset of) hand vertices.

    ``theta`` (B, 48), ``beta`` (B, 10) or (10,), ``translation`` (B, 3).
    Returns (B, S, 3).
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    beta = np.atleast_2d(np.asarray(beta, dtype=np.float64))
    translation = np.atleast_2d(np.asarray(translation, dtype=np.float64))
    ids = slice(None) if vertex_ids is None else np.asarray(vertex_ids, dtype=np.int64)
    v_shaped = model.template.vertices[ids][None] + np.einsum("vcb,nb->nvc", model.shape_blendshapes[ids], beta)
    G = joint_transforms(model, theta, beta)
    M = np.einsum("vk,bkij->bvij", model.skinning_weights[ids], G)
    out = np.einsum("bvij,bvj->bvi", M[..., :3], v_shaped) + M[..., 3]
    return out + translation[:, None, :]


def _check_hand_params(model, params):
    if not isinstance(params, HandParams):
        raise ParameterError("expected HandParams")
    return params


def pose_hand(model, params):
    """Posed hand mesh for ``params``; the template when all parameters are zero."""
    _check_hand_params(model, params)
    v = pose_vertices(model, params.theta, params.beta, params.translation)[0]
    return Mesh(v, model.template.faces)


def regress_joints(model, posed):
    """21 joint locations as ``W @ vertices`` of the posed mesh."""
    verts = posed.vertices if isinstance(posed, Mesh) else np.asarray(posed, dtype=np.float64)
    if verts.shape[-2] != model.num_vertices:
        raise DataError(f"expected {model.num_vertices} vertices, got {verts.shape[-2]}")
    return model.joint_regressor @ verts


def hand_joints(model, params):
    return regress_joints(model, pose_hand(model, params))


# -- object -------------------------------------------------------------------

def articulate_points(obj, points, omega):
    """Rotate canonical top-part points about the hinge to articulation ``omega``."""
    R = rodrigues(obj.axis_direction * (omega - obj.rest_angle))
    c = obj.axis_origin
    return (np.asarray(points) - c) @ R.T + c


def pose_object(obj, pose):
    """Posed (base, top) meshes: articulate the top about the hinge, then apply (R_o, T_o)."""
    R = rodrigues(pose.rotation)
    t = pose.translation
    base = obj.base_part.vertices @ R.T + t
    top = articulate_points(obj, obj.top_part.vertices, pose.omega) @ R.T + t
    return Mesh(base, obj.base_part.faces), Mesh(top, obj.top_part.faces)


def object_mesh(obj, pose):
    """Both parts merged into one mesh (top vertices after base vertices)."""
    base, top = pose_object(obj, pose)
    nb = base.num_vertices
    return Mesh(np.vstack([base.vertices, top.vertices]), np.vstack([base.faces, top.faces + nb]))


def object_root(base_vertices):
    """Object root: centroid of the bottom (base) part."""
    return np.asarray(base_vertices).mean(axis=-2)


# -- camera -------------------------------------------------------------------

def weak_to_perspective(cam):
    """Perspective translation ``(t_x, t_y, 2f / (w s))`` for a weak-perspective camera."""
    if not cam.s > 0:
        raise DegenerateInputError("weak-perspective scale must be positive")
    return np.array([cam.t_x, cam.t_y, 2.0 * cam.focal / (cam.patch_width * cam.s)])


def project(points, cam):
    """Pinhole projection after translating by the converted camera; principal point at the patch center."""
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3) + weak_to_perspective(cam)
    z = P[:, 2]
    if (z <= 0).any():
        raise DegenerateInputError("point behind the camera (nonpositive depth)")
    c = cam.patch_width / 2.0
    return np.stack([cam.focal * P[:, 0] / z + c, cam.focal * P[:, 1] / z + c], axis=1)


# -- landmarks ----------------------------------------------------------------

def fps_landmarks(mesh, k, start=0, backend=None):
    """Farthest point sampling over mesh vertices.

    Starts at ``start`` and greedily adds the vertex farthest from the
    selected set; ties go to the lowest index.
    """
    verts = mesh.vertices if isinstance(mesh, Mesh) else np.asarray(mesh, dtype=np.float64)
    n = len(verts)
    if k > n:
        raise DataError(f"cannot pick {k} landmarks from {n} vertices")
    if k < 0 or not 0 <= start < n:
        raise DataError("invalid landmark count or start index")
    return kernels.farthest_point_sampling(verts, k, start, backend=backend)

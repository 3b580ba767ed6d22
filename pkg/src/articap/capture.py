"""Marker-based solvers: rigid object pose, hinge angle, hinge calibration, hand fitting.

Residual RMS values reported by this module are taken over residual
components (x, y, z of every marker), so with isotropic noise of standard
deviation sigma they sit near sigma.
"""
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import CoverageError, DataError, DegenerateInputError, TooFewMarkersError, UnobservableError
from .geometry import matrix_to_rotvec, rodrigues, wrap_angle
from .models import POSE_DIM, HandParams, ObjectPose, pose_vertices

log = logging.getLogger(__name__)

HAND_ENTITIES = ("left-hand", "right-hand")
OBJECT_ENTITIES = ("object-base", "object-top")
ENTITIES = HAND_ENTITIES + OBJECT_ENTITIES

MIN_HAND_MARKERS = 4
MIN_PART_MARKERS = 3


@dataclass(frozen=True)
class MarkerCorrespondence:
    marker_id: str
    entity: str
    vertex_index: int

    def __post_init__(self):
        if self.entity not in ENTITIES:
            raise DataError(f"unknown entity {self.entity!r} for marker {self.marker_id!r}")


@dataclass
class MarkerFrame:
    time: float
    positions: dict  # marker_id -> (3,) array; missing or None = occluded

    def visible(self, marker_id):
        p = self.positions.get(marker_id)
        return p is not None

    def get(self, marker_id):
        return np.asarray(self.positions[marker_id], dtype=np.float64)


@dataclass
class MarkerSequence:
    correspondences: list
    frames: list
    fps: float = 30.0
    units: str = "m"

    @property
    def marker_ids(self):
        return [c.marker_id for c in self.correspondences]


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 50
    residual_tolerance: float = 1e-9
    damping_init: float = 1e-3
    step_tolerance: float = 1e-10
    cost_tolerance: float = 1e-10  # relative decrease of the squared residual
    fd_step: float = 1e-6

    def __post_init__(self):
        vals = (self.max_iterations, self.residual_tolerance, self.damping_init, self.step_tolerance,
                self.cost_tolerance, self.fd_step)
        if min(vals) <= 0:
            raise DataError("solver settings must all be positive")


@dataclass
class FramePose:
    """Per-frame pose record; ``None`` for entities that are not tracked."""

    left: HandParams = None
    right: HandParams = None
    object: ObjectPose = None
    flags: list = field(default_factory=list)

    def hand(self, side):
        return self.left if side == "left" else self.right

    def to_dict(self):
        return {
            "left": None if self.left is None else self.left.to_dict(),
            "right": None if self.right is None else self.right.to_dict(),
            "object": None if self.object is None else self.object.to_dict(),
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            left=None if d.get("left") is None else HandParams.from_dict(d["left"]),
            right=None if d.get("right") is None else HandParams.from_dict(d["right"]),
            object=None if d.get("object") is None else ObjectPose.from_dict(d["object"]),
            flags=list(d.get("flags", [])),
        )


def _rms(r):
    r = np.asarray(r)
    return float(np.sqrt(np.mean(r * r))) if r.size else 0.0


# -- rigid --------------------------------------------------------------------

def solve_rigid(source, target, weights=None):
    """Weighted Kabsch: rotation (axis-angle), translation and residual RMS mapping source onto target."""
    P = np.asarray(source, dtype=np.float64)
    Q = np.asarray(target, dtype=np.float64)
    if P.shape != Q.shape or P.ndim != 2 or P.shape[1] != 3:
        raise DataError(f"source/target must both be (N, 3), got {P.shape} and {Q.shape}")
    n = len(P)
    if n < 3:
        raise DegenerateInputError(f"need at least 3 correspondences, got {n}")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,) or (w < 0).any() or w.sum() <= 0:
        raise DataError("weights must be nonnegative with a positive sum")
    w = w / w.sum()

    p0 = w @ P
    q0 = w @ Q
    Pc = P - p0
    Qc = Q - q0
    sv = np.linalg.svd(Pc * np.sqrt(w)[:, None], compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-300) or sv[0] == 0:
        raise DegenerateInputError("source points are collinear or coincident")

    H = (Pc * w[:, None]).T @ Qc
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, 1.0, d if d != 0 else 1.0])
    R = Vt.T @ D @ U.T
    t = q0 - R @ p0
    res = P @ R.T + t - Q
    rms = float(np.sqrt(np.sum(w[:, None] * res * res) / 3.0))
    return matrix_to_rotvec(R), t, rms


def _invert(R, t):
    return R.T, -R.T @ t


# -- hinge axis ---------------------------------------------------------------

def estimate_axis(relative_poses, min_angle=np.deg2rad(1.0)):
    """Hinge axis from top-part poses expressed in the base-part frame.

    Each pose is taken relative to the first one, which leaves a pure rotation
    about the hinge. The direction is the angle-weighted mean of the per-frame
    rotation axes; the origin is the least-squares fixed point, with its
    component along the axis set to zero. Returns (direction, origin, rms).
    """
    poses = [(rodrigues(np.asarray(r, dtype=np.float64)), np.asarray(t, dtype=np.float64)) for r, t in relative_poses]
    if len(poses) < 2:
        raise UnobservableError("need at least two poses to observe a hinge axis")
    R0, t0 = poses[0]
    Ri0, ti0 = _invert(R0, t0)
    rel = []
    for R, t in poses[1:]:
        Rr = R @ Ri0
        rel.append((Rr, R @ ti0 + t))

    rotvecs = np.array([matrix_to_rotvec(R) for R, _ in rel])
    angles = np.linalg.norm(rotvecs, axis=1)
    use = angles > min_angle
    if use.sum() < 2:
        raise UnobservableError(f"{int(use.sum())} pose(s) rotate more than {np.rad2deg(min_angle):g} deg "
                                "from the first; need at least two")
    axes = rotvecs[use] / angles[use, None]
    # rotations of opposite sense give opposite axes; align with the largest one
    ref = axes[np.argmax(angles[use])]
    signs = np.where(axes @ ref < 0, -1.0, 1.0)
    direction = (signs[:, None] * axes * angles[use, None]).sum(axis=0)
    direction /= np.linalg.norm(direction)
    nz = np.flatnonzero(np.abs(direction) > 1e-12)
    if direction[nz[0]] < 0:
        direction = -direction

    # origin: minimise sum ||(R_i - I) p + t_i||^2 over p perpendicular to the axis
    basis = np.linalg.svd(np.eye(3) - np.outer(direction, direction))[0][:, :2]
    A = np.vstack([(R - np.eye(3)) @ basis for R, _ in rel])
    b = -np.concatenate([t for _, t in rel])
    y, *_ = np.linalg.lstsq(A, b, rcond=None)
    origin = basis @ y
    res = (A @ y - b).reshape(-1, 3)
    rms = float(np.sqrt(np.mean(np.sum(res * res, axis=1))))
    return direction, origin, rms


# -- articulation -------------------------------------------------------------

def articulation_objective(obj, canonical_points, base_frame_points, omega):
    """Sum of squared distances between articulated canonical points and observations."""
    R = rodrigues(obj.axis_direction * (omega - obj.rest_angle))
    c = obj.axis_origin
    pred = (canonical_points - c) @ R.T + c
    return float(np.sum((pred - base_frame_points) ** 2))


def solve_articulation(obj, base_pose, top_markers, correspondences=None, *, canonical_points=None, tol=1e-9):
    """Hinge angle from top-part markers, closed form about the fixed axis.

    ``base_pose`` is the object's ``(rotation, translation)`` (axis-angle). Either pass a
    :class:`MarkerFrame` with the top-part ``correspondences``, or raw world positions
    ``top_markers`` with matching ``canonical_points`` on the top part.
    """
    if isinstance(top_markers, MarkerFrame):
        corr = [c for c in correspondences or () if c.entity == "object-top" and top_markers.visible(c.marker_id)]
        observed = np.array([top_markers.get(c.marker_id) for c in corr]).reshape(-1, 3)
        canonical = obj.top_part.vertices[[c.vertex_index for c in corr]].reshape(-1, 3)
    else:
        observed = np.asarray(top_markers, dtype=np.float64).reshape(-1, 3)
        canonical = np.asarray(canonical_points, dtype=np.float64).reshape(-1, 3)
    if len(observed) == 0 or observed.shape != canonical.shape:
        raise UnobservableError("no usable top-part markers")

    R = rodrigues(np.asarray(base_pose[0], dtype=np.float64))
    t = np.asarray(base_pose[1], dtype=np.float64)
    local = (observed - t) @ R  # into the base frame

    n = obj.axis_direction
    c = obj.axis_origin
    a = canonical - c
    b = local - c
    a_perp = a - np.outer(a @ n, n)
    b_perp = b - np.outer(b @ n, n)
    if np.linalg.norm(a_perp, axis=1).max() < tol:
        raise UnobservableError("all top-part markers lie on the hinge line")
    cos_term = np.sum(a_perp * b_perp)
    sin_term = np.sum(np.cross(a_perp, b_perp) @ n)
    phi = np.arctan2(sin_term, cos_term)
    return float(obj.rest_angle + wrap_angle(phi))


# -- Levenberg-Marquardt ------------------------------------------------------

class LMResult(NamedTuple):
    x: np.ndarray
    rms: float
    accepted_steps: int
    converged: bool
    history: list  # rms after each accepted step, starting with the initial value


def central_difference_jacobian(fun, x, h):
    """Jacobian of a batched residual function via central differences.

    ``fun`` maps (B, n) parameter rows to (B, m) residual rows.
    """
    n = len(x)
    E = np.eye(n) * h
    X = np.vstack([x + E, x - E])
    F = fun(X)
    return (F[:n] - F[n:]).T / (2.0 * h)


def levenberg_marquardt(fun, x0, settings=None, jac=None):
    """Damped Gauss-Newton with Marquardt diagonal scaling.

    Damping starts at ``settings.damping_init``, is divided by 10 on an accepted
    step and multiplied by 10 on a rejected one. Returns the best iterate; the
    ``converged`` flag is False when the iteration budget ran out.
    """
    s = settings or SolverSettings()
    x = np.array(x0, dtype=np.float64)
    r = fun(x[None])[0]
    cost = float(r @ r)
    history = [_rms(r)]
    if history[0] <= s.residual_tolerance:
        return LMResult(x, history[0], 0, True, history)

    jac = jac or (lambda xx: central_difference_jacobian(fun, xx, s.fd_step))
    lam = s.damping_init
    accepted = 0
    converged = False
    for _ in range(s.max_iterations):
        J = jac(x)
        g = J.T @ r
        JtJ = J.T @ J
        diag = np.diag(JtJ).copy()
        diag = np.maximum(diag, 1e-12 * max(diag.max(), 1e-30))
        stepped = False
        while lam < 1e16:
            try:
                delta = -np.linalg.solve(JtJ + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + delta
            r_new = fun(x_new[None])[0]
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                gain = (cost - cost_new) / cost
                x, r, cost = x_new, r_new, cost_new
                lam = max(lam / 10.0, 1e-15)
                accepted += 1
                history.append(_rms(r))
                stepped = True
                break
            lam *= 10.0
        if not stepped:
            converged = True  # no descent direction left at machine precision
            break
        small_step = np.linalg.norm(delta) <= s.step_tolerance * (np.linalg.norm(x) + s.step_tolerance)
        if history[-1] <= s.residual_tolerance or small_step or gain <= s.cost_tolerance:
            converged = True
            break
    return LMResult(x, history[-1], accepted, converged, history)


# -- hand fitting -------------------------------------------------------------

class HandFit(NamedTuple):
    params: HandParams
    rms_residual: float
    accepted_steps: int
    converged: bool
    history: list


def _hand_entity(correspondences, entity):
    if entity is not None:
        return entity
    ents = {c.entity for c in correspondences if c.entity in HAND_ENTITIES}
    if len(ents) != 1:
        raise DataError("correspondences cover both hands; pass entity='left-hand' or 'right-hand'")
    return ents.pop()


def _visible(frame, correspondences, entity):
    corr = [c for c in correspondences if c.entity == entity and frame.visible(c.marker_id)]
    obs = np.array([frame.get(c.marker_id) for c in corr]).reshape(-1, 3)
    return np.array([c.vertex_index for c in corr], dtype=np.int64), obs


def fit_hand(model, frame, correspondences, init, settings=None, entity=None):
    """Fit hand pose and translation to one frame of markers; shape stays at ``init.beta``."""
    entity = _hand_entity(correspondences, entity)
    ids, obs = _visible(frame, correspondences, entity)
    if len(ids) < MIN_HAND_MARKERS:
        raise TooFewMarkersError(f"{entity}: {len(ids)} visible markers, need {MIN_HAND_MARKERS}")
    beta = init.beta

    def residuals(X):
        V = pose_vertices(model, X[:, :POSE_DIM], beta, X[:, POSE_DIM:], vertex_ids=ids)
        return (V - obs).reshape(len(X), -1)

    x0 = np.concatenate([init.theta, init.translation])
    res = levenberg_marquardt(residuals, x0, settings)
    params = HandParams(res.x[:POSE_DIM], beta, res.x[POSE_DIM:])
    return HandFit(params, res.rms, res.accepted_steps, res.converged, res.history)


def calibrate_hand_shape(model, frames, correspondences, inits, settings=None, entity=None):
    """Joint fit of one shape vector and per-frame pose over several frames.

    Returns (beta, list of HandParams, rms).
    """
    entity = _hand_entity(correspondences, entity)
    data = [_visible(f, correspondences, entity) for f in frames]
    if any(len(ids) < MIN_HAND_MARKERS for ids, _ in data):
        raise TooFewMarkersError("every calibration frame needs at least 4 visible hand markers")
    s = settings or SolverSettings()
    F = len(frames)
    nb = model.shape_blendshapes.shape[2]
    npf = POSE_DIM + 3
    sizes = [obs.size for _, obs in data]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def frame_residual(f, X):
        ids, obs = data[f]
        beta = X[:, :nb]
        p = X[:, nb:]
        V = pose_vertices(model, p[:, :POSE_DIM], beta, p[:, POSE_DIM:], vertex_ids=ids)
        return (V - obs).reshape(len(X), -1)

    def split(x):
        return x[:nb], x[nb:].reshape(F, npf)

    def residuals(X):
        out = []
        for x in X:
            beta, per = split(x)
            rows = np.concatenate([beta[None].repeat(F, 0), per], axis=1)
            out.append(np.concatenate([frame_residual(f, rows[f:f + 1])[0] for f in range(F)]))
        return np.array(out)

    def jacobian(x):
        beta, per = split(x)
        J = np.zeros((offsets[-1], len(x)))
        for f in range(F):
            xf = np.concatenate([beta, per[f]])
            Jf = central_difference_jacobian(lambda X: frame_residual(f, X), xf, s.fd_step)
            rows = slice(offsets[f], offsets[f + 1])
            J[rows, :nb] = Jf[:, :nb]
            J[rows, nb + f * npf: nb + (f + 1) * npf] = Jf[:, nb:]
        return J

    x0 = np.concatenate([inits[0].beta] + [np.concatenate([p.theta, p.translation]) for p in inits])
    res = levenberg_marquardt(residuals, x0, s, jac=jacobian)
    beta, per = split(res.x)
    return beta, [HandParams(p[:POSE_DIM], beta, p[POSE_DIM:]) for p in per], res.rms


def root_alignment(model, frame, correspondences, entity, beta):
    """Rest-pose hand rigidly aligned to the visible markers skinned to the root joint."""
    ids, obs = _visible(frame, correspondences, entity)
    rooted = model.skinning_weights[ids, 0] > 0.999
    theta = np.zeros(POSE_DIM)
    if rooted.sum() < 3:
        return HandParams(theta, beta, np.zeros(3))
    rest = pose_vertices(model, theta, beta, np.zeros(3), vertex_ids=ids[rooted])[0]
    try:
        rot, t, _ = solve_rigid(rest, obs[rooted])
    except DegenerateInputError:
        return HandParams(theta, beta, np.zeros(3))
    theta[:3] = rot
    return HandParams(theta, beta, t)


# -- sequence -----------------------------------------------------------------

def _solve_object(obj, frame, correspondences):
    base = [c for c in correspondences if c.entity == "object-base" and frame.visible(c.marker_id)]
    top = [c for c in correspondences if c.entity == "object-top" and frame.visible(c.marker_id)]
    if len(base) < MIN_PART_MARKERS or len(top) < MIN_PART_MARKERS:
        raise TooFewMarkersError("object part below marker minimum")
    src = obj.base_part.vertices[[c.vertex_index for c in base]]
    dst = np.array([frame.get(c.marker_id) for c in base])
    rot, t, _ = solve_rigid(src, dst)
    omega = solve_articulation(obj, (rot, t), frame, top)
    return ObjectPose(omega, rot, t)


def _lerp_params(a, b, w):
    if isinstance(a, HandParams):
        return HandParams(
            (1 - w) * a.theta + w * b.theta, (1 - w) * a.beta + w * b.beta, (1 - w) * a.translation + w * b.translation
        )
    return ObjectPose.from_vector((1 - w) * a.as_vector() + w * b.as_vector())


def _fill_gaps(poses, attr):
    solved = [i for i, p in enumerate(poses) if getattr(p, attr) is not None]
    if not solved:
        return
    for i, p in enumerate(poses):
        if getattr(p, attr) is not None:
            continue
        prev = max((j for j in solved if j < i), default=None)
        nxt = min((j for j in solved if j > i), default=None)
        if prev is None:
            val = getattr(poses[nxt], attr)
        elif nxt is None:
            val = getattr(poses[prev], attr)
        else:
            w = (i - prev) / (nxt - prev)
            val = _lerp_params(getattr(poses[prev], attr), getattr(poses[nxt], attr), w)
        setattr(p, attr, val)


def solve_sequence(assets, frames, correspondences, settings=None, warm_start=True, progress=None):
    """Per-frame poses for every entity that has correspondences.

    Object: rigid base fit then hinge angle. Hands: LM fit warm-started from
    the previous solved frame (cold start: rest pose rigidly aligned on the
    palm markers). Frames below the marker minimum are flagged ``<entity>_gap``
    and filled by linear interpolation of parameters between solved neighbours.
    """
    if not frames:
        raise DataError("empty marker sequence")
    entities = {c.entity for c in correspondences}
    track_object = bool(entities & set(OBJECT_ENTITIES))
    sides = [s for s in ("left", "right") if f"{s}-hand" in entities]

    poses = []
    prev = {s: None for s in sides}
    for k, frame in enumerate(frames):
        rec = FramePose()
        if track_object:
            try:
                rec.object = _solve_object(assets.object, frame, correspondences)
            except (TooFewMarkersError, DegenerateInputError, UnobservableError):
                rec.flags.append("object_gap")
        for side in sides:
            model = assets.hand(side)
            entity = f"{side}-hand"
            beta = assets.beta(side)
            if prev[side] is None or not warm_start:
                init = root_alignment(model, frame, correspondences, entity, beta)
            else:
                init = prev[side]
            try:
                fit = fit_hand(model, frame, correspondences, init, settings, entity=entity)
            except TooFewMarkersError:
                rec.flags.append(f"{side}_gap")
                continue
            if not fit.converged:
                rec.flags.append(f"{side}_not_converged")
            setattr(rec, side, fit.params)
            prev[side] = fit.params
        poses.append(rec)
        if progress is not None:
            progress(k + 1, len(frames))

    tracked = (["object"] if track_object else []) + sides
    never = [(name, "no frame has enough visible markers") for name in tracked
             if all(getattr(p, name) is None for p in poses)]
    if never:
        raise CoverageError(never)
    for name in tracked:
        _fill_gaps(poses, name)
    return poses

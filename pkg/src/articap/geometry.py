"""Rotation helpers shared by the models and solvers (axis-angle everywhere)."""
import numpy as np
from scipy.spatial.transform import Rotation


def rodrigues(rotvec):
    """Axis-angle vectors ``(..., 3)`` to rotation matrices ``(..., 3, 3)``.

    Small angles use the second-order series so the map stays smooth at zero,
    which keeps finite-difference Jacobians well behaved.
    """
    r = np.asarray(rotvec, dtype=np.float64)
    theta2 = np.sum(r * r, axis=-1)[..., None, None]
    theta = np.sqrt(theta2)
    small = theta2 < 1e-12
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))

    K = np.zeros(r.shape[:-1] + (3, 3))
    K[..., 0, 1] = -r[..., 2]
    K[..., 0, 2] = r[..., 1]
    K[..., 1, 0] = r[..., 2]
    K[..., 1, 2] = -r[..., 0]
    K[..., 2, 0] = -r[..., 1]
    K[..., 2, 1] = r[..., 0]
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a * K + b * (K @ K)


def matrix_to_rotvec(R):
    return Rotation.from_matrix(np.asarray(R, dtype=np.float64)).as_rotvec()


def axis_angle_rotation(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    return rodrigues(axis / np.linalg.norm(axis) * angle)


def rotation_angle_between(R_a, R_b):
    """Geodesic angle in radians between two rotation matrices.

    Taken from the rotation vector of ``R_a^T R_b``; the arccos-of-trace form
    loses about half the significant digits near zero.
    """
    return float(np.linalg.norm(matrix_to_rotvec(np.asarray(R_a).T @ np.asarray(R_b))))


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)

"""Reference training losses for hand, object and interaction-field heads.

Every function returns ``(total, breakdown)`` where ``breakdown`` maps term
name to its unweighted value. 2D inputs are already projected (see
``models.project``), so nothing here depends on a camera model.
"""
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError
from .fields import FIELD_NAMES


@dataclass(frozen=True)
class LossWeights:
    hand_3d: float = 1.0
    hand_2d: float = 1.0
    hand_theta: float = 1.0
    hand_beta: float = 1.0
    hand_cam: float = 1.0
    obj_3d: float = 1.0
    obj_2d: float = 1.0
    obj_omega: float = 1.0
    obj_rot: float = 1.0
    obj_cam: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not np.isfinite(v) or v < 0:
                raise DataError(f"loss weight {k} must be finite and nonnegative, got {v}")


def _mse(pred, gt, name):
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise DataError(f"{name}: shape mismatch {p.shape} vs {g.shape}")
    return float(np.mean((p - g) ** 2))


def _root_relative(j):
    j = np.asarray(j, dtype=np.float64)
    return j - j[..., :1, :]


def _weighted(terms, weights):
    return float(sum(weights[k] * v for k, v in terms.items()))


def hand_loss(pred, gt, weights=LossWeights()):
    """MSE terms on joints (root-relative), 2D joints, pose, shape and camera.

    ``pred`` and ``gt`` are mappings with keys ``joints`` (21, 3),
    ``joints2d`` (21, 2), ``theta`` (48,), ``beta`` (10,) and ``cam``
    (s, t_x, t_y).
    """
    try:
        terms = {
            "3d": _mse(_root_relative(pred["joints"]), _root_relative(gt["joints"]), "joints"),
            "2d": _mse(pred["joints2d"], gt["joints2d"], "joints2d"),
            "theta": _mse(pred["theta"], gt["theta"], "theta"),
            "beta": _mse(pred["beta"], gt["beta"], "beta"),
            "cam": _mse(pred["cam"], gt["cam"], "cam"),
        }
    except KeyError as exc:
        raise DataError(f"hand loss input missing {exc}") from exc
    w = {"3d": weights.hand_3d, "2d": weights.hand_2d, "theta": weights.hand_theta,
         "beta": weights.hand_beta, "cam": weights.hand_cam}
    return _weighted(terms, w), terms


def object_loss(pred, gt, weights=LossWeights()):
    """MSE terms on landmarks (K, 3) and (K, 2), articulation, rotation and camera.

    Keys: ``landmarks``, ``landmarks2d``, ``omega``, ``rot``, ``cam``.
    """
    try:
        terms = {
            "3d": _mse(pred["landmarks"], gt["landmarks"], "landmarks"),
            "2d": _mse(pred["landmarks2d"], gt["landmarks2d"], "landmarks2d"),
            "omega": _mse(np.atleast_1d(pred["omega"]), np.atleast_1d(gt["omega"]), "omega"),
            "rot": _mse(pred["rot"], gt["rot"], "rot"),
            "cam": _mse(pred["cam"], gt["cam"], "cam"),
        }
    except KeyError as exc:
        raise DataError(f"object loss input missing {exc}") from exc
    w = {"3d": weights.obj_3d, "2d": weights.obj_2d, "omega": weights.obj_omega,
         "rot": weights.obj_rot, "cam": weights.obj_cam}
    return _weighted(terms, w), terms


def field_loss(pred, gt, reduction="sum"):
    """L1 over the four interaction fields.

    ``pred``/``gt`` map field names (``l->o`` ...) to InteractionFields or
    arrays. ``reduction="mean"`` averages within each field instead of summing.
    """
    if reduction not in ("sum", "mean"):
        raise DataError(f"unknown reduction {reduction!r}")
    if set(pred) != set(gt):
        raise DataError(f"field names differ: {sorted(pred)} vs {sorted(gt)}")
    terms = {}
    for name in [n for n in FIELD_NAMES if n in gt] + sorted(set(gt) - set(FIELD_NAMES)):
        p = np.asarray(getattr(pred[name], "distances", pred[name]), dtype=np.float64)
        g = np.asarray(getattr(gt[name], "distances", gt[name]), dtype=np.float64)
        if p.shape != g.shape:
            raise DataError(f"field {name}: length mismatch {p.shape} vs {g.shape}")
        err = np.abs(p - g)
        terms[name] = float(err.mean() if reduction == "mean" else err.sum())
    return float(sum(terms.values())), terms

"""articap: hand and articulated-object capture toolkit.

Parametric hand and hinged-object models, marker-based pose solvers,
interaction fields, evaluation metrics, reference losses and a synthetic
data generator.
"""
__version__ = "0.1.0"

from .errors import (ArticapError, CoverageError, DataError, DegenerateInputError, NumericalError,  # noqa: E402
                     ParameterError, TooFewMarkersError, UnobservableError)
from .models import (ArticulatedObject, CameraParams, HandModel, HandParams, Mesh, ObjectPose,  # noqa: E402
                     fps_landmarks, hand_joints, pose_hand, pose_object, project, weak_to_perspective)
from .capture import (MarkerCorrespondence, MarkerFrame, MarkerSequence, SolverSettings,  # noqa: E402
                      estimate_axis, fit_hand, solve_articulation, solve_rigid, solve_sequence)
from .fields import (ContactHeatmap, InteractionField, aggregate_heatmap, contact_labels,  # noqa: E402
                     extract_gt_fields, field_bruteforce, field_fast)
from .metrics import EvalReport, SequenceMeta, aae, evaluate_split, mpjpe, mrrpe, pcd, split_sequences, v2v  # noqa: E402
from .losses import LossWeights, field_loss, hand_loss, object_loss  # noqa: E402
from .synth import SynthConfig, generate_assets, generate_object_asset, generate_sequence  # noqa: E402

__all__ = [
    "__version__",
    "ArticapError", "CoverageError", "DataError", "DegenerateInputError", "NumericalError", "ParameterError",
    "TooFewMarkersError", "UnobservableError",
    "ArticulatedObject", "CameraParams", "HandModel", "HandParams", "Mesh", "ObjectPose",
    "fps_landmarks", "hand_joints", "pose_hand", "pose_object", "project", "weak_to_perspective",
    "MarkerCorrespondence", "MarkerFrame", "MarkerSequence", "SolverSettings",
    "estimate_axis", "fit_hand", "solve_articulation", "solve_rigid", "solve_sequence",
    "ContactHeatmap", "InteractionField", "aggregate_heatmap", "contact_labels", "extract_gt_fields",
    "field_bruteforce", "field_fast",
    "EvalReport", "SequenceMeta", "aae", "evaluate_split", "mpjpe", "mrrpe", "pcd", "split_sequences", "v2v",
    "LossWeights", "field_loss", "hand_loss", "object_loss",
    "SynthConfig", "generate_assets", "generate_object_asset", "generate_sequence",
]

"""Absolute 3D pose reconstruction, consensus-based rig self-calibration and multi-view fusion."""

from ._kernels import BACKEND
from .consensus import (
    CorrespondenceSet,
    OptimizerConfig,
    PairCalibration,
    RigCalibration,
    build_correspondences,
    calibrate_pair,
    calibrate_rig,
    objective,
    optimal_center,
    optimal_focal,
    optimal_translation,
    procrustes_rotation,
)
from .decode import (
    ConfidenceStats,
    DecodeConfig,
    absolute_depth,
    compose_depth,
    confidence_ground_truth,
    decode_pose,
    pool_relative_depth,
    soft_argmax_2d,
)
from .errors import (
    ConsensusPoseError,
    DegenerateGeometryError,
    InvalidExtrinsicsError,
    InvalidInputError,
    NumericalFailureError,
    SceneGenerationError,
    ValidationError,
)
from .fusion import ViewPrediction, fuse_frame, fuse_views
from .geometry import (
    CalibrationSet,
    CameraExtrinsics,
    CameraIntrinsics,
    inverse_project,
    invert_extrinsics,
    project,
    rotation_geodesic_distance,
    transform_pose,
)
from .metrics import MetricReport, elastic_net_loss, evaluate, mpjpe, mrpe, pck_auc
from .synth import NoiseModel, SyntheticScene, generate_scene

__version__ = "0.1.0"

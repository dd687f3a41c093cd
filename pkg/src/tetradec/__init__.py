"""Four-corner (tetragon) object detection machinery.

Ground-truth encoding, losses with gradient verification, corner decoding with
associative-embedding grouping, mask-to-tetragon fitting, rectification, and
polygon-IoU evaluation, plus a synthetic output simulator that exercises the
whole pipeline without a trained network.
"""

from .errors import (
    BadGtCardinality,
    ConfigInfeasible,
    DegenerateGeometry,
    DegenerateMask,
    EmptyMask,
    FormatError,
    InvalidAnnotation,
    ShapeError,
    ShapeMismatch,
    TetradecError,
)
from .geometry import (
    Homography,
    Point2,
    Tetragon,
    area,
    homography_from_tetragon,
    is_valid,
    rectify,
    tetragon_iou,
)
from .tensor_ops import CornerType, corner_pool, nms_3x3, topk
from .gt_encoder import (
    Annotation,
    ObjectCorners,
    TargetMaps,
    encode_targets,
    gaussian_radius,
)
from .losses import (
    LossBreakdown,
    LossWeights,
    detection_loss,
    gradient_check,
    offset_loss,
    pull_loss,
    push_loss,
    total_loss,
)
from .decoder import (
    CornerCandidate,
    DecodeConfig,
    Detection,
    GroupingMode,
    NetworkOutput,
    ScoreSign,
    decode,
    extract_corners,
    group_and_score,
)
from .mask_fit import BinaryMask, FitResult, fit_tetragon, rasterize
from .evalkit import (
    COCO_THRESHOLDS,
    EvalReport,
    UseCaseReport,
    average_precision,
    match_detections,
    usecase_metrics,
)
from .synthgen import NoiseConfig, SceneConfig, generate_scene, simulate_output

__version__ = "0.1.0"

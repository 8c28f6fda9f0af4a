"""cmbench: evaluation toolkit for infrared-visible feature matching.

The package scores externally produced match files on four tasks
(planar homography, relative pose, satellite georegistration and its hard
subset) and ships an adaptive preprocessing front-end: four image filter
branches plus a small classifier (the gate) that picks one per pair.

Matchers stay outside the package; they communicate through JSON-lines
match files, so any sparse, semi-dense or dense method can be benchmarked
without code changes here.
"""

from .errors import (
    AllBranchesFailed,
    CapExceeded,
    CmBenchError,
    DegenerateConfiguration,
    DegeneratePoint,
    DegenerateQuad,
    DimensionMismatch,
    DuplicateId,
    EmptyInput,
    FingerprintMismatch,
    MisalignedLists,
    MissingTag,
    NoSuccesses,
    NonFiniteLoss,
    NonPositiveScale,
    ParseError,
    SamplingExhausted,
    SchemaViolation,
    SingularMatrix,
    UnknownProvider,
)
from ._util import derive_seed, fingerprint
from .estimate import (
    EstimationResult,
    RansacConfig,
    Status,
    count_inliers,
    dlt_homography,
    estimate_relative_pose,
    ransac_homography,
)
from .gate import (
    GateModel,
    GateSample,
    GateTrainConfig,
    argmax_branch,
    builtin_embedding,
    fuse,
    get_provider,
    load_embeddings,
    load_model,
    loss_and_gradients,
    oracle_label,
    predict_branch,
    save_model,
    train_gate,
)
from .geometry import (
    CameraIntrinsics,
    Homography,
    MatchSet,
    Point2,
    RelativePose,
    apply_homography,
    invert_homography,
    pose_angular_error,
    project_points,
    rotation_angle_deg,
)
from .metrics import (
    PairError,
    SceneSplit,
    auc,
    corner_error,
    geo_error,
    median_error,
    scene_balanced_auc,
    success_rate,
)
from .preprocess import (
    BranchId,
    GrayImage,
    PreprocessParams,
    apply_branch,
    load_image,
    save_png,
)
from .synth import (
    HomographySamplerParams,
    SyntheticPair,
    WarpParams,
    compose_warp,
    decompose_warp,
    overlap_ratio,
    sample_homography,
    warp_correspondences,
)

__version__ = "1.0.0"

__all__ = [
    "AllBranchesFailed",
    "BranchId",
    "CameraIntrinsics",
    "CapExceeded",
    "CmBenchError",
    "DegenerateConfiguration",
    "DegeneratePoint",
    "DegenerateQuad",
    "DimensionMismatch",
    "DuplicateId",
    "EmptyInput",
    "EstimationResult",
    "FingerprintMismatch",
    "GateModel",
    "GateSample",
    "GateTrainConfig",
    "GrayImage",
    "Homography",
    "HomographySamplerParams",
    "MatchSet",
    "MisalignedLists",
    "MissingTag",
    "NoSuccesses",
    "NonFiniteLoss",
    "NonPositiveScale",
    "PairError",
    "ParseError",
    "Point2",
    "PreprocessParams",
    "RansacConfig",
    "RelativePose",
    "SamplingExhausted",
    "SceneSplit",
    "SchemaViolation",
    "SingularMatrix",
    "Status",
    "SyntheticPair",
    "UnknownProvider",
    "WarpParams",
    "apply_branch",
    "apply_homography",
    "argmax_branch",
    "auc",
    "builtin_embedding",
    "compose_warp",
    "corner_error",
    "count_inliers",
    "decompose_warp",
    "derive_seed",
    "dlt_homography",
    "estimate_relative_pose",
    "fingerprint",
    "fuse",
    "geo_error",
    "get_provider",
    "invert_homography",
    "load_embeddings",
    "load_image",
    "load_model",
    "loss_and_gradients",
    "median_error",
    "oracle_label",
    "overlap_ratio",
    "pose_angular_error",
    "predict_branch",
    "project_points",
    "ransac_homography",
    "rotation_angle_deg",
    "sample_homography",
    "save_model",
    "save_png",
    "scene_balanced_auc",
    "success_rate",
    "train_gate",
    "warp_correspondences",
    "__version__",
]

"""locbench: retrieval-for-localization benchmarking toolkit.

Builds ground-truth retrieval rankings from camera geometry, localizes
queries by pose interpolation or PnP against 3D maps, scores both with
retrieval and localization metrics, and correlates the two.
"""

__version__ = "0.1.0"

from .geometry import CameraIntrinsics, Pose, PoseError, pose_error  # noqa: F401
from .pose_approx import (  # noqa: F401
    BlendedPose,
    CsiConfig,
    InterpolationWeights,
    interpolate_pose,
    weights_bdi,
    weights_csi,
    weights_ewb,
)
from .gt_ranking import (  # noqa: F401
    GroundTruthRanking,
    RcpConfig,
    build_gt_ranking,
    gt_statistics,
)
from .map_localize import (  # noqa: F401
    LocalizationResult,
    RansacConfig,
    SceneMap,
    TriangulationConfig,
    build_local_map,
    localize_global,
    localize_local_sfm,
    select_map_pairs,
)
from .metrics import (  # noqa: F401
    AccuracyThresholds,
    average_precision,
    localized_percentage,
    mean_average_precision,
    precision_at_k,
    recall_at_k,
)
from .correlation import (  # noqa: F401
    UNDEFINED,
    correlate_per_dataset,
    correlate_per_query,
    pearson,
    spearman,
)
from .challenge import blur_score, dynamic_fraction  # noqa: F401
from .benchmark import (  # noqa: F401
    BenchmarkConfig,
    emit_reports,
    rank_by_descriptor,
    run_benchmark,
)

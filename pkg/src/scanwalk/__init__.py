"""scanwalk: a discrete active-vision simulator over densely sampled RGB-D scenes.

Pipeline: generate or ingest a scene, derive movement pointers from the
camera poses, fuse depth across neighboring views, project instance point
clouds to occlusion-aware 2D boxes, then train and evaluate a next-best-
move policy that improves instance classification.
"""

from .core import (
    BoundingBox,
    GeometryError,
    InstanceAnnotation,
    Intrinsics,
    PointCloud,
    RGBDFrame,
    ScenePose,
    back_project,
    mask_box,
    project_point,
    project_points,
    quat_from_yaw_pitch,
    relative_displacement,
)
from .depthfusion import fuse_depth, fuse_scene, interpolate_holes, select_fusion_neighbors
from .environment import (
    EpisodeConfig,
    EpisodeError,
    EpisodeSession,
    EpisodeState,
    NoValidStartError,
    Observation,
    check_confidence_stop,
    reset,
    step,
)
from .evaluation import (
    Detection,
    average_precision,
    emit_report,
    score_distance_sensitivity,
    score_position_map,
)
from .labeling import LabelParams, assign_difficulty, label_scene, project_instance
from .movegraph import (
    Action,
    DuplicatePoseError,
    MoveGraph,
    MoveGraphParams,
    build_move_graph,
    verify_move_graph,
)
from .policy import (
    LearnedPolicy,
    PolicyParams,
    SceneCache,
    TrainConfig,
    action_distribution,
    baseline_policy,
    evaluate_policy,
    init_policy,
    reinforce_update,
    rollout,
    train_policy,
)
from .recognition import (
    AugmentationSpec,
    ClassifierModel,
    FEATURE_DIM,
    TrainParams,
    classify,
    composite_training_sample,
    extract_features,
    train_classifier,
)
from .sceneio import SceneManifest, ingest_external, load_scene, save_scene, validate_scene
from .synth import (
    Box3D,
    GroundTruth,
    SynthObject,
    SynthOccluder,
    SynthSceneSpec,
    Visibility,
    corrupt_depth,
    generate_scene,
    grid_poses,
    raycast_visibility,
)

__version__ = "0.1.0"

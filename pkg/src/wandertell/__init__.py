"""Deterministic explore-and-describe simulator and evaluation harness."""

from ._version import __version__
from .errors import (ConfigError, GenerationError, MapBoundsError,
                     NoPathError, SchemaError, WandertellError)
from .world import (Action, GridWorld, Observation, Pose, SceneObject,
                    SensorConfig, apply_action, generate_world, load_world,
                    raycast_observe, save_world, world_sha256)
from .mapping import (GlobalMap, GroundTruthMaps, LocalMap,
                      OdometryNoiseModel, compose_pose, correct_pose,
                      ground_truth_global, local_map_from_depth,
                      register_local_map)
from .planning import (GlobalGoal, Plan, extract_local_goal, geodesic_distance,
                       local_controller, plan_path, select_global_goal)
from .rewards import (DensityModel, PseudoCountGrid, RewardState, StepRewards,
                      encode_features)
from .speaker import (Caption, ExternalCaptioner, SpeakerPolicy, extract_nouns,
                      should_speak, template_caption)
from .metrics import (MetricReport, SimilarityTable, alignment_f1,
                      assignment_iou, diversity, loquacity, navigation_metrics,
                      soft_coverage)
from .harness import (EpisodeConfig, EpisodeLog, evaluate_speaker_on_log,
                      read_log, replay, report, run_episode, sweep, write_log)

__all__ = [
    "__version__",
    "WandertellError", "ConfigError", "GenerationError", "MapBoundsError",
    "NoPathError", "SchemaError",
    "Action", "GridWorld", "Observation", "Pose", "SceneObject",
    "SensorConfig", "apply_action", "generate_world", "load_world",
    "raycast_observe", "save_world", "world_sha256",
    "GlobalMap", "GroundTruthMaps", "LocalMap", "OdometryNoiseModel",
    "compose_pose", "correct_pose", "ground_truth_global",
    "local_map_from_depth", "register_local_map",
    "GlobalGoal", "Plan", "extract_local_goal", "geodesic_distance",
    "local_controller", "plan_path", "select_global_goal",
    "DensityModel", "PseudoCountGrid", "RewardState", "StepRewards",
    "encode_features",
    "Caption", "ExternalCaptioner", "SpeakerPolicy", "extract_nouns",
    "should_speak", "template_caption",
    "MetricReport", "SimilarityTable", "alignment_f1", "assignment_iou",
    "diversity", "loquacity", "navigation_metrics", "soft_coverage",
    "EpisodeConfig", "EpisodeLog", "evaluate_speaker_on_log", "read_log",
    "replay", "report", "run_episode", "sweep", "write_log",
]

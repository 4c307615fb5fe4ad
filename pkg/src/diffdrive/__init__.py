"""diffdrive: diffusion trajectory planning, scoring, and closed-loop eval."""

from .trajectory import (
    BicycleState,
    EgoStatus,
    KinematicProfile,
    Trajectory,
    Waypoint,
    derive_kinematics,
    min_obstacle_distance,
)
from .scene import (
    ConditionConfig,
    HistoryBuffer,
    HistoryEntry,
    Obstacle,
    ObstacleKind,
    SceneContext,
    encode_condition,
)
from .scoring import CostBreakdown, ScorerWeights, score, select_best
from .regulator import (
    MockDirectiveProvider,
    SceneSummary,
    StyleDirective,
    StyleRegulator,
    apply_directive,
    should_query,
    summarize_scene,
)
from .comfort import ComfortReport, ComfortWeights, comfort_index, segment_timeline

__version__ = "0.1.0"

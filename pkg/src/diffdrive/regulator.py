"""Driving-style regulation of the scorer weights.

Every five seconds of simulated time a directive provider is asked for
bounded weight adjustments given a structured scene summary. The provider
is pluggable: the default is a deterministic rule table, and a remote
JSON-over-HTTP endpoint can be swapped in. Provider failures never change
the weights, and all adjustments are clamped to +/-50% of the stock
defaults, so a misbehaving provider cannot destabilize scoring.
"""

from __future__ import annotations

import json
import logging
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

from .geometry import Polyline
from .scene import SceneContext
from .scoring import WEIGHT_DEFAULTS, WEIGHT_NAMES, ScorerWeights
from .trajectory import DEFAULT_EGO_RADIUS, NO_OBSTACLE_DISTANCE, EgoStatus

logger = logging.getLogger(__name__)

QUERY_PERIOD_S = 5.0
CLAMP_LO = 0.5  # fraction of the default weight
CLAMP_HI = 1.5

# rule-table thresholds for the mock provider
NEAR_OBSTACLE_M = 10.0
OPEN_ROAD_OBSTACLE_M = 30.0
FAR_GOAL_M = 40.0
HIGH_CURVATURE = 0.05  # 1/m

CONSERVATIVE_DELTAS = {"w_coll": 1.5, "w_lon": 1.0, "w_cent": 0.5}
AGGRESSIVE_DELTAS = {"w_speed": 0.5, "w_lat": -0.3}


class Style(str, Enum):
    AGGRESSIVE = "aggressive"
    CONSERVATIVE = "conservative"
    NEUTRAL = "neutral"


class UnknownWeightKey(KeyError):
    pass


@dataclass(frozen=True)
class StyleDirective:
    style: Style
    deltas: dict[str, float] = field(default_factory=dict)
    rationale: str = ""

    def to_dict(self) -> dict:
        return {"style": self.style.value, "deltas": dict(self.deltas), "rationale": self.rationale}

    @classmethod
    def from_dict(cls, d: dict) -> "StyleDirective":
        return cls(
            style=Style(d["style"]),
            deltas={k: float(v) for k, v in d.get("deltas", {}).items()},
            rationale=str(d.get("rationale", "")),
        )


NEUTRAL_DIRECTIVE = StyleDirective(Style.NEUTRAL, {}, "no adjustment")


@dataclass(frozen=True)
class SceneSummary:
    """Deterministic text-friendly snapshot handed to the provider."""

    ego_speed: float
    nearest_obstacle_distance: float  # clearance; NO_OBSTACLE_DISTANCE if none
    nearest_obstacle_kind: str
    goal_distance: float
    lane_curvature_class: str  # "low" | "high"
    weights: dict[str, float]

    def as_dict(self) -> dict:
        return {
            "ego_speed": self.ego_speed,
            "nearest_obstacle_distance": self.nearest_obstacle_distance,
            "nearest_obstacle_kind": self.nearest_obstacle_kind,
            "goal_distance": self.goal_distance,
            "lane_curvature_class": self.lane_curvature_class,
            "weights": dict(self.weights),
        }


def summarize_scene(
    scene: SceneContext,
    ego: EgoStatus,
    weights: ScorerWeights,
    ego_radius: float = DEFAULT_EGO_RADIUS,
) -> SceneSummary:
    import numpy as np

    nearest = NO_OBSTACLE_DISTANCE
    kind = "none"
    for obs in scene.obstacles:
        d = float(np.linalg.norm(np.asarray(obs.center) - np.asarray(ego.position)))
        d -= ego_radius + obs.radius
        if d < nearest:
            nearest = d
            kind = obs.kind.value
    goal_distance = float(
        np.linalg.norm(np.asarray(scene.target_point) - np.asarray(ego.position))
    )
    curvature = Polyline(scene.lane_center).max_curvature()
    return SceneSummary(
        ego_speed=ego.speed,
        nearest_obstacle_distance=nearest,
        nearest_obstacle_kind=kind,
        goal_distance=goal_distance,
        lane_curvature_class="high" if curvature > HIGH_CURVATURE else "low",
        weights=weights.as_dict(),
    )


def should_query(sim_time: float, last_query_time: float) -> bool:
    if sim_time < last_query_time:
        raise ValueError("sim_time must not precede last_query_time")
    return sim_time - last_query_time >= QUERY_PERIOD_S


class MockDirectiveProvider:
    """Deterministic stand-in for the language-model endpoint.

    Conservative near obstacles or in tight curvature, aggressive on an
    open road with a distant goal, otherwise neutral.
    """

    def get_directive(self, summary: SceneSummary) -> StyleDirective:
        if (
            summary.nearest_obstacle_distance < NEAR_OBSTACLE_M
            or summary.lane_curvature_class == "high"
        ):
            return StyleDirective(
                Style.CONSERVATIVE,
                dict(CONSERVATIVE_DELTAS),
                "obstacle nearby or tight curvature; prioritize clearance and smoothness",
            )
        if (
            summary.nearest_obstacle_distance >= OPEN_ROAD_OBSTACLE_M
            and summary.goal_distance > FAR_GOAL_M
        ):
            return StyleDirective(
                Style.AGGRESSIVE,
                dict(AGGRESSIVE_DELTAS),
                "open road and distant goal; favor progress",
            )
        return NEUTRAL_DIRECTIVE


def load_prompt_template() -> str:
    return resources.files("diffdrive.assets").joinpath("style_prompt.txt").read_text()


class HttpDirectiveProvider:
    """JSON-over-HTTP directive client.

    Request: {"summary": {...}, "weights": {...}, "prompt_template_id": str}
    Response: {"style": str, "deltas": {...}, "rationale": str}
    """

    def __init__(self, url: str, timeout_s: float = 2.0, prompt_template_id: str = "style-v1"):
        self.url = url
        self.timeout_s = timeout_s
        self.prompt_template_id = prompt_template_id

    def get_directive(self, summary: SceneSummary) -> StyleDirective:
        payload = json.dumps(
            {
                "summary": summary.as_dict(),
                "weights": dict(summary.weights),
                "prompt_template_id": self.prompt_template_id,
            }
        ).encode()
        req = urllib.request.Request(
            self.url, data=payload, headers={"Content-Type": "application/json"}
        )
        with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
            return StyleDirective.from_dict(json.loads(resp.read().decode()))


def query_directive(summary: SceneSummary, provider) -> StyleDirective:
    """Ask the provider; any failure degrades to the neutral directive."""
    try:
        return provider.get_directive(summary)
    except Exception as exc:  # noqa: BLE001 - fail-safe boundary
        logger.warning("directive provider failed (%s); keeping weights", exc)
        return NEUTRAL_DIRECTIVE


def apply_directive(weights: ScorerWeights, directive: StyleDirective) -> ScorerWeights:
    """Add the directive's deltas, clamped to [0.5, 1.5] x default per weight."""
    unknown = set(directive.deltas) - set(WEIGHT_NAMES)
    if unknown:
        raise UnknownWeightKey(f"unknown weight keys: {sorted(unknown)}")
    updated = weights.as_dict()
    for name, delta in directive.deltas.items():
        default = WEIGHT_DEFAULTS[name]
        updated[name] = min(max(updated[name] + delta, CLAMP_LO * default), CLAMP_HI * default)
    return ScorerWeights(**updated)


class StyleRegulator:
    """Owns the mutable weights for one episode and enforces the cadence."""

    def __init__(self, provider=None, weights: ScorerWeights | None = None):
        self.provider = provider if provider is not None else MockDirectiveProvider()
        self.weights = weights if weights is not None else ScorerWeights()
        self.last_query_time = 0.0

    def maybe_update(
        self, sim_time: float, scene: SceneContext, ego: EgoStatus
    ) -> StyleDirective | None:
        """Query and apply a directive if 5 s have elapsed; else no-op."""
        if not should_query(sim_time, self.last_query_time):
            return None
        self.last_query_time = sim_time
        summary = summarize_scene(scene, ego, self.weights)
        directive = query_directive(summary, self.provider)
        self.weights = apply_directive(self.weights, directive)
        return directive

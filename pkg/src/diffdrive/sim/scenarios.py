"""Synthetic scenario generation with a scripted, collision-free expert.

Six scenario families (straight, left/right turn, stop, static overtake,
dynamic yield) are laid out in a local frame, placed at a random global
pose, and rolled out with a pure-pursuit + speed-profile expert on the
same bicycle dynamics the closed loop uses. Generation is deterministic
per (seed, kind); layouts whose expert rollout ever comes too close to an
obstacle are re-drawn, so the expert trace doubles as ground truth.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from ..geometry import Polyline, to_world, wrap_angle
from ..scene import Obstacle, ObstacleKind, SceneContext
from ..trajectory import BicycleState, Trajectory
from .bicycle import SimParams, bicycle_step

logger = logging.getLogger(__name__)

LOOKAHEAD_M = 5.0  # pure-pursuit lookahead
STOP_GATE_M = 8.0  # come to a full stop this far (along-lane) before a blocker
BLOCK_LATERAL_M = 2.0  # lane-corridor half width for the blocking test (plus radius)
PROFILE_DECEL = 2.0  # m/s^2, comfort deceleration of the stopping profile
YIELD_SCAN_S = 3.0  # how far ahead dynamic obstacles are scanned for conflicts
CLEARANCE_MARGIN = 0.2  # m, required margin of the expert over exact contact
MAX_LAYOUT_ATTEMPTS = 30


class ExpertCollision(RuntimeError):
    """No collision-free expert rollout found after re-drawing the layout."""


class ScenarioKind(str, Enum):
    STRAIGHT = "straight"
    LEFT_TURN = "left_turn"
    RIGHT_TURN = "right_turn"
    STOP = "stop"
    OVERTAKE_STATIC = "overtake_static"
    YIELD_DYNAMIC = "yield_dynamic"


ALL_KINDS = tuple(ScenarioKind)
_KIND_INDEX = {k: i for i, k in enumerate(ALL_KINDS)}


@dataclass(frozen=True)
class Scenario:
    seed: int
    kind: ScenarioKind
    initial_state: BicycleState
    scene: SceneContext  # at t = 0
    expert_states: tuple[BicycleState, ...]  # n_ticks + horizon + 1 samples
    duration: float
    dt: float = 0.5
    horizon: int = 6
    # step schedule of (time, target speed); most kinds switch target once
    # mid-episode so speed corrections are well represented in the data
    speed_plan: tuple[tuple[float, float], ...] = ()
    # the goal is a receding carrot: the lane point this far ahead of the
    # expert's schedule position, capped short of lane-blocking obstacles
    carrot_m: float = 15.0

    def __post_init__(self):
        object.__setattr__(self, "_lane", Polyline(self.scene.lane_center))

    @property
    def lane(self) -> Polyline:
        return self._lane

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.dt))

    def target_speed_at(self, t: float) -> float:
        v = self.scene.target_speed
        for t_from, v_from in self.speed_plan:
            if t >= t_from:
                v = v_from
        return v

    def goal_at(self, t: float) -> tuple[tuple[float, float], float]:
        """Carrot (point, heading) for time t."""
        lane = self.lane
        tick = min(int(round(t / self.dt)), len(self.expert_states) - 1)
        s_exp, _ = lane.project(self.expert_states[tick].position)
        s_carrot = min(s_exp + self.carrot_m, lane.length - 0.5)
        for s_block in _corridor_blockers(self.scene.at_time(t), lane, self.dt):
            if s_block > s_exp - 1.0:
                s_carrot = min(s_carrot, max(s_block - STOP_GATE_M, s_exp))
        return tuple(lane.point_at(s_carrot)), lane.heading_at(s_carrot)

    def scene_at(self, t: float) -> SceneContext:
        scene = self.scene.at_time(t)
        point, heading = self.goal_at(t)
        return replace(
            scene,
            target_point=point,
            target_heading=heading,
            target_speed=self.target_speed_at(t),
        )

    def expert_future(self, tick: int) -> Trajectory:
        """World-frame expert trajectory over the horizon following `tick`."""
        if not (0 <= tick <= self.n_ticks):
            raise IndexError(f"tick {tick} outside [0, {self.n_ticks}]")
        pts = [self.expert_states[tick + 1 + i].position for i in range(self.horizon)]
        return Trajectory.from_xy(np.array(pts), self.dt)

    def expert_positions(self) -> np.ndarray:
        return np.array([s.position for s in self.expert_states])

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "kind": self.kind.value,
            "duration": self.duration,
            "dt": self.dt,
            "horizon": self.horizon,
            "speed_plan": [list(p) for p in self.speed_plan],
            "carrot_m": self.carrot_m,
            "initial_state": self.initial_state.as_array().tolist(),
            "scene": self.scene.to_dict(),
            "expert_states": [s.as_array().tolist() for s in self.expert_states],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            seed=int(d["seed"]),
            kind=ScenarioKind(d["kind"]),
            initial_state=BicycleState.from_array(d["initial_state"]),
            scene=SceneContext.from_dict(d["scene"]),
            expert_states=tuple(BicycleState.from_array(a) for a in d["expert_states"]),
            duration=float(d["duration"]),
            dt=float(d["dt"]),
            horizon=int(d["horizon"]),
            speed_plan=tuple((float(t), float(v)) for t, v in d.get("speed_plan", [])),
            carrot_m=float(d.get("carrot_m", 15.0)),
        )


# ---------------------------------------------------------------------------
# lane construction (local frame: start at origin, initial heading +x)


def _smoothstep(u: np.ndarray) -> np.ndarray:
    return 3.0 * u**2 - 2.0 * u**3


def _lane_straight(length: float = 70.0) -> np.ndarray:
    xs = np.arange(0.0, length + 1e-6, 2.0)
    return np.column_stack([xs, np.zeros_like(xs)])


def _lane_turn(rng: np.random.Generator, direction: float) -> np.ndarray:
    entry = rng.uniform(15.0, 22.0)
    radius = rng.uniform(12.0, 20.0)
    psi = np.linspace(0.0, np.pi / 2.0, 24)
    arc = np.column_stack(
        [entry + radius * np.sin(psi), direction * radius * (1.0 - np.cos(psi))]
    )
    exit_dir = np.array([np.cos(direction * np.pi / 2.0), np.sin(direction * np.pi / 2.0)])
    tail = arc[-1] + np.outer(np.linspace(1.0, 14.0, 7), exit_dir)
    head = np.column_stack([np.arange(0.0, entry, 2.0), np.zeros(len(np.arange(0.0, entry, 2.0)))])
    return np.vstack([head, arc, tail])


def _lane_offset_bypass(rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Straight lane with a smooth lateral bypass; returns (points, s at the
    bypass midpoint, where the blocker sits on the original line)."""
    s1 = rng.uniform(14.0, 18.0)
    ramp = 12.0
    plateau = 10.0
    offset = rng.uniform(3.6, 4.2)
    total = s1 + ramp + plateau + ramp + 18.0
    xs = np.arange(0.0, total + 1e-6, 1.0)
    ys = np.zeros_like(xs)
    for i, x in enumerate(xs):
        if x < s1:
            ys[i] = 0.0
        elif x < s1 + ramp:
            ys[i] = offset * _smoothstep(np.array([(x - s1) / ramp]))[0]
        elif x < s1 + ramp + plateau:
            ys[i] = offset
        elif x < s1 + 2 * ramp + plateau:
            ys[i] = offset * (1.0 - _smoothstep(np.array([(x - s1 - ramp - plateau) / ramp]))[0])
        else:
            ys[i] = 0.0
    blocker_x = s1 + ramp + plateau / 2.0
    return np.column_stack([xs, ys]), blocker_x


# ---------------------------------------------------------------------------
# layout assembly


@dataclass
class _Layout:
    lane_local: np.ndarray
    obstacles_local: list[Obstacle]
    v_target: float
    v0: float
    speed_plan: tuple[tuple[float, float], ...]
    carrot_m: float


def _ambient_obstacles(rng: np.random.Generator, lane: Polyline, n_max: int = 2) -> list[Obstacle]:
    out = []
    for _ in range(int(rng.integers(0, n_max + 1))):
        s = rng.uniform(10.0, max(12.0, lane.length - 5.0))
        side = rng.choice([-1.0, 1.0])
        lateral = side * rng.uniform(6.0, 12.0)
        base = lane.point_at(s)
        heading = lane.heading_at(s)
        normal = np.array([-np.sin(heading), np.cos(heading)])
        out.append(
            Obstacle(
                center=tuple(base + lateral * normal),
                radius=float(rng.uniform(0.5, 1.5)),
                kind=ObstacleKind.STATIC,
            )
        )
    return out


def _build_layout(rng: np.random.Generator, kind: ScenarioKind) -> _Layout:
    if kind in (ScenarioKind.STRAIGHT, ScenarioKind.STOP, ScenarioKind.YIELD_DYNAMIC):
        lane_pts = _lane_straight()
    elif kind == ScenarioKind.LEFT_TURN:
        lane_pts = _lane_turn(rng, +1.0)
    elif kind == ScenarioKind.RIGHT_TURN:
        lane_pts = _lane_turn(rng, -1.0)
    elif kind == ScenarioKind.OVERTAKE_STATIC:
        lane_pts, blocker_x = _lane_offset_bypass(rng)
    else:  # pragma: no cover
        raise ValueError(f"unknown kind {kind}")

    lane = Polyline(lane_pts)
    obstacles = _ambient_obstacles(rng, lane)
    v_target = float(rng.uniform(5.0, 8.0))

    if kind == ScenarioKind.STOP:
        v_target = float(rng.uniform(5.0, 6.5))
        s_obs = rng.uniform(24.0, 32.0)
        obstacles.append(
            Obstacle(
                center=tuple(lane.point_at(s_obs)),
                radius=float(rng.uniform(0.8, 1.2)),
                kind=ObstacleKind.VEHICLE,
            )
        )
    elif kind == ScenarioKind.OVERTAKE_STATIC:
        v_target = float(rng.uniform(6.0, 8.0))
        obstacles.append(
            Obstacle(
                center=(blocker_x, 0.0),
                radius=float(rng.uniform(0.6, 1.0)),
                kind=ObstacleKind.VEHICLE,
            )
        )
    elif kind == ScenarioKind.YIELD_DYNAMIC:
        v_target = float(rng.uniform(5.0, 7.0))
        s_cross = rng.uniform(22.0, 30.0)
        side = float(rng.choice([-1.0, 1.0]))
        d0 = rng.uniform(10.0, 16.0)
        speed = rng.uniform(1.2, 2.5)
        crossing_pt = lane.point_at(s_cross)
        heading = lane.heading_at(s_cross)
        normal = np.array([-np.sin(heading), np.cos(heading)])
        is_ped = bool(rng.random() < 0.5)
        obstacles.append(
            Obstacle(
                center=tuple(crossing_pt + side * d0 * normal),
                radius=0.4 if is_ped else 1.0,
                velocity=tuple(-side * speed * normal),
                kind=ObstacleKind.PEDESTRIAN if is_ped else ObstacleKind.VEHICLE,
            )
        )

    if kind in (
        ScenarioKind.STRAIGHT,
        ScenarioKind.LEFT_TURN,
        ScenarioKind.RIGHT_TURN,
        ScenarioKind.OVERTAKE_STATIC,
    ):
        # first chase an off-target speed, then the real one, so the data is
        # rich in "current speed != current target" corrections
        v_first = float(np.clip(v_target * rng.uniform(0.45, 1.25), 2.0, 9.0))
        t_switch = float(rng.uniform(2.0, 8.0))
        speed_plan = ((0.0, v_first), (t_switch, v_target))
    else:
        speed_plan = ((0.0, v_target),)

    v0 = float(rng.uniform(0.5, 0.8) * speed_plan[0][1])
    carrot_m = float(rng.uniform(13.0, 18.0))
    return _Layout(lane_pts, obstacles, v_target, v0, speed_plan, carrot_m)


def _place_in_world(layout: _Layout, rng: np.random.Generator) -> tuple[BicycleState, SceneContext]:
    origin = rng.uniform(-40.0, 40.0, size=2)
    yaw = float(rng.uniform(-np.pi, np.pi))
    lane_world = to_world(layout.lane_local, origin, yaw)
    lane = Polyline(lane_world)
    obstacles = tuple(
        Obstacle(
            center=tuple(to_world(np.asarray(o.center), origin, yaw)),
            radius=o.radius,
            velocity=tuple(np.asarray(o.velocity) @ np.array(
                [[np.cos(yaw), np.sin(yaw)], [-np.sin(yaw), np.cos(yaw)]]
            )),
            kind=o.kind,
        )
        for o in layout.obstacles_local
    )
    carrot_s = min(layout.carrot_m, lane.length - 0.5)
    scene = SceneContext(
        obstacles=obstacles,
        lane_center=lane_world,
        target_point=tuple(lane.point_at(carrot_s)),
        target_heading=lane.heading_at(carrot_s),
        target_speed=layout.speed_plan[0][1],
        timestamp=0.0,
    )
    state = BicycleState(
        p_x=float(lane_world[0, 0]),
        p_y=float(lane_world[0, 1]),
        theta=lane.heading_at(0.0),
        v=layout.v0,
    )
    return state, scene


# ---------------------------------------------------------------------------
# scripted expert


def _corridor_blockers(scene_now: SceneContext, lane: Polyline, dt: float) -> list[float]:
    """Arc-length positions of obstacles blocking the lane corridor.

    Static blockers are judged where they stand; moving ones are scanned a
    few seconds ahead so a crosser about to enter the lane already counts.
    """
    blockers = []
    for obs in scene_now.obstacles:
        offsets = (0.0,) if obs.velocity == (0.0, 0.0) else np.arange(
            0.0, YIELD_SCAN_S + 1e-9, dt
        )
        for delta in offsets:
            s_obs, lateral = lane.project(obs.position_at(delta))
            if lateral <= BLOCK_LATERAL_M + obs.radius:
                blockers.append(float(s_obs))
                break
    return blockers


def _blocking_speed_limit(
    state: BicycleState,
    scene_now: SceneContext,
    lane: Polyline,
    v_target: float,
    dt: float,
) -> float:
    """Speed allowed by the stopping profile against lane-blocking obstacles;
    the profile enforces a full stop STOP_GATE_M short of the blocker."""
    s_ego, _ = lane.project(state.position)
    v_allowed = v_target
    for s_obs in _corridor_blockers(scene_now, lane, dt):
        ds = s_obs - s_ego
        if ds <= 0:
            continue
        margin = ds - STOP_GATE_M
        limit = 0.0 if margin <= 0 else float(np.sqrt(2.0 * PROFILE_DECEL * margin))
        v_allowed = min(v_allowed, limit)
    return v_allowed


def _expert_controls(
    state: BicycleState,
    scene_now: SceneContext,
    lane: Polyline,
    v_target: float,
    params: SimParams,
) -> tuple[float, float]:
    s_ego, _ = lane.project(state.position)
    target = lane.point_at(min(s_ego + LOOKAHEAD_M, lane.length))
    vec = target - state.position
    dist = float(np.linalg.norm(vec))
    if dist > 1e-6:
        alpha = wrap_angle(np.arctan2(vec[1], vec[0]) - state.theta)
        kappa_des = 2.0 * np.sin(alpha) / dist
        phi_des = float(np.clip(np.arctan(kappa_des * params.wheelbase),
                                -params.max_steer, params.max_steer))
    else:
        phi_des = 0.0
    phi_rate = float(np.clip((phi_des - state.phi) / params.dt,
                             -params.max_steer_rate, params.max_steer_rate))

    v_des = _blocking_speed_limit(state, scene_now, lane, v_target, params.dt)
    accel = float(np.clip((v_des - state.v) / params.dt, -params.max_brake, params.max_accel))
    return accel, phi_rate


def _plan_speed(speed_plan, t: float) -> float:
    v = speed_plan[0][1]
    for t_from, v_from in speed_plan:
        if t >= t_from:
            v = v_from
    return v


def _rollout_expert_from(
    initial: BicycleState,
    scene: SceneContext,
    speed_plan,
    start_tick: int,
    n_steps: int,
    params: SimParams,
) -> tuple[BicycleState, ...]:
    lane = Polyline(scene.lane_center)
    states = [initial]
    state = initial
    for i in range(n_steps):
        t = (start_tick + i) * params.dt
        controls = _expert_controls(state, scene.at_time(t), lane,
                                    _plan_speed(speed_plan, t), params)
        state = bicycle_step(state, controls, params.dt, params.wheelbase, params.max_steer)
        states.append(state)
    return tuple(states)


def _rollout_expert(
    initial: BicycleState,
    scene: SceneContext,
    speed_plan,
    n_steps: int,
    params: SimParams,
) -> tuple[BicycleState, ...]:
    return _rollout_expert_from(initial, scene, speed_plan, 0, n_steps, params)


def _expert_is_clear(
    states: tuple[BicycleState, ...],
    scene: SceneContext,
    dt: float,
    ego_radius: float,
    start_tick: int = 0,
) -> bool:
    for i, state in enumerate(states):
        t = (start_tick + i) * dt
        for obs in scene.obstacles:
            gap = (
                float(np.linalg.norm(state.position - obs.position_at(t)))
                - ego_radius
                - obs.radius
            )
            if gap <= CLEARANCE_MARGIN:
                return False
    return True


def generate_scenario(
    seed: int,
    kind: ScenarioKind | str,
    duration: float = 12.0,
    params: SimParams = SimParams(),
    horizon: int = 6,
) -> Scenario:
    """Deterministic scenario for (seed, kind); retries perturbed layouts
    until the expert rollout is collision-free."""
    kind = ScenarioKind(kind)
    rng = np.random.default_rng([seed, _KIND_INDEX[kind]])
    n_steps = int(round(duration / params.dt)) + horizon
    for attempt in range(MAX_LAYOUT_ATTEMPTS):
        layout = _build_layout(rng, kind)
        initial, scene = _place_in_world(layout, rng)
        states = _rollout_expert(initial, scene, layout.speed_plan, n_steps, params)
        if _expert_is_clear(states, scene, params.dt, params.ego_radius):
            if attempt:
                logger.debug("scenario (%s, %s) needed %d layout draws", seed, kind.value, attempt + 1)
            scenario = Scenario(
                seed=seed,
                kind=kind,
                initial_state=initial,
                scene=scene,
                expert_states=states,
                duration=duration,
                dt=params.dt,
                horizon=horizon,
                speed_plan=layout.speed_plan,
                carrot_m=layout.carrot_m,
            )
            # store the t = 0 view so scene and scene_at(0) agree exactly
            return replace(scenario, scene=scenario.scene_at(0.0))
    raise ExpertCollision(f"no collision-free expert for seed={seed} kind={kind.value}")

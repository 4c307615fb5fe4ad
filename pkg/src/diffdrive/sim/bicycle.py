"""Kinematic bicycle integrator shared by the expert and the closed loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import wrap_angle
from ..trajectory import DEFAULT_EGO_RADIUS, DEFAULT_WHEELBASE, BicycleState


@dataclass(frozen=True)
class SimParams:
    wheelbase: float = DEFAULT_WHEELBASE
    dt: float = 0.5
    ego_radius: float = DEFAULT_EGO_RADIUS
    max_steer: float = 0.6  # rad, front-wheel angle
    max_steer_rate: float = 1.5  # rad/s
    max_accel: float = 3.0  # m/s^2
    max_brake: float = 4.5  # m/s^2


def bicycle_step(
    state: BicycleState,
    controls: tuple[float, float],
    dt: float,
    wheelbase: float = DEFAULT_WHEELBASE,
    max_steer: float = 0.6,
) -> BicycleState:
    """One Euler step under (longitudinal accel, steering rate) controls.

    Update order: steering angle (clamped), curvature from the steering
    geometry, heading, position along the new heading with the old speed,
    then speed (floored at 0) and lateral acceleration.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    a_t, phi_rate = controls
    phi = float(np.clip(state.phi + phi_rate * dt, -max_steer, max_steer))
    kappa = float(np.tan(phi) / wheelbase)
    theta = wrap_angle(state.theta + state.v * kappa * dt)
    p_x = state.p_x + state.v * dt * np.cos(theta)
    p_y = state.p_y + state.v * dt * np.sin(theta)
    v = max(0.0, state.v + a_t * dt)
    return BicycleState(
        p_x=float(p_x),
        p_y=float(p_y),
        theta=float(theta),
        v=v,
        a_t=float(a_t),
        a_n=v * v * kappa,
        phi=phi,
        kappa=kappa,
    )

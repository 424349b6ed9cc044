"""Cascaded waypoint controller: position PD -> attitude P -> body-rate P -> mixer.

The controller sees the true vehicle state (sensor imperfections only corrupt
what gets logged) and knows only the nominal vehicle parameters, so fault and
domain perturbations must be trimmed by feedback, exactly the compensation the
fault classifier later picks up in the commanded speeds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import quat_to_euler
from .types import GRAVITY, QuadParams, QuadState


@dataclass(frozen=True)
class ControllerGains:
    pos_p: float = 2.0
    pos_d: float = 3.0
    att_p: float = 6.0
    yaw_p: float = 3.0
    rate_p: float = 25.0
    yaw_rate_p: float = 12.0
    max_tilt: float = 0.35       # rad
    max_accel: float = 4.0       # m/s^2 per axis


def mix_to_rotor_speeds(thrust: float, moment: np.ndarray, params: QuadParams) -> np.ndarray:
    """Invert the rotor geometry: (total thrust, body moments) -> four speeds.

    Uses the nominal k_f/k_tau; negative per-rotor thrusts are floored at zero
    and speeds are clipped to [0, omega_max] (silent saturation).
    """
    L = params.arm_length
    yaw_split = moment[2] * params.k_f / params.k_tau
    front_pair = 0.5 * (thrust + yaw_split)   # rotors 1 + 2
    side_pair = 0.5 * (thrust - yaw_split)    # rotors 3 + 4
    f = np.array([
        0.5 * (front_pair - moment[1] / L),
        0.5 * (front_pair + moment[1] / L),
        0.5 * (side_pair + moment[0] / L),
        0.5 * (side_pair - moment[0] / L),
    ])
    omega = np.sqrt(np.maximum(f, 0.0) / params.k_f)
    return np.clip(omega, 0.0, params.omega_max)


def controller_update(state: QuadState, waypoint: np.ndarray, params: QuadParams,
                      gains: ControllerGains = ControllerGains()) -> np.ndarray:
    """Rotor-speed commands steering the vehicle toward the waypoint.

    Deterministic in (state, waypoint); at the waypoint with level attitude and
    zero rates it returns exactly the hover speed on all four rotors.
    """
    waypoint = np.asarray(waypoint, dtype=np.float64)
    accel = gains.pos_p * (waypoint - state.position) - gains.pos_d * state.velocity
    accel = np.clip(accel, -gains.max_accel, gains.max_accel)

    roll, pitch, yaw = quat_to_euler(state.quat)
    cy, sy = np.cos(yaw), np.sin(yaw)
    ax_b = cy * accel[0] + sy * accel[1]
    ay_b = -sy * accel[0] + cy * accel[1]
    pitch_des = np.clip(ax_b / GRAVITY, -gains.max_tilt, gains.max_tilt)
    roll_des = np.clip(-ay_b / GRAVITY, -gains.max_tilt, gains.max_tilt)

    rate_des = np.array([
        gains.att_p * (roll_des - roll),
        gains.att_p * (pitch_des - pitch),
        gains.yaw_p * _wrap(-yaw),   # desired yaw is held at zero
    ])
    rate_err = rate_des - state.rate
    moment = params.inertia * np.array([
        gains.rate_p * rate_err[0],
        gains.rate_p * rate_err[1],
        gains.yaw_rate_p * rate_err[2],
    ])

    # thrust along the current body z axis that realizes the vertical command
    tilt = np.cos(roll) * np.cos(pitch)
    thrust = params.mass * (GRAVITY + accel[2]) / max(tilt, 0.5)
    thrust = max(thrust, 0.1 * params.mass * GRAVITY)
    return mix_to_rotor_speeds(thrust, moment, params)


def _wrap(angle: float) -> float:
    return (angle + np.pi) % (2.0 * np.pi) - np.pi

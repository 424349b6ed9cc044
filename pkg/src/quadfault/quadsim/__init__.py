"""Quadrotor flight simulator with propeller-fault and domain perturbation injection."""

from .control import ControllerGains, controller_update, mix_to_rotor_speeds
from .dynamics import (angular_dynamics, cog_torque, quat_multiply, quat_rotate,
                       quat_rotate_inverse, quat_to_euler, rotor_forces, step)
from .episode import (CONTROL_DT, WaypointPlan, fly_episode, grid_plan, hover_plan,
                      jittered_plan)
from .types import (GRAVITY, DomainConfig, FaultSpec, FlightLog, QuadParams, QuadState,
                    UnbalanceModel)
from .unbalance import adjust_commands, adjust_speed, estimate_unbalance

__all__ = [
    "GRAVITY", "CONTROL_DT", "QuadParams", "QuadState", "FaultSpec", "UnbalanceModel",
    "DomainConfig", "FlightLog", "ControllerGains", "WaypointPlan",
    "rotor_forces", "angular_dynamics", "step", "cog_torque", "controller_update",
    "mix_to_rotor_speeds", "fly_episode", "hover_plan", "grid_plan", "jittered_plan",
    "estimate_unbalance", "adjust_speed", "adjust_commands",
    "quat_multiply", "quat_rotate", "quat_rotate_inverse", "quat_to_euler",
]

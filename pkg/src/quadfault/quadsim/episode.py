"""Closed-loop episode simulation producing flight logs.

An episode flies the controller through a waypoint plan at 100 Hz, injecting
the fault and domain perturbations, and records what a flight stack would
log: gyro rates (noise and bias added), roll/pitch estimates (bias added) and
the commanded rotor speeds (unbalance-adjusted when the domain carries an
UnbalanceModel). Episodes are pure functions of (arguments, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EpisodeDivergedError, InputDomainError
from .control import ControllerGains, controller_update
from .dynamics import quat_to_euler, step
from .types import DomainConfig, FaultSpec, FlightLog, QuadParams, QuadState
from .unbalance import adjust_commands

CONTROL_RATE_HZ = 100.0
CONTROL_DT = 1.0 / CONTROL_RATE_HZ
DIVERGENCE_RATE = 50.0  # rad/s


@dataclass(frozen=True)
class WaypointPlan:
    """Sequence of (hold_seconds, xyz position) segments, cycled when exhausted."""

    segments: tuple[tuple[float, tuple[float, float, float]], ...]

    def position_at(self, t: float) -> np.ndarray:
        total = sum(h for h, _ in self.segments)
        t = t % total
        for hold, pos in self.segments:
            if t < hold:
                return np.asarray(pos, dtype=np.float64)
            t -= hold
        return np.asarray(self.segments[-1][1], dtype=np.float64)


def hover_plan(position=(0.0, 0.0, 1.0), hold: float = 1e9) -> WaypointPlan:
    return WaypointPlan(segments=((hold, tuple(position)),))


def grid_plan(side: float = 1.5, altitude: float = 1.2, hold: float = 4.0) -> WaypointPlan:
    """Deterministic lattice sweep used for source-domain data collection."""
    s = side
    corners = [(0, 0, altitude), (s, 0, altitude), (s, s, altitude + 0.5),
               (0, s, altitude), (-s, s, altitude + 0.5), (-s, 0, altitude),
               (-s, -s, altitude + 0.5), (0, -s, altitude), (s, -s, altitude + 0.5),
               (0, 0, altitude + 0.3)]
    return WaypointPlan(segments=tuple((hold, c) for c in corners))


def jittered_plan(rng: np.random.Generator, side: float = 1.8, altitude: float = 1.2,
                  n_segments: int = 48) -> WaypointPlan:
    """Randomized waypoint walk standing in for manual piloting in the target."""
    segs = []
    for _ in range(n_segments):
        hold = float(rng.uniform(1.5, 3.5))
        pos = (float(rng.uniform(-side, side)), float(rng.uniform(-side, side)),
               float(altitude + rng.uniform(-0.4, 0.6)))
        segs.append((hold, pos))
    return WaypointPlan(segments=tuple(segs))


def fly_episode(params: QuadParams, fault: FaultSpec, domain: DomainConfig,
                waypoints: WaypointPlan, duration: float, seed: int,
                gains: ControllerGains = ControllerGains(),
                initial_state: QuadState | None = None) -> FlightLog:
    """Fly one closed-loop episode and return its FlightLog.

    The control loop, the physics step and the log all run at 100 Hz. Raises
    EpisodeDivergedError naming the step if any body rate passes 50 rad/s.
    """
    n_steps = int(round(duration * CONTROL_RATE_HZ))
    if n_steps < 1:
        raise InputDomainError("duration too short for a single control step")
    if not waypoints.segments:
        raise InputDomainError("waypoint plan is empty")
    rng = np.random.default_rng(seed)

    if initial_state is None:
        start = waypoints.position_at(0.0)
        state = QuadState(position=start.copy(),
                          rotor_speed=np.full(4, params.hover_speed()))
    else:
        state = initial_state.copy()

    gyro = np.empty((n_steps, 3))
    attitude = np.empty((n_steps, 2))
    omega_cmd = np.empty((n_steps, 4))
    bias = np.asarray(domain.gyro_bias, dtype=np.float64)
    att_bias = np.asarray(domain.att_bias, dtype=np.float64)
    cmd_bias = np.asarray(domain.cmd_log_bias, dtype=np.float64)

    for k in range(n_steps):
        target = waypoints.position_at(state.time)
        cmd = controller_update(state, target, params, gains)

        noise = rng.normal(0.0, domain.gyro_noise_std, 3) if domain.gyro_noise_std > 0 else 0.0
        gyro[k] = state.rate + bias + noise
        roll, pitch, _ = quat_to_euler(state.quat)
        attitude[k] = (roll + att_bias[0], pitch + att_bias[1])
        recorded = adjust_commands(cmd, domain.unbalance) if domain.unbalance else cmd
        omega_cmd[k] = recorded + cmd_bias

        state = step(state, cmd, CONTROL_DT, params, fault, domain)
        worst = float(np.max(np.abs(state.rate)))
        if worst > DIVERGENCE_RATE:
            raise EpisodeDivergedError(step=k, rate=worst)

    return FlightLog(dt=CONTROL_DT, gyro=gyro, attitude=attitude,
                     omega_cmd=omega_cmd, label=fault.label, domain=domain.name)

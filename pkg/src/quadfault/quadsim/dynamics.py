"""Rigid-body rotational/translational dynamics and the RK4 integrator.

Rotor thrusts and drag torques are quadratic in rotor speed. Angular
acceleration follows the standard rigid-body equation about the body axes:
roll torque from the thrust difference of rotors 3/4, pitch torque from
rotors 2/1, yaw torque from the alternating drag torques, minus the
gyroscopic term. All simulation arithmetic is float64.
"""

from __future__ import annotations

import numpy as np

from ..errors import InputDomainError
from .types import GRAVITY, DomainConfig, FaultSpec, QuadParams, QuadState


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z), body-to-world convention
# ---------------------------------------------------------------------------

def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate body-frame vector v into the world frame."""
    w, x, y, z = q
    # R(q) @ v expanded; avoids building the matrix
    t = 2.0 * np.array([
        y * v[2] - z * v[1],
        z * v[0] - x * v[2],
        x * v[1] - y * v[0],
    ])
    return v + w * t + np.array([
        y * t[2] - z * t[1],
        z * t[0] - x * t[2],
        x * t[1] - y * t[0],
    ])


def quat_rotate_inverse(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate world-frame vector v into the body frame."""
    return quat_rotate(np.array([q[0], -q[1], -q[2], -q[3]]), v)


def quat_to_euler(q: np.ndarray) -> tuple[float, float, float]:
    """(roll, pitch, yaw) in the ZYX convention."""
    w, x, y, z = q
    roll = np.arctan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    pitch = np.arcsin(np.clip(2.0 * (w * y - z * x), -1.0, 1.0))
    yaw = np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return float(roll), float(pitch), float(yaw)


def quat_derivative(q: np.ndarray, rate: np.ndarray) -> np.ndarray:
    return 0.5 * quat_multiply(q, np.array([0.0, rate[0], rate[1], rate[2]]))


# ---------------------------------------------------------------------------
# forces and angular dynamics
# ---------------------------------------------------------------------------

def rotor_forces(omega: np.ndarray, params: QuadParams,
                 fault: FaultSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-rotor thrust [N] and drag torque [N*m] at the given speeds.

    A degraded rotor produces thrust_eff * k_f * w^2 and torque_eff * k_tau * w^2.
    """
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != (4,):
        raise InputDomainError("omega must have four components")
    if not np.all(np.isfinite(omega)) or np.any(omega < 0):
        raise InputDomainError("rotor speeds must be finite and non-negative")
    eta_f, eta_t = fault.efficiency_vectors()
    w2 = omega * omega
    return eta_f * params.k_f * w2, eta_t * params.k_tau * w2


def body_torque(forces: np.ndarray, torques: np.ndarray, params: QuadParams) -> np.ndarray:
    """Net body torque from per-rotor thrusts/drag torques (no gyroscopic term)."""
    L = params.arm_length
    return np.array([
        L * (forces[2] - forces[3]),
        L * (forces[1] - forces[0]),
        torques[0] - torques[2] + torques[1] - torques[3],
    ])


def _angular_accel(rate: np.ndarray, forces: np.ndarray, torques: np.ndarray,
                   params: QuadParams, extra_torque: np.ndarray | None = None) -> np.ndarray:
    inertia = params.inertia
    p, q, r = rate
    iw = inertia * rate
    # hand-rolled rate x (I rate); tests check it against numpy's cross product
    gyroscopic = np.array([
        q * iw[2] - r * iw[1],
        r * iw[0] - p * iw[2],
        p * iw[1] - q * iw[0],
    ])
    torque = body_torque(forces, torques, params)
    if extra_torque is not None:
        torque = torque + extra_torque
    return (torque - gyroscopic) / inertia


def angular_dynamics(state: QuadState, forces: np.ndarray, torques: np.ndarray,
                     params: QuadParams, extra_torque: np.ndarray | None = None) -> np.ndarray:
    """Body angular acceleration (pdot, qdot, rdot) in rad/s^2."""
    return _angular_accel(state.rate, forces, torques, params, extra_torque)


def cog_torque(quat: np.ndarray, params: QuadParams, cog_offset: tuple[float, float]) -> np.ndarray:
    """Body torque from an off-center CoG, projected along body-frame gravity.

    At level attitude this reduces to [m*g*cog_y, -m*g*cog_x, 0].
    """
    cx, cy = cog_offset
    if cx == 0.0 and cy == 0.0:
        return np.zeros(3)
    g_body = quat_rotate_inverse(quat, np.array([0.0, 0.0, -1.0]))
    lever = np.array([-cx, -cy, 0.0])
    return params.mass * GRAVITY * np.cross(lever, g_body)


# ---------------------------------------------------------------------------
# full state derivative and one RK4 step
# ---------------------------------------------------------------------------

def _state_derivative(quat, rate, velocity, rotor_speed, omega_cmd, params: QuadParams,
                      fault: FaultSpec, domain: DomainConfig) -> tuple:
    forces, torques = rotor_forces(np.clip(rotor_speed, 0.0, params.omega_max), params, fault)
    extra = cog_torque(quat, params, domain.cog_offset)
    rate_dot = _angular_accel(rate, forces, torques, params, extra)
    quat_dot = quat_derivative(quat, rate)
    thrust_world = quat_rotate(quat, np.array([0.0, 0.0, float(np.sum(forces))]))
    vel_dot = thrust_world / params.mass - np.array([0.0, 0.0, GRAVITY])
    if domain.perfect_motor:
        rotor_dot = np.zeros(4)
    else:
        gains = params.k_m * np.asarray(domain.motor_gain_scale)
        rotor_dot = gains * (omega_cmd - rotor_speed)
    return quat_dot, rate_dot, velocity, vel_dot, rotor_dot


def step(state: QuadState, omega_cmd: np.ndarray, dt: float, params: QuadParams,
         fault: FaultSpec, domain: DomainConfig) -> QuadState:
    """Advance the vehicle one step of length dt with held rotor commands.

    Rotor speeds follow the first-order motor model (or snap to the command
    under the perfect-motor flag); attitude, rates, position and velocity are
    integrated with classic RK4; the quaternion is renormalized afterwards.
    """
    if not (0.0 < dt <= 0.02):
        raise InputDomainError(f"dt must lie in (0, 0.02], got {dt}")
    state.validate(params)
    omega_cmd = np.clip(np.asarray(omega_cmd, dtype=np.float64), 0.0, params.omega_max)

    if domain.perfect_motor:
        rotor0 = omega_cmd.copy()
    else:
        rotor0 = state.rotor_speed

    y = (state.quat, state.rate, state.position, state.velocity, rotor0)

    def deriv(yv):
        return _state_derivative(yv[0], yv[1], yv[3], yv[4], omega_cmd, params, fault, domain)

    def axpy(yv, k, h):
        return tuple(a + h * b for a, b in zip(yv, k))

    k1 = deriv(y)
    k2 = deriv(axpy(y, k1, 0.5 * dt))
    k3 = deriv(axpy(y, k2, 0.5 * dt))
    k4 = deriv(axpy(y, k3, dt))
    new = tuple(a + (dt / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))

    quat = new[0] / np.linalg.norm(new[0])
    rotor = np.clip(new[4], 0.0, params.omega_max)
    if domain.perfect_motor:
        rotor = omega_cmd.copy()
    out = QuadState(quat, new[1], new[2], new[3], rotor, state.time + dt)
    out.validate(params)
    return out

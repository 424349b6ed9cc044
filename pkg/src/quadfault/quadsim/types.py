"""Vehicle, fault, domain and flight-log data types for the quadrotor simulator."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InputDomainError

GRAVITY = 9.81  # m/s^2


@dataclass(frozen=True)
class QuadParams:
    """Physical parameters of the simulated quadrotor.

    inertia_diag is the (Ixx, Iyy, Izz) diagonal of the inertia matrix;
    k_f / k_tau map squared rotor speed to thrust [N] and drag torque [N*m];
    k_m is the first-order motor gain [1/s]; omega_max caps rotor speed.
    """

    mass: float = 1.0
    arm_length: float = 0.2
    k_f: float = 1.0e-5
    k_tau: float = 2.5e-7
    inertia_diag: tuple[float, float, float] = (0.01, 0.01, 0.018)
    k_m: float = 20.0
    omega_max: float = 900.0

    def __post_init__(self):
        vals = (self.mass, self.arm_length, self.k_f, self.k_tau, self.k_m, self.omega_max,
                *self.inertia_diag)
        if not all(np.isfinite(v) and v > 0 for v in vals):
            raise InputDomainError("all quadrotor parameters must be finite and strictly positive")

    @property
    def inertia(self) -> np.ndarray:
        return np.asarray(self.inertia_diag, dtype=np.float64)

    def hover_speed(self) -> float:
        """Rotor speed at which four healthy rotors exactly cancel gravity."""
        return float(np.sqrt(self.mass * GRAVITY / (4.0 * self.k_f)))


@dataclass
class QuadState:
    """Full vehicle state at one instant.

    quat is the unit body-to-world quaternion (w, x, y, z); rate is the body
    angular rate (p, q, r) in rad/s; rotor_speed holds the four physical rotor
    speeds in rad/s.
    """

    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    rate: np.ndarray = field(default_factory=lambda: np.zeros(3))
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotor_speed: np.ndarray = field(default_factory=lambda: np.zeros(4))
    time: float = 0.0

    def __post_init__(self):
        self.quat = np.asarray(self.quat, dtype=np.float64)
        self.rate = np.asarray(self.rate, dtype=np.float64)
        self.position = np.asarray(self.position, dtype=np.float64)
        self.velocity = np.asarray(self.velocity, dtype=np.float64)
        self.rotor_speed = np.asarray(self.rotor_speed, dtype=np.float64)

    def validate(self, params: QuadParams) -> None:
        if abs(np.linalg.norm(self.quat) - 1.0) > 1e-9:
            raise InputDomainError("attitude quaternion is not unit length")
        if np.any(self.rotor_speed < 0) or np.any(self.rotor_speed > params.omega_max):
            raise InputDomainError("rotor speeds outside [0, omega_max]")
        for arr in (self.quat, self.rate, self.position, self.velocity, self.rotor_speed):
            if not np.all(np.isfinite(arr)):
                raise InputDomainError("non-finite state component")

    def copy(self) -> "QuadState":
        return QuadState(self.quat.copy(), self.rate.copy(), self.position.copy(),
                         self.velocity.copy(), self.rotor_speed.copy(), self.time)


@dataclass(frozen=True)
class FaultSpec:
    """Which propeller (if any) is degraded, and the 1..5 class label.

    Label 1 is all-healthy; label k+1 means propeller k is degraded. The
    faulty rotor's thrust and drag torque are scaled by thrust_eff and
    torque_eff, both in (0, 1].
    """

    label: int = 1
    faulty_rotor: int | None = None
    thrust_eff: float = 0.85
    torque_eff: float = 0.85

    def __post_init__(self):
        if self.label not in (1, 2, 3, 4, 5):
            raise InputDomainError(f"fault label must be 1..5, got {self.label}")
        if (self.label == 1) != (self.faulty_rotor is None):
            raise InputDomainError("label 1 must have no faulty rotor and labels 2..5 must name one")
        if self.faulty_rotor is not None and self.faulty_rotor != self.label - 1:
            raise InputDomainError(
                f"label {self.label} corresponds to rotor {self.label - 1}, got {self.faulty_rotor}"
            )
        for eff in (self.thrust_eff, self.torque_eff):
            if not (0.0 < eff <= 1.0):
                raise InputDomainError("efficiencies must lie in (0, 1]")

    @classmethod
    def for_label(cls, label: int, thrust_eff: float = 0.85, torque_eff: float = 0.85) -> "FaultSpec":
        rotor = None if label == 1 else label - 1
        return cls(label=label, faulty_rotor=rotor, thrust_eff=thrust_eff, torque_eff=torque_eff)

    def efficiency_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-rotor (thrust, torque) efficiency; ones for healthy rotors."""
        eta_f = np.ones(4)
        eta_t = np.ones(4)
        if self.faulty_rotor is not None:
            eta_f[self.faulty_rotor - 1] = self.thrust_eff
            eta_t[self.faulty_rotor - 1] = self.torque_eff
        return eta_f, eta_t


@dataclass(frozen=True)
class UnbalanceModel:
    """Per-motor steady-state speed ratios over baseline motor 1.

    rho[0] is exactly 1 by construction. omega_ref_max is the reference
    speed at which the ratio applies in full; below it the effective ratio
    scales linearly with speed.
    """

    rho: tuple[float, float, float, float]
    omega_ref_max: float

    def __post_init__(self):
        if len(self.rho) != 4:
            raise InputDomainError("unbalance model needs exactly four ratios")
        if self.rho[0] != 1.0:
            raise InputDomainError("ratio of the baseline motor 1 must be exactly 1")
        if not all(np.isfinite(r) and r > 0 for r in self.rho):
            raise InputDomainError("ratios must be finite and positive")
        if not (np.isfinite(self.omega_ref_max) and self.omega_ref_max > 0):
            raise InputDomainError("omega_ref_max must be finite and positive")


@dataclass(frozen=True)
class DomainConfig:
    """Everything that distinguishes one data-collection domain from another.

    The nominal source domain keeps every perturbation at zero and the motor
    perfect; the pseudo-reality target sets gyro noise, sensor biases, a CoG
    offset, per-rotor motor-gain scales and an injected unbalance. Nothing is
    randomized implicitly: a config states exactly what its simulator does.
    """

    name: str = "source"
    gyro_noise_std: float = 0.0
    cog_offset: tuple[float, float] = (0.0, 0.0)
    motor_gain_scale: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    gyro_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    att_bias: tuple[float, float] = (0.0, 0.0)
    cmd_log_bias: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    perfect_motor: bool = True
    unbalance: UnbalanceModel | None = None
    seed: int = 0

    def __post_init__(self):
        if self.name not in ("source", "target"):
            raise InputDomainError("domain name must be 'source' or 'target'")
        if self.gyro_noise_std < 0:
            raise InputDomainError("gyro noise std must be >= 0")
        if len(self.motor_gain_scale) != 4 or any(g <= 0 for g in self.motor_gain_scale):
            raise InputDomainError("motor gain scales must be four positive values")

    def with_unbalance(self, model: UnbalanceModel | None) -> "DomainConfig":
        return replace(self, unbalance=model)


@dataclass
class FlightLog:
    """Uniformly sampled sensor/command record of one simulated episode.

    gyro rows are logged body rates (true rates plus sensor noise and bias);
    attitude rows are logged (roll, pitch) in rad; omega_cmd rows are the four
    recorded commanded rotor speeds, already carrying any unbalance
    adjustment of the domain the episode was flown in.
    """

    dt: float
    gyro: np.ndarray         # (N, 3)
    attitude: np.ndarray     # (N, 2)
    omega_cmd: np.ndarray    # (N, 4)
    label: int
    domain: str

    def __post_init__(self):
        self.gyro = np.asarray(self.gyro, dtype=np.float64)
        self.attitude = np.asarray(self.attitude, dtype=np.float64)
        self.omega_cmd = np.asarray(self.omega_cmd, dtype=np.float64)
        if self.dt <= 0:
            raise InputDomainError("dt must be positive")
        n = len(self.gyro)
        if len(self.omega_cmd) != n or len(self.attitude) != n:
            raise InputDomainError("gyro, attitude and omega_cmd must have equal length")

    def __len__(self) -> int:
        return len(self.gyro)

    def tail(self, samples: int) -> "FlightLog":
        """Last `samples` entries (used to trim startup transients)."""
        return FlightLog(self.dt, self.gyro[-samples:], self.attitude[-samples:],
                         self.omega_cmd[-samples:], self.label, self.domain)

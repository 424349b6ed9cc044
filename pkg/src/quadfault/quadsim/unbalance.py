"""Unbalanced-ratio estimation from steady flight and speed adjustment.

The ratio of motor i is its mean recorded speed over motor 1's during steady
flight. When a domain carries an UnbalanceModel, recorded commanded speeds are
adjusted as rho_i(w) * w with rho_i(w) = (w / omega_ref_max) * rho_i, i.e. the
adjustment is quadratic in the commanded speed. Applying the same mechanism in
both domains lets the source-side estimate reproduce the target's recorded
speed statistics.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateLogError, InputDomainError
from .types import FlightLog, UnbalanceModel

MIN_STEADY_SAMPLES = 500


def estimate_unbalance(healthy_target_log: FlightLog) -> UnbalanceModel:
    """Per-motor mean-speed ratios over motor 1 from a steady healthy log.

    The caller is expected to trim the startup transient first (FlightLog.tail).
    """
    log = healthy_target_log
    if len(log) < MIN_STEADY_SAMPLES:
        raise DegenerateLogError(
            f"need at least {MIN_STEADY_SAMPLES} steady samples, got {len(log)}"
        )
    means = log.omega_cmd.mean(axis=0)
    if means[0] <= 0.0:
        raise DegenerateLogError("baseline motor 1 has zero mean speed")
    rho = means / means[0]
    rho[0] = 1.0
    return UnbalanceModel(rho=tuple(float(r) for r in rho),
                          omega_ref_max=float(log.omega_cmd.max()))


def adjust_speed(omega_i: float | np.ndarray, rotor_index: int, model: UnbalanceModel):
    """Adjusted speed rho_i(w) * w for motor `rotor_index` (1-based).

    rho_i(w) interpolates linearly between 0 at w=0 and rho_i at
    w=omega_ref_max, so the adjusted speed is quadratic in w.
    """
    if rotor_index not in (1, 2, 3, 4):
        raise InputDomainError("rotor index must be 1..4")
    if model.omega_ref_max <= 0:
        raise InputDomainError("omega_ref_max must be positive")
    omega_i = np.asarray(omega_i, dtype=np.float64)
    if np.any(omega_i < 0):
        raise InputDomainError("speeds must be non-negative")
    rho_at = (omega_i / model.omega_ref_max) * model.rho[rotor_index - 1]
    out = rho_at * omega_i
    return float(out) if out.ndim == 0 else out


def adjust_commands(omega_cmd: np.ndarray, model: UnbalanceModel) -> np.ndarray:
    """Vectorized adjust_speed over the four rotors of one command sample."""
    rho = np.asarray(model.rho)
    return (omega_cmd / model.omega_ref_max) * rho * omega_cmd

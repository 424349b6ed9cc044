"""Windowed classifier inputs from flight logs.

Two layouts are supported. The dynamics-informed variant ("nif") stacks the
three differentiated body rates over the four squared commanded rotor speeds,
7 channels in all; the baseline variant ("cf") stacks roll, pitch, the three
raw rates and the four raw commanded speeds, 9 channels. Per-channel
standardization statistics are fitted on source-domain windows only and then
applied unchanged to target windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import InputDomainError
from .quadsim.types import FlightLog

NIF_CHANNELS = 7
CF_CHANNELS = 9

VARIANT_CHANNELS = {"nif": NIF_CHANNELS, "cf": CF_CHANNELS}


@dataclass(frozen=True)
class FeatureConfig:
    window_len: int = 80
    stride: int = 10
    variant: str = "nif"

    def __post_init__(self):
        if self.window_len < 2:
            raise InputDomainError("window length must be >= 2")
        if self.stride < 1:
            raise InputDomainError("stride must be >= 1")
        if self.variant not in VARIANT_CHANNELS:
            raise InputDomainError(f"variant must be one of {sorted(VARIANT_CHANNELS)}")

    @property
    def channels(self) -> int:
        return VARIANT_CHANNELS[self.variant]


@dataclass
class Window:
    """One classifier input: a channels x window_len matrix plus its tags."""

    data: np.ndarray
    label: int
    domain: str

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if not np.all(np.isfinite(self.data)):
            raise InputDomainError("window contains non-finite entries")


def angular_accel_from_gyro(gyro: np.ndarray, dt: float) -> np.ndarray:
    """Angular acceleration series from a rate series, same length as the input.

    Central differences in the interior, second-order one-sided stencils at the
    endpoints; works on (N,) or (N, C) arrays.
    """
    gyro = np.asarray(gyro, dtype=np.float64)
    n = gyro.shape[0]
    if n < 3:
        raise InputDomainError("need at least 3 samples to differentiate")
    if dt <= 0:
        raise InputDomainError("dt must be positive")
    acc = np.empty_like(gyro)
    acc[1:-1] = (gyro[2:] - gyro[:-2]) / (2.0 * dt)
    acc[0] = (-3.0 * gyro[0] + 4.0 * gyro[1] - gyro[2]) / (2.0 * dt)
    acc[-1] = (3.0 * gyro[-1] - 4.0 * gyro[-2] + gyro[-3]) / (2.0 * dt)
    return acc


def _stack_channels(log: FlightLog, cfg: FeatureConfig) -> np.ndarray:
    if cfg.variant == "nif":
        accel = angular_accel_from_gyro(log.gyro, log.dt)
        return np.hstack([accel, log.omega_cmd ** 2])  # (N, 7)
    return np.hstack([log.attitude, log.gyro, log.omega_cmd])  # (N, 9)


def build_windows(log: FlightLog, cfg: FeatureConfig) -> list[Window]:
    """Cut a flight log into overlapping windows of cfg.window_len samples.

    The first window ends at sample window_len - 1; subsequent windows advance
    by cfg.stride. Each window inherits the log's label and domain tag.
    """
    n = len(log)
    T = cfg.window_len
    if n < T:
        raise InputDomainError(f"log has {n} samples, needs at least {T}")
    series = _stack_channels(log, cfg)  # (N, C)
    windows = []
    for end in range(T, n + 1, cfg.stride):
        block = series[end - T:end].T  # (C, T)
        windows.append(Window(block.astype(np.float32), log.label, log.domain))
    return windows


def windows_to_array(windows: list[Window]) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows into (X, y): float32 (N, C, T) data and int32 labels."""
    if not windows:
        raise InputDomainError("empty window list")
    X = np.stack([w.data for w in windows]).astype(np.float32)
    y = np.array([w.label for w in windows], dtype=np.int32)
    return X, y


class WindowNormalizer(BaseEstimator, TransformerMixin):
    """Per-channel standardization fitted on source windows only.

    transform maps each channel to (x - mean) / std with the fitted statistics,
    computed in float64 and returned in the input's dtype; fitting fails on any
    zero-variance channel. The statistics round-trip bit-exactly through
    to_arrays / from_arrays.
    """

    def __init__(self):
        self.mean_ = None
        self.std_ = None

    def fit(self, X: np.ndarray, y=None) -> "WindowNormalizer":
        X = self._check(X)
        mean = X.mean(axis=(0, 2), dtype=np.float64)
        std = np.sqrt(((X.astype(np.float64) - mean[None, :, None]) ** 2).mean(axis=(0, 2)))
        if np.any(std <= 0):
            bad = int(np.argmin(std))
            raise InputDomainError(f"channel {bad} has zero variance; cannot standardize")
        self.mean_ = mean
        self.std_ = std
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.mean_ is None:
            raise InputDomainError("normalizer is not fitted")
        X = self._check(X)
        out = (X.astype(np.float64) - self.mean_[None, :, None]) / self.std_[None, :, None]
        return out.astype(X.dtype)

    @staticmethod
    def _check(X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        if X.dtype not in (np.float32, np.float64):
            X = X.astype(np.float32)
        if X.ndim != 3:
            raise InputDomainError("expected (n_windows, channels, window_len) input")
        return X

    def to_arrays(self) -> dict[str, np.ndarray]:
        if self.mean_ is None:
            raise InputDomainError("normalizer is not fitted")
        return {"norm_mean": self.mean_.astype(np.float64),
                "norm_std": self.std_.astype(np.float64)}

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "WindowNormalizer":
        norm = cls()
        norm.mean_ = np.asarray(arrays["norm_mean"], dtype=np.float64)
        norm.std_ = np.asarray(arrays["norm_std"], dtype=np.float64)
        return norm

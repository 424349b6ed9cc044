"""Labeled two-domain window datasets: generation, persistence, batching.

Dataset generation flies one fault class at a time with per-(label, episode)
derived seeds until the requested number of windows exists, then truncates,
so datasets are balanced by construction and reproducible from (config, seed).
On disk a dataset is a container directory: a JSON manifest plus a flat
little-endian float32 tensor in [window, channel, time] order and an int32
label file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .container import load_container, save_container
from .errors import ContainerCountError, InputDomainError
from .features import FeatureConfig, Window, build_windows, windows_to_array
from .quadsim import (ControllerGains, DomainConfig, FaultSpec, QuadParams, fly_episode,
                      grid_plan, jittered_plan)

N_CLASSES = 5
EPISODE_DURATION = 120.0  # seconds of flight per class, ~2 minutes


@dataclass
class Dataset:
    """A set of windows sharing one feature variant and one domain."""

    windows: list[Window]
    variant: str
    domain: str
    normalizer_ref: str | None = None
    seed: int | None = None
    config_sha256: str | None = None

    def __len__(self) -> int:
        return len(self.windows)

    def class_counts(self) -> dict[int, int]:
        counts = {label: 0 for label in range(1, N_CLASSES + 1)}
        for w in self.windows:
            counts[w.label] += 1
        return counts

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return windows_to_array(self.windows)

    def validate(self) -> None:
        for w in self.windows:
            if w.domain != self.domain:
                raise InputDomainError("window domain tag differs from dataset domain")


def _episode_seed(base_seed: int, domain_seed: int, label: int, episode: int) -> int:
    ss = np.random.SeedSequence([base_seed, domain_seed, label, episode])
    return int(ss.generate_state(1)[0])


def _plan_for(domain: DomainConfig, episode_seed: int):
    if domain.name == "target":
        return jittered_plan(np.random.default_rng(episode_seed ^ 0x5A17))
    return grid_plan()


def _generate_label(args) -> list[Window]:
    """All windows for one fault class; module-level so process pools can pickle it."""
    (params, domain, per_class, feature_cfg, seed, thrust_eff, torque_eff, gains,
     episode_duration, label) = args
    fault = FaultSpec.for_label(label, thrust_eff, torque_eff)
    collected: list[Window] = []
    episode = 0
    while len(collected) < per_class:
        ep_seed = _episode_seed(seed, domain.seed, label, episode)
        log = fly_episode(params, fault, domain, _plan_for(domain, ep_seed),
                          episode_duration, ep_seed, gains)
        collected.extend(build_windows(log, feature_cfg))
        episode += 1
    return collected[:per_class]


def generate(params: QuadParams, domain: DomainConfig, per_class: int,
             feature_cfg: FeatureConfig, seed: int,
             fault_thrust_eff: float = 0.85, fault_torque_eff: float = 0.85,
             gains: ControllerGains = ControllerGains(),
             episode_duration: float = EPISODE_DURATION, jobs: int = 1) -> Dataset:
    """Fly every fault class in the given domain and window the logs.

    Episodes are added (with distinct derived seeds) until each class holds at
    least per_class windows, then each class is truncated to exactly per_class.
    Classes are independent, so jobs > 1 flies them in parallel processes; the
    result is identical either way.
    """
    if per_class < 1:
        raise InputDomainError("per_class must be >= 1")
    tasks = [(params, domain, per_class, feature_cfg, seed, fault_thrust_eff,
              fault_torque_eff, gains, episode_duration, label)
             for label in range(1, N_CLASSES + 1)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            per_label = list(pool.map(_generate_label, tasks))
    else:
        per_label = [_generate_label(t) for t in tasks]
    windows = [w for group in per_label for w in group]
    ds = Dataset(windows=windows, variant=feature_cfg.variant, domain=domain.name, seed=seed)
    ds.validate()
    return ds


def save(dataset: Dataset, path: str | Path) -> Path:
    """Persist a dataset as a container directory; layout documented in README."""
    X, y = dataset.arrays()
    meta = {
        "variant": dataset.variant,
        "domain": dataset.domain,
        "window_len": int(X.shape[2]),
        "channels": int(X.shape[1]),
        "per_class_counts": {str(k): v for k, v in dataset.class_counts().items()},
        "normalizer_ref": dataset.normalizer_ref,
        "seed": dataset.seed,
        "config_sha256": dataset.config_sha256,
    }
    return save_container(path, "dataset", {"windows": X, "labels": y}, meta)


def load(path: str | Path) -> Dataset:
    """Load a dataset container, verifying counts against the manifest."""
    tensors, meta = load_container(path, kind="dataset")
    X, y = tensors["windows"], tensors["labels"]
    if len(X) != len(y):
        raise ContainerCountError(f"{path}: {len(X)} windows but {len(y)} labels")
    windows = [Window(X[i], int(y[i]), meta["domain"]) for i in range(len(X))]
    ds = Dataset(windows=windows, variant=meta["variant"], domain=meta["domain"],
                 normalizer_ref=meta.get("normalizer_ref"), seed=meta.get("seed"),
                 config_sha256=meta.get("config_sha256"))
    recount = {str(k): v for k, v in ds.class_counts().items()}
    if recount != meta["per_class_counts"]:
        raise ContainerCountError(
            f"{path}: manifest per-class counts {meta['per_class_counts']} != stored {recount}"
        )
    return ds


def batches(dataset: Dataset | tuple[np.ndarray, np.ndarray], batch_size: int,
            shuffle_seed: int):
    """Yield (data, labels) mini-batches covering the dataset exactly once.

    Order is a seeded permutation; the final short batch is included.
    """
    if batch_size < 1:
        raise InputDomainError("batch_size must be >= 1")
    X, y = dataset.arrays() if isinstance(dataset, Dataset) else dataset
    n = len(X)
    if n == 0:
        raise InputDomainError("cannot batch an empty dataset")
    perm = np.random.default_rng(shuffle_seed).permutation(n)
    for start in range(0, n, batch_size):
        idx = perm[start:start + batch_size]
        yield X[idx], y[idx]


def healthy_subset(dataset: Dataset) -> Dataset:
    """Only the label-1 windows, domain tag preserved; may be empty."""
    return Dataset(windows=[w for w in dataset.windows if w.label == 1],
                   variant=dataset.variant, domain=dataset.domain,
                   normalizer_ref=dataset.normalizer_ref, seed=dataset.seed,
                   config_sha256=dataset.config_sha256)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def calibrate_source(params: QuadParams, source_domain: DomainConfig,
                     target_domain: DomainConfig, seed: int,
                     duration: float = 60.0, trim_seconds: float = 10.0,
                     gains: ControllerGains = ControllerGains()):
    """Fly a healthy target episode, estimate its motor ratios, and return the
    adjusted source domain carrying those ratios.

    This is the data-collection order the whole pipeline depends on: the
    source simulator is only "adjusted" after a healthy calibration flight in
    the target domain. Returns (adjusted_source_domain, unbalance_model,
    calibration_log).
    """
    from .quadsim import estimate_unbalance, jittered_plan

    ep_seed = _episode_seed(seed, target_domain.seed, 1, 999_983)
    plan = jittered_plan(np.random.default_rng(ep_seed ^ 0x5A17))
    log = fly_episode(params, FaultSpec.for_label(1), target_domain, plan, duration,
                      ep_seed, gains)
    steady = log.tail(len(log) - int(round(trim_seconds / log.dt)))
    model = estimate_unbalance(steady)
    return source_domain.with_unbalance(model), model, log


# ---------------------------------------------------------------------------
# flight-log persistence shares the same container conventions
# ---------------------------------------------------------------------------

def save_flight_log(log, path: str | Path) -> Path:
    from .quadsim.types import FlightLog  # local import to avoid cycle at import time

    assert isinstance(log, FlightLog)
    tensors = {
        "gyro": log.gyro.astype(np.float64),
        "attitude": log.attitude.astype(np.float64),
        "omega_cmd": log.omega_cmd.astype(np.float64),
    }
    meta = {"dt": log.dt, "label": log.label, "domain": log.domain}
    return save_container(path, "flightlog", tensors, meta)


def load_flight_log(path: str | Path):
    from .quadsim.types import FlightLog

    tensors, meta = load_container(path, kind="flightlog")
    return FlightLog(dt=meta["dt"], gyro=tensors["gyro"], attitude=tensors["attitude"],
                     omega_cmd=tensors["omega_cmd"], label=meta["label"], domain=meta["domain"])

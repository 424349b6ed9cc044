"""Run configuration: defaults, strict YAML loading, resolved-config dumps.

Precedence is flags > file > defaults. Unknown keys anywhere in the file are
rejected so typos cannot silently fall back to defaults, and every command
writes the fully resolved configuration next to its outputs for provenance.
"""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .errors import ConfigError
from .features import FeatureConfig
from .pipeline import TrainConfig
from .quadsim import DomainConfig, QuadParams, UnbalanceModel

DEFAULTS: dict = {
    "seed": 0,
    "quad": {
        "mass": 1.0,
        "arm_length": 0.2,
        "k_f": 1.0e-5,
        "k_tau": 2.5e-7,
        "inertia": [0.01, 0.01, 0.018],
        "k_m": 20.0,
        "omega_max": 900.0,
    },
    "fault": {
        "thrust_eff": 0.85,
        "torque_eff": 0.85,
    },
    "features": {
        "window_len": 80,
        "stride": 10,
    },
    "episode": {
        "duration": 120.0,
        "calibration_duration": 60.0,
        "calibration_trim": 10.0,
    },
    "source_domain": {
        "gyro_noise_std": 0.005,
        "cog_offset": [0.0, 0.0],
        "motor_gain_scale": [1.0, 1.0, 1.0, 1.0],
        "gyro_bias": [0.0, 0.0, 0.0],
        "att_bias": [0.0, 0.0],
        "cmd_log_bias": [0.0, 0.0, 0.0, 0.0],
        "perfect_motor": True,
        "unbalance": None,
        "seed": 1,
    },
    "target_domain": {
        "gyro_noise_std": 0.005,
        "cog_offset": [0.003, -0.004],
        "motor_gain_scale": [1.05, 0.95, 1.02, 0.9],
        "gyro_bias": [0.012, -0.009, 0.007],
        "att_bias": [0.035, -0.028],
        "cmd_log_bias": [8.0, -6.0, 5.0, -9.0],
        "perfect_motor": False,
        "unbalance": {"rho": [1.0, 1.03, 0.98, 1.01], "omega_ref_max": 629.0},
        "seed": 2,
    },
    "train": {
        "batch_size": 128,
        "lr": 5.0e-4,
        "max_epochs": 50,
        "patience": 10,
        "dropout": 0.1,
        "lambda_mmd": 1.0e4,
        "mmd_batch": 64,
        "mmd_estimator": "unbiased",
    },
    "experiment": {
        "per_class": 800,
        "runs": 10,
    },
}


def _merge_strict(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge_strict(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path | None = None) -> dict:
    """Defaults merged with an optional YAML file, unknown keys rejected."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at top level")
    return _merge_strict(DEFAULTS, data)


def apply_overrides(cfg: dict, **overrides) -> dict:
    """Apply non-None CLI flag values onto a loaded config (flags win)."""
    cfg = copy.deepcopy(cfg)
    mapping = {
        "seed": ("seed",),
        "per_class": ("experiment", "per_class"),
        "runs": ("experiment", "runs"),
    }
    for name, value in overrides.items():
        if value is None:
            continue
        node = cfg
        *parents, leaf = mapping[name]
        for p in parents:
            node = node[p]
        node[leaf] = value
    return cfg


def dump_resolved(cfg: dict, out_dir: str | Path, extra: dict | None = None) -> Path:
    """Write the resolved config (plus derived values) next to the outputs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = copy.deepcopy(cfg)
    if extra:
        payload["derived"] = extra
    target = out_dir / "resolved_config.yaml"
    target.write_text(yaml.safe_dump(payload, sort_keys=True))
    return target


# ---------------------------------------------------------------------------
# builders from the resolved dict
# ---------------------------------------------------------------------------

def quad_params(cfg: dict) -> QuadParams:
    q = cfg["quad"]
    return QuadParams(mass=q["mass"], arm_length=q["arm_length"], k_f=q["k_f"],
                      k_tau=q["k_tau"], inertia_diag=tuple(q["inertia"]), k_m=q["k_m"],
                      omega_max=q["omega_max"])


def domain_config(cfg: dict, which: str) -> DomainConfig:
    if which not in ("source", "target"):
        raise ConfigError("domain must be 'source' or 'target'")
    d = cfg[f"{which}_domain"]
    unb = d.get("unbalance")
    model = None
    if unb is not None:
        model = UnbalanceModel(rho=tuple(float(r) for r in unb["rho"]),
                               omega_ref_max=float(unb["omega_ref_max"]))
    return DomainConfig(name=which, gyro_noise_std=float(d["gyro_noise_std"]),
                        cog_offset=tuple(d["cog_offset"]),
                        motor_gain_scale=tuple(d["motor_gain_scale"]),
                        gyro_bias=tuple(d["gyro_bias"]), att_bias=tuple(d["att_bias"]),
                        cmd_log_bias=tuple(d["cmd_log_bias"]),
                        perfect_motor=bool(d["perfect_motor"]), unbalance=model,
                        seed=int(d["seed"]))


def feature_config(cfg: dict, variant: str) -> FeatureConfig:
    f = cfg["features"]
    return FeatureConfig(window_len=int(f["window_len"]), stride=int(f["stride"]),
                         variant=variant)


def train_config(cfg: dict, da_enabled: bool, seed: int | None = None) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(batch_size=int(t["batch_size"]), lr=float(t["lr"]),
                       max_epochs=int(t["max_epochs"]), patience=int(t["patience"]),
                       dropout=float(t["dropout"]), lambda_mmd=float(t["lambda_mmd"]),
                       da_enabled=da_enabled, mmd_batch=int(t["mmd_batch"]),
                       mmd_estimator=str(t["mmd_estimator"]),
                       seed=cfg["seed"] if seed is None else seed)

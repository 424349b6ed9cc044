"""The 1-D DCNN classifier: parameters, forward pass, explicit backward pass.

Architecture: n_blocks repetitions of [conv(kernel 3) -> relu -> maxpool(2)],
flatten, dense1 -> relu -> dropout, dense2 -> relu -> dropout, linear output
to n_classes logits. The post-relu, pre-dropout dense1 activations are the
transfer features used for the MMD loss and for export. The shape chain is
validated once at construction; a mismatched input fails fast there rather
than mid-forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..container import load_container, save_container
from ..errors import InputDomainError

DTYPE = np.float32


@dataclass(frozen=True)
class ModelSpec:
    """Architecture hyperparameters and the derived shape chain."""

    in_channels: int = 7
    window_len: int = 80
    n_blocks: int = 4
    filters: int = 64
    kernel: int = 3
    dense_units: int = 128
    n_classes: int = 5

    def shape_chain(self) -> list[int]:
        """Per-layer signal lengths: input, then post-conv and post-pool lengths."""
        chain = [self.window_len]
        length = self.window_len
        for _ in range(self.n_blocks):
            if length < self.kernel:
                raise InputDomainError(
                    f"window of {self.window_len} samples is too short for "
                    f"{self.n_blocks} conv/pool blocks (length {length} < kernel {self.kernel})"
                )
            length = length - self.kernel + 1
            chain.append(length)
            if length >= 2:
                length = length // 2
                chain.append(length)
        return chain

    @property
    def flat_dim(self) -> int:
        return self.filters * self.shape_chain()[-1]


@dataclass
class ModelParams:
    """All trainable tensors, keyed by layer name, plus the architecture spec."""

    spec: ModelSpec
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def names(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> "ModelParams":
        return ModelParams(self.spec, {k: v.copy() for k, v in self.tensors.items()})

    def allclose(self, other: "ModelParams") -> bool:
        return (self.names() == other.names()
                and all(np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors))


def init_params(spec: ModelSpec, seed: int) -> ModelParams:
    """Fan-in-scaled uniform initialization, reproducible from the seed."""
    spec.shape_chain()  # validates the architecture/window combination
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}

    def he_uniform(shape, fan_in):
        lim = np.sqrt(6.0 / fan_in)
        return rng.uniform(-lim, lim, size=shape).astype(DTYPE)

    c_in = spec.in_channels
    for i in range(1, spec.n_blocks + 1):
        tensors[f"conv{i}_w"] = he_uniform((spec.filters, c_in, spec.kernel), c_in * spec.kernel)
        tensors[f"conv{i}_b"] = np.zeros(spec.filters, dtype=DTYPE)
        c_in = spec.filters
    tensors["dense1_w"] = he_uniform((spec.flat_dim, spec.dense_units), spec.flat_dim)
    tensors["dense1_b"] = np.zeros(spec.dense_units, dtype=DTYPE)
    tensors["dense2_w"] = he_uniform((spec.dense_units, spec.dense_units), spec.dense_units)
    tensors["dense2_b"] = np.zeros(spec.dense_units, dtype=DTYPE)
    tensors["out_w"] = he_uniform((spec.dense_units, spec.n_classes), spec.dense_units)
    tensors["out_b"] = np.zeros(spec.n_classes, dtype=DTYPE)
    return ModelParams(spec, tensors)


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def forward_features(params: ModelParams, x: np.ndarray):
    """Conv stack + dense1 + relu: the transfer-feature half of the network.

    Returns (features, cache); features are (B, dense_units), pre-dropout.
    """
    from . import ops

    spec = params.spec
    if x.ndim != 3 or x.shape[1] != spec.in_channels or x.shape[2] != spec.window_len:
        raise InputDomainError(
            f"input {x.shape} does not match model ({spec.in_channels}, {spec.window_len})"
        )
    cache = {"blocks": []}
    h = x
    for i in range(1, spec.n_blocks + 1):
        h, conv_cache = ops.conv1d(h, params.tensors[f"conv{i}_w"], params.tensors[f"conv{i}_b"])
        h, relu_cache = ops.relu(h)
        if h.shape[-1] >= 2:
            h, pool_cache = ops.maxpool1d(h)
        else:
            pool_cache = None
        cache["blocks"].append((conv_cache, relu_cache, pool_cache))
    cache["conv_out_shape"] = h.shape
    flat = h.reshape(h.shape[0], -1)
    z1, d1_cache = ops.dense(flat, params.tensors["dense1_w"], params.tensors["dense1_b"])
    feats, r1_cache = ops.relu(z1)
    cache["dense1"] = d1_cache
    cache["relu1"] = r1_cache
    return feats, cache


def backward_features(params: ModelParams, dfeats: np.ndarray, cache) -> dict[str, np.ndarray]:
    """Gradients of every feature-path tensor given d(loss)/d(features)."""
    from . import ops

    grads: dict[str, np.ndarray] = {}
    dz1 = ops.relu_backward(dfeats, cache["relu1"])
    dflat, grads["dense1_w"], grads["dense1_b"] = ops.dense_backward(dz1, cache["dense1"])
    dh = dflat.reshape(cache["conv_out_shape"])
    for i in range(params.spec.n_blocks, 0, -1):
        conv_cache, relu_cache, pool_cache = cache["blocks"][i - 1]
        if pool_cache is not None:
            dh = ops.maxpool1d_backward(dh, pool_cache)
        dh = ops.relu_backward(dh, relu_cache)
        dh, grads[f"conv{i}_w"], grads[f"conv{i}_b"] = ops.conv1d_backward(dh, conv_cache)
    return grads


def model_forward(params: ModelParams, x: np.ndarray, train: bool = False,
                  dropout_rate: float = 0.0, rng: np.random.Generator | None = None):
    """Full forward pass; returns (logits, dense1_features, cache).

    dense1_features are post-relu, pre-dropout. Eval mode (train=False) is
    deterministic; train mode is deterministic given the generator state.
    """
    from . import ops

    feats, cache = forward_features(params, x)
    h, cache["drop1"] = ops.dropout(feats, dropout_rate, train, rng)
    z2, cache["dense2"] = ops.dense(h, params.tensors["dense2_w"], params.tensors["dense2_b"])
    h2, cache["relu2"] = ops.relu(z2)
    h2, cache["drop2"] = ops.dropout(h2, dropout_rate, train, rng)
    logits, cache["out"] = ops.dense(h2, params.tensors["out_w"], params.tensors["out_b"])
    return logits, feats, cache


def model_backward(params: ModelParams, dlogits: np.ndarray, cache,
                   dfeats_extra: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Gradients of every tensor given d(loss)/d(logits).

    dfeats_extra, when given, is added to the gradient flowing into the dense1
    features (used to mix in the MMD term on the classification batch).
    """
    from . import ops

    grads: dict[str, np.ndarray] = {}
    dh2, grads["out_w"], grads["out_b"] = ops.dense_backward(dlogits, cache["out"])
    dh2 = ops.dropout_backward(dh2, cache["drop2"])
    dz2 = ops.relu_backward(dh2, cache["relu2"])
    dh, grads["dense2_w"], grads["dense2_b"] = ops.dense_backward(dz2, cache["dense2"])
    dfeats = ops.dropout_backward(dh, cache["drop1"])
    if dfeats_extra is not None:
        dfeats = dfeats + dfeats_extra
    grads.update(backward_features(params, dfeats, cache))
    return grads


# ---------------------------------------------------------------------------
# persistence (checkpoints share the dataset container conventions)
# ---------------------------------------------------------------------------

def save_params(params: ModelParams, path: str | Path, extra_tensors=None, meta=None) -> Path:
    spec = params.spec
    tensors = dict(params.tensors)
    if extra_tensors:
        tensors.update(extra_tensors)
    full_meta = {
        "spec": {
            "in_channels": spec.in_channels, "window_len": spec.window_len,
            "n_blocks": spec.n_blocks, "filters": spec.filters, "kernel": spec.kernel,
            "dense_units": spec.dense_units, "n_classes": spec.n_classes,
        },
        "param_names": list(params.tensors),  # preserves construction order on reload
    }
    if meta:
        full_meta.update(meta)
    return save_container(path, "checkpoint", tensors, full_meta)


def load_params(path: str | Path) -> tuple[ModelParams, dict[str, np.ndarray], dict]:
    """Load a checkpoint; returns (params, extra_tensors, meta)."""
    tensors, meta = load_container(path, kind="checkpoint")
    spec = ModelSpec(**meta["spec"])
    names = list(meta["param_names"])
    params = ModelParams(spec, {k: tensors[k] for k in names})
    extras = {k: v for k, v in tensors.items() if k not in set(names)}
    return params, extras, meta

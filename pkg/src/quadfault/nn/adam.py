"""Adam optimizer with bias correction, one moment pair per named tensor."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GradientError
from .model import ModelParams


@dataclass
class AdamState:
    """First/second moment tensors shaped like the parameters, plus the step count."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> "AdamState":
        return cls(m={k: np.zeros_like(t) for k, t in params.tensors.items()},
                   v={k: np.zeros_like(t) for k, t in params.tensors.items()},
                   step=0, beta1=beta1, beta2=beta2, eps=eps)

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for k in self.m:
            out[f"adam_m_{k}"] = self.m[k]
            out[f"adam_v_{k}"] = self.v[k]
        return out


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState,
              lr: float) -> None:
    """One in-place bias-corrected Adam update on every named tensor."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, tensor in params.tensors.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient in layer '{name}' at step {t}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        tensor -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(tensor.dtype)

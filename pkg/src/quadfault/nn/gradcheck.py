"""Finite-difference verification of the analytic backward passes.

Central differences on probed parameter entries, for the cross-entropy loss,
the linear-MMD loss and their weighted combination. Dropout is disabled so
both loss evaluations are deterministic.

Two modes: "float32" probes the production 32-bit parameters with step 1e-3
(the perturbed losses are evaluated through a float64 cast so the difference
is not drowned in single-precision rounding); "float64" casts the whole model
to 64-bit and probes with step 1e-6 at a 100x tighter tolerance.

Probe hygiene: candidates are ordered by analytic gradient magnitude (a wrong
backward formula shows up first on the large entries), entries too small to
carry relative signal are skipped, and a probe is discarded when its +h/-h
evaluations disagree on any relu mask or pooling argmax, because the loss is
not differentiable across those kinks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GradientError
from . import ops
from .model import ModelParams, backward_features, forward_features, model_backward, model_forward

MODES = {
    # mode: (step, tolerance, negligible-gradient floor, floor relative to max |g|)
    "float32": (1e-3, 1e-2, 1e-4, 1e-2),
    "float64": (1e-6, 1e-4, 1e-8, 1e-6),
}


@dataclass
class GradCheckReport:
    loss_kind: str
    mode: str
    tolerance: float
    step: float
    max_rel_error: float = 0.0
    worst_layer: str = ""
    per_layer: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def _analytic_grads(params: ModelParams, loss_kind: str, x_ce, labels, x_src, x_tgt,
                    lambda_mmd: float) -> dict[str, np.ndarray]:
    grads = {name: np.zeros(t.shape, dtype=np.float64) for name, t in params.tensors.items()}
    if loss_kind in ("ce", "combined"):
        logits, _, cache = model_forward(params, x_ce, train=False)
        _, dlogits = ops.softmax_cross_entropy(logits, labels)
        for name, g in model_backward(params, dlogits, cache).items():
            grads[name] += g
    if loss_kind in ("mmd", "combined"):
        scale = lambda_mmd if loss_kind == "combined" else 1.0
        fs, cache_s = forward_features(params, x_src)
        ft, cache_t = forward_features(params, x_tgt)
        _, ds, dt = ops.mmd_linear(fs, ft)
        for name, g in backward_features(params, scale * ds, cache_s).items():
            grads[name] += g
        for name, g in backward_features(params, scale * dt, cache_t).items():
            grads[name] += g
    return grads


def _activation_signature(cache) -> list[np.ndarray]:
    sig = []
    for conv_cache, relu_cache, pool_cache in cache["blocks"]:
        sig.append(relu_cache > 0)
        if pool_cache is not None:
            sig.append(pool_cache[1])
    sig.append(cache["relu1"] > 0)
    if "relu2" in cache:
        sig.append(cache["relu2"] > 0)
    return sig


def _loss_and_sig(params: ModelParams, loss_kind: str, x_ce, labels, x_src, x_tgt,
                  lambda_mmd: float):
    total = 0.0
    sig: list[np.ndarray] = []
    if loss_kind in ("ce", "combined"):
        logits, _, cache = model_forward(params, x_ce, train=False)
        total += ops.cross_entropy(ops.softmax(logits), labels)
        sig.extend(_activation_signature(cache))
    if loss_kind in ("mmd", "combined"):
        scale = lambda_mmd if loss_kind == "combined" else 1.0
        fs, cache_s = forward_features(params, x_src)
        ft, cache_t = forward_features(params, x_tgt)
        total += scale * ops.mmd_linear(fs, ft)[0]
        sig.extend(_activation_signature(cache_s))
        sig.extend(_activation_signature(cache_t))
    return total, sig


def _same_sig(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def _cast(params: ModelParams, dtype) -> ModelParams:
    return ModelParams(params.spec, {k: t.astype(dtype) for k, t in params.tensors.items()})


def grad_check(params: ModelParams, x_ce: np.ndarray, labels: np.ndarray,
               x_src: np.ndarray | None = None, x_tgt: np.ndarray | None = None,
               loss_kind: str = "ce", lambda_mmd: float = 1.0, mode: str = "float32",
               probes_per_tensor: int = 4, seed: int = 0, raise_on_fail: bool = True,
               corrupt_layer: str | None = None) -> GradCheckReport:
    """Compare analytic gradients with central differences on probed entries.

    corrupt_layer deliberately doubles that tensor's analytic gradient before
    comparing; it exists so tests can confirm the check actually fails.
    """
    if loss_kind not in ("ce", "mmd", "combined"):
        raise GradientError(f"unknown loss kind {loss_kind!r}")
    if loss_kind in ("mmd", "combined") and (x_src is None or x_tgt is None):
        raise GradientError("mmd-based checks need x_src and x_tgt")
    if mode not in MODES:
        raise GradientError(f"unknown grad-check mode {mode!r}")
    step, tolerance, floor, rel_floor = MODES[mode]

    x_ce = np.asarray(x_ce)
    x_src = None if x_src is None else np.asarray(x_src)
    x_tgt = None if x_tgt is None else np.asarray(x_tgt)
    if mode == "float64":
        params = _cast(params, np.float64)
        x_ce = x_ce.astype(np.float64)
        x_src = None if x_src is None else x_src.astype(np.float64)
        x_tgt = None if x_tgt is None else x_tgt.astype(np.float64)

    rng = np.random.default_rng(seed)
    grads = _analytic_grads(params, loss_kind, x_ce, labels, x_src, x_tgt, lambda_mmd)
    if corrupt_layer is not None:
        grads[corrupt_layer] = 2.0 * grads[corrupt_layer]

    # perturbed losses always evaluate in float64 so the difference is clean
    eval_params = _cast(params, np.float64)
    e_ce = x_ce.astype(np.float64)
    e_src = None if x_src is None else x_src.astype(np.float64)
    e_tgt = None if x_tgt is None else x_tgt.astype(np.float64)

    report = GradCheckReport(loss_kind=loss_kind, mode=mode, tolerance=tolerance, step=step)
    for name in params.tensors:
        g = grads[name].ravel()
        flat = eval_params.tensors[name].ravel()
        by_magnitude = np.argsort(-np.abs(g))
        shuffled = rng.permutation(len(flat))
        candidates = np.concatenate([by_magnitude[:2 * probes_per_tensor], shuffled])
        cutoff = max(floor, rel_floor * float(np.max(np.abs(g))))
        worst = 0.0
        probed = 0
        seen: set[int] = set()
        for idx in candidates:
            if probed >= probes_per_tensor:
                break
            idx = int(idx)
            if idx in seen or abs(g[idx]) < cutoff:
                continue
            seen.add(idx)
            old = flat[idx]
            flat[idx] = old + step
            up, sig_up = _loss_and_sig(eval_params, loss_kind, e_ce, labels, e_src, e_tgt,
                                       lambda_mmd)
            flat[idx] = old - step
            down, sig_down = _loss_and_sig(eval_params, loss_kind, e_ce, labels, e_src, e_tgt,
                                           lambda_mmd)
            flat[idx] = old
            if not _same_sig(sig_up, sig_down):
                continue  # perturbation crossed a relu kink or pooling tie
            numeric = (up - down) / (2.0 * step)
            rel = abs(numeric - g[idx]) / max(abs(numeric) + abs(g[idx]), 1e-12)
            worst = max(worst, rel)
            probed += 1
        report.per_layer[name] = worst
        if worst > report.max_rel_error:
            report.max_rel_error = worst
            report.worst_layer = name
    if raise_on_fail and not report.passed:
        raise GradientError(
            f"gradient check failed at layer '{report.worst_layer}' "
            f"({loss_kind} loss, {mode}): relative error {report.max_rel_error:.3e} "
            f"exceeds {tolerance:.1e}"
        )
    return report

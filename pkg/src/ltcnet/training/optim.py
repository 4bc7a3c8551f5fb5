"""Adam and plain SGD over dictionaries of parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ltcnet.errors import ParameterError

TAU_FLOOR = 1e-6


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    skipped: int = 0


def _clamp_tau(params):
    if "tau" in params:
        params["tau"] = np.maximum(params["tau"], TAU_FLOOR)
    return params


def adam_update(params: dict, grads: dict, step_index: int, state: AdamState,
                config: AdamConfig = AdamConfig()) -> tuple[dict, AdamState, bool]:
    """One bias-corrected Adam step.

    Returns ``(new_params, state, applied)``. Non-finite gradients leave
    parameters and moments untouched and return ``applied=False``. ``tau``
    is clamped to at least 1e-6 afterwards.
    """
    if step_index < 1:
        raise ParameterError("step_index starts at 1")
    if not all(np.all(np.isfinite(grads[k])) for k in params if k in grads):
        state.skipped += 1
        return params, state, False
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1**step_index
    bc2 = 1.0 - b2**step_index
    out = {}
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            out[k] = p
            continue
        m = state.m.get(k, np.zeros_like(p))
        v = state.v.get(k, np.zeros_like(p))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[k], state.v[k] = m, v
        out[k] = p - config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.eps)
    state.step = step_index
    return _clamp_tau(out), state, True


def sgd_update(params: dict, grads: dict, learning_rate: float) -> dict:
    out = {k: (p - learning_rate * grads[k]) if k in grads else p for k, p in params.items()}
    return _clamp_tau(out)


def clip_global_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if np.isfinite(norm) and norm > max_norm:
        scale = max_norm / norm
        return {k: g * scale for k, g in grads.items()}, norm
    return grads, norm

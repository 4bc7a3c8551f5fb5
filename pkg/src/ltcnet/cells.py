"""Derivative fields of the three continuous-time cells.

All cells share one per-neuron nonlinearity

    f(x, I) = act(x @ gamma_r + I @ gamma + mu)

and differ in how the state enters the derivative:

* neural ODE: ``dx/dt = f``
* CT-RNN:     ``dx/dt = -x / tau + f``
* LTC:        ``dx/dt = -(1 / tau + f) * x + f * A``

States may carry leading batch dimensions; parameters never do.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ltcnet.errors import ParameterError, SingularityError

CELL_KINDS = ("neural-ode", "ct-rnn", "ltc")


def _hard_tanh(z):
    return np.clip(z, -1.0, 1.0)


def _relu(z):
    return np.maximum(z, 0.0)


def _d_tanh(z, a):
    return 1.0 - a * a


def _d_sigmoid(z, a):
    return a * (1.0 - a)


def _d_relu(z, a):
    return (z > 0.0).astype(np.float64)


def _d_hard_tanh(z, a):
    return (np.abs(z) < 1.0).astype(np.float64)


# name -> (activation, derivative given (pre-activation, activation))
ACTIVATIONS = {
    "tanh": (np.tanh, _d_tanh),
    "sigmoid": (expit, _d_sigmoid),
    "relu": (_relu, _d_relu),
    "hard-tanh": (_hard_tanh, _d_hard_tanh),
}

PARAM_NAMES = ("tau", "gamma", "gamma_r", "mu", "a_vec")


def _as_float(a, name):
    arr = np.array(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


@dataclass(eq=False)
class CellParams:
    """Learnable parameters of one cell layer.

    ``gamma`` is ``(m, n)`` and ``gamma_r`` is ``(n, n)``; ``tau``, ``mu`` and
    ``a_vec`` have one entry per neuron. A neural ODE ignores ``tau`` and
    ``a_vec`` but still carries them so every kind shares one layout.
    """

    tau: np.ndarray
    gamma: np.ndarray
    gamma_r: np.ndarray
    mu: np.ndarray
    a_vec: np.ndarray
    activation: str = "tanh"
    _checked: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        self.tau = _as_float(self.tau, "tau")
        self.gamma = _as_float(self.gamma, "gamma")
        self.gamma_r = _as_float(self.gamma_r, "gamma_r")
        self.mu = _as_float(self.mu, "mu")
        self.a_vec = _as_float(self.a_vec, "a_vec")
        if self.activation not in ACTIVATIONS:
            raise ParameterError(
                f"unknown activation {self.activation!r}; expected one of {sorted(ACTIVATIONS)}"
            )
        n = self.mu.shape[0] if self.mu.ndim == 1 else -1
        if n < 1:
            raise ParameterError(f"mu must be a non-empty vector, got shape {self.mu.shape}")
        if self.gamma.ndim != 2 or self.gamma.shape[1] != n:
            raise ParameterError(f"gamma must be (m, {n}), got {self.gamma.shape}")
        if self.gamma_r.shape != (n, n):
            raise ParameterError(f"gamma_r must be ({n}, {n}), got {self.gamma_r.shape}")
        for name in ("tau", "a_vec"):
            if getattr(self, name).shape != (n,):
                raise ParameterError(f"{name} must have shape ({n},), got {getattr(self, name).shape}")
        if self._checked and np.any(self.tau <= 0):
            i = int(np.argmin(self.tau))
            raise ParameterError(f"tau must be strictly positive (tau[{i}] = {self.tau[i]})")

    @classmethod
    def unchecked(cls, **kwargs) -> "CellParams":
        """Build parameters without the ``tau > 0`` check (negative controls only)."""
        return cls(**kwargs, _checked=False)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def m(self) -> int:
        return self.gamma.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def with_arrays(self, arrays: dict[str, np.ndarray]) -> "CellParams":
        merged = {**self.arrays(), **arrays}
        return CellParams(**{k: np.array(v) for k, v in merged.items()}, activation=self.activation,
                          _checked=self._checked)

    def copy(self) -> "CellParams":
        return self.with_arrays({})


def pre_activation(x, inputs, params: CellParams):
    x = np.asarray(x, dtype=np.float64)
    inputs = np.asarray(inputs, dtype=np.float64)
    if x.shape[-1] != params.n:
        raise ParameterError(f"state has {x.shape[-1]} entries, cell has {params.n} neurons")
    if inputs.shape[-1] != params.m:
        raise ParameterError(f"input has {inputs.shape[-1]} entries, cell expects {params.m}")
    return x @ params.gamma_r + inputs @ params.gamma + params.mu


def neural_net_f(x, inputs, params: CellParams) -> np.ndarray:
    """The shared nonlinearity ``act(x @ gamma_r + I @ gamma + mu)``."""
    return ACTIVATIONS[params.activation][0](pre_activation(x, inputs, params))


def _require_positive_tau(params):
    if params._checked or np.all(params.tau > 0):
        return
    i = int(np.argmin(params.tau))
    raise ParameterError(f"tau must be strictly positive (tau[{i}] = {params.tau[i]})")


def node_derivative(x, inputs, params: CellParams) -> np.ndarray:
    return neural_net_f(x, inputs, params)


def ctrnn_derivative(x, inputs, params: CellParams) -> np.ndarray:
    _require_positive_tau(params)
    return -np.asarray(x, dtype=np.float64) / params.tau + neural_net_f(x, inputs, params)


def ltc_derivative(x, inputs, params: CellParams) -> np.ndarray:
    _require_positive_tau(params)
    x = np.asarray(x, dtype=np.float64)
    f = neural_net_f(x, inputs, params)
    return -(1.0 / params.tau + f) * x + f * params.a_vec


_DERIVATIVES = {
    "neural-ode": node_derivative,
    "ct-rnn": ctrnn_derivative,
    "ltc": ltc_derivative,
}


def derivative_fn(kind: str):
    """Return the derivative function ``(x, inputs, params) -> dx/dt`` of a cell kind."""
    try:
        return _DERIVATIVES[kind]
    except KeyError:
        raise ParameterError(f"unknown cell kind {kind!r}; expected one of {CELL_KINDS}") from None


def derivative(kind: str, x, inputs, params: CellParams) -> np.ndarray:
    return derivative_fn(kind)(x, inputs, params)


def instantaneous_time_constant(x, inputs, params: CellParams) -> np.ndarray:
    """Effective LTC time constant ``tau / (1 + tau * f)``.

    Raises SingularityError when ``1 + tau * f <= 0`` somewhere, which can
    only happen for signed activations.
    """
    f = neural_net_f(x, inputs, params)
    denom = 1.0 + params.tau * f
    bad = np.flatnonzero(np.ravel(denom <= 0))
    if bad.size:
        idx = np.unravel_index(bad[0], denom.shape)
        raise SingularityError(
            f"1 + tau*f = {denom[idx]:.6g} <= 0 at coordinate {idx}", index=idx
        )
    return params.tau / denom

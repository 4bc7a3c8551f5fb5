"""Integrators for the cell derivative fields.

Fixed-step explicit Euler and classical RK4 work with any cell. ``dopri45``
is the Dormand-Prince 5(4) embedded pair with PI step-size control. The
fused step is the closed-form semi-implicit Euler update that only exists
for the LTC cell: linear occurrences of the state are taken at the new time
point, the nonlinearity at the old one, giving

    x' = (x + dt * f * A) / (1 + dt * (1 / tau + f))
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ltcnet.cells import CellParams, derivative_fn, neural_net_f
from ltcnet.errors import ContractError, OverflowStateError, ParameterError, SingularityError, StiffnessError

SOLVER_KINDS = ("euler", "rk4", "dopri45", "fused")
FIXED_STEP = ("euler", "rk4", "fused")

DEFAULT_SUBSTEPS = 6


@dataclass(frozen=True)
class Solver:
    """Solver choice; tolerances are only used by ``dopri45``."""

    kind: str = "fused"
    rtol: float = 1e-3
    atol: float = 1e-6

    def __post_init__(self):
        if self.kind not in SOLVER_KINDS:
            raise ParameterError(f"unknown solver {self.kind!r}; expected one of {SOLVER_KINDS}")
        if not (self.rtol > 0 and self.atol > 0):
            raise ParameterError("solver tolerances must be positive")

    @property
    def adaptive(self) -> bool:
        return self.kind == "dopri45"


def as_solver(solver) -> Solver:
    return solver if isinstance(solver, Solver) else Solver(solver)


def _check_finite(x, time_index=None):
    if not np.all(np.isfinite(x)):
        idx = int(np.flatnonzero(~np.isfinite(np.ravel(x)))[0])
        where = f" at time index {time_index}" if time_index is not None else ""
        raise OverflowStateError(f"state overflowed at coordinate {idx}{where}", index=idx,
                                 time_index=time_index)
    return x


def euler_step(derivative_fn: Callable, x, inputs, dt: float) -> np.ndarray:
    """One explicit Euler step ``x + dt * F(x, I)``."""
    if dt < 0:
        raise ParameterError("dt must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    return _check_finite(x + dt * derivative_fn(x, inputs))


def rk4_step(derivative_fn: Callable, x, inputs, dt: float) -> np.ndarray:
    """Classical four-stage Runge-Kutta step with the input held fixed."""
    if dt < 0:
        raise ParameterError("dt must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    k1 = derivative_fn(x, inputs)
    k2 = derivative_fn(x + 0.5 * dt * k1, inputs)
    k3 = derivative_fn(x + 0.5 * dt * k2, inputs)
    k4 = derivative_fn(x + dt * k3, inputs)
    return _check_finite(x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def fused_step(x, inputs, dt: float, params: CellParams) -> np.ndarray:
    """Semi-implicit LTC update; ``dt = 0`` returns ``x`` unchanged."""
    if dt < 0:
        raise ParameterError("dt must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    f = neural_net_f(x, inputs, params)
    denom = 1.0 + dt * (1.0 / params.tau + f)
    if np.any(denom <= 1e-9):
        idx = int(np.flatnonzero(np.ravel(denom <= 1e-9))[0])
        raise SingularityError(f"fused-step denominator {np.ravel(denom)[idx]:.3g} <= 1e-9 "
                               f"at coordinate {idx}", index=idx)
    return _check_finite((x + dt * f * params.a_vec) / denom)


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

_SAFETY = 0.9
_FAC_MIN, _FAC_MAX = 0.2, 5.0
_BETA = 0.04
_ALPHA = 0.2 - 0.75 * _BETA
_MIN_STEP_FRACTION = 1e-12


@dataclass
class AdaptiveState:
    """Step-size memory carried between consecutive adaptive integrations."""

    h: float | None = None
    err_prev: float = 1e-4
    accepted: int = 0
    rejected: int = 0


def _dopri45(fn, x0, input_at, t0, t1, rtol, atol, state: AdaptiveState, min_step):
    x = np.asarray(x0, dtype=np.float64).copy()
    span = t1 - t0
    if span == 0:
        return x
    t = t0
    h = state.h if state.h is not None else span / 100.0
    k = np.empty((7,) + x.shape)
    k[0] = fn(x, input_at(t))
    while True:
        last = t + h >= t1 - 1e-12 * span
        h_try = t1 - t if last else h
        for s in range(1, 7):
            xs = x + h_try * np.tensordot(_A[s], k[:s], axes=1)
            k[s] = fn(xs, input_at(t + _C[s] * h_try))
        # the last stage is evaluated at the 5th-order solution (FSAL)
        err_vec = h_try * np.tensordot(_E, k, axes=1)
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(xs))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2))) if err_vec.size else 0.0
        if not np.isfinite(err):
            err = np.inf
        if err <= 1.0:
            err = max(err, 1e-10)
            fac = _SAFETY * err ** -_ALPHA * state.err_prev ** _BETA
            fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            state.err_prev = err
            state.accepted += 1
            x = _check_finite(xs)
            if last:
                # a step clipped to the interval end keeps the free proposal
                state.h = max(h, h_try * fac) if h_try < h else h_try * fac
                return x
            t = t + h_try
            k[0] = k[6]
            h = h_try * fac
        else:
            state.rejected += 1
            fac = _SAFETY * err ** -_ALPHA if np.isfinite(err) else _FAC_MIN
            h = h_try * max(_FAC_MIN, min(1.0, fac))
            if h < min_step:
                raise StiffnessError(
                    f"dopri45 step size {h:.3g} fell below {min_step:.3g} at t={t:.6g}: the "
                    "system is stiff and explicit Runge-Kutta would need an exponential number "
                    "of discretization steps; use the fused solver for LTC cells"
                )


def _constant_input(inputs):
    if callable(inputs):
        return inputs
    u = np.asarray(inputs, dtype=np.float64)
    return lambda t: u


def dopri45_integrate(derivative_fn: Callable, x0, inputs, t_span, rtol: float = 1e-6,
                      atol: float = 1e-6) -> tuple[np.ndarray, int]:
    """Integrate ``dx/dt = F(x, I(t))`` over ``t_span`` with Dormand-Prince 5(4).

    ``inputs`` is either a fixed vector or a callable ``t -> I(t)``. Returns
    the final state and the number of accepted steps.
    """
    if not (rtol > 0 and atol > 0):
        raise ParameterError("rtol and atol must be positive")
    t0, t1 = (float(v) for v in t_span)
    if not (np.isfinite(t0) and np.isfinite(t1)) or t1 < t0:
        raise ParameterError(f"t_span must be finite and ordered, got {t_span}")
    state = AdaptiveState()
    x = _dopri45(derivative_fn, x0, _constant_input(inputs), t0, t1, rtol, atol, state,
                 _MIN_STEP_FRACTION * (t1 - t0))
    return x, state.accepted


@dataclass
class Trajectory:
    """States visited by ``simulate``.

    ``states[0]`` is the initial state and ``states[i * L]`` the state after
    input sample ``i`` (1-based). ``steps_taken[i]`` counts solver steps
    spent on sample ``i``.
    """

    times: np.ndarray
    states: np.ndarray
    steps_taken: np.ndarray
    substeps: int = DEFAULT_SUBSTEPS
    rejected_steps: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def sample_states(self) -> np.ndarray:
        """Initial state followed by the state at the end of every sample."""
        return self.states[:: self.substeps]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def make_stepper(cell_kind: str, params: CellParams, solver):
    """Return ``step(x, u, dt)`` for a fixed-step solver."""
    solver = as_solver(solver)
    if solver.kind == "fused":
        if cell_kind != "ltc":
            raise ContractError(f"the fused solver only applies to LTC cells, not {cell_kind!r}")
        return lambda x, u, dt: fused_step(x, u, dt, params)
    deriv = derivative_fn(cell_kind)
    fn = lambda x, u: deriv(x, u, params)  # noqa: E731
    if solver.kind == "euler":
        return lambda x, u, dt: euler_step(fn, x, u, dt)
    if solver.kind == "rk4":
        return lambda x, u, dt: rk4_step(fn, x, u, dt)
    raise ContractError("dopri45 has no single-step form")


def simulate(cell_kind: str, params: CellParams, solver, x0, inputs, dt: float,
             L: int = DEFAULT_SUBSTEPS) -> Trajectory:
    """Unroll a cell over an input sequence, ``L`` sub-steps of ``dt`` per sample.

    Each sub-step starts from the previous sub-step's output and the input is
    held constant within a sample. With ``dopri45`` every sub-step is an
    adaptive integration over ``dt`` whose step size carries over to the next.
    """
    solver = as_solver(solver)
    if L < 1:
        raise ParameterError("L must be at least 1")
    if not dt > 0:
        raise ParameterError("dt must be positive")
    inputs = np.asarray(inputs, dtype=np.float64).reshape(-1, params.m)
    x = np.asarray(x0, dtype=np.float64).copy()
    n_samples = inputs.shape[0]
    states = np.empty((n_samples * L + 1,) + x.shape)
    states[0] = x
    steps = np.zeros(n_samples, dtype=np.int64)
    rejected = 0

    if solver.adaptive:
        deriv = derivative_fn(cell_kind)
        fn = lambda x, u: deriv(x, u, params)  # noqa: E731
        astate = AdaptiveState()
        for i in range(n_samples):
            u = inputs[i]
            before = astate.accepted
            for j in range(L):
                t0 = (i * L + j) * dt
                try:
                    x = _dopri45(fn, x, lambda t, u=u: u, t0, t0 + dt, solver.rtol, solver.atol,
                                 astate, _MIN_STEP_FRACTION * dt)
                except (StiffnessError, OverflowStateError) as exc:
                    raise type(exc)(f"sample {i}: {exc}") from exc
                states[i * L + j + 1] = x
            steps[i] = astate.accepted - before
        rejected = astate.rejected
    else:
        step = make_stepper(cell_kind, params, solver)
        for i in range(n_samples):
            u = inputs[i]
            for j in range(L):
                try:
                    x = step(x, u, dt)
                except OverflowStateError as exc:
                    raise OverflowStateError(f"sample {i}: {exc}", index=exc.index,
                                             time_index=i) from exc
                except SingularityError as exc:
                    raise SingularityError(f"sample {i}: {exc}", index=exc.index) from exc
                states[i * L + j + 1] = x
            steps[i] = L
    times = dt * np.arange(n_samples * L + 1)
    return Trajectory(times, states, steps, substeps=L, rejected_steps=rejected)


def sample_hold_input(inputs, dt: float, interpolate: bool = True):
    """Turn a sampled sequence into a function of time.

    Sample ``i`` sits at ``t = i * dt``. With ``interpolate`` the signal is
    piecewise linear between samples, otherwise it is held constant.
    """
    u = np.asarray(inputs, dtype=np.float64)
    n = u.shape[0]
    if not interpolate or n == 1:
        return lambda t: u[min(max(int(t / dt + 1e-9), 0), n - 1)]

    def at(t):
        s = min(max(t / dt, 0.0), n - 1.0)
        i = min(int(s), n - 2)
        w = s - i
        return (1.0 - w) * u[i] + w * u[i + 1]

    return at


@dataclass
class DepthMeasurement:
    """Per-trial computational depths plus the trials lost to stiffness."""

    depths: np.ndarray
    failures: int = 0
    messages: list = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.depths)) if self.depths.size else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.depths)) if self.depths.size else float("nan")


def measure_depth(cell_kind: str, params, inputs, rtol: float = 1e-3, atol: float = 1e-6,
                  trials: int = 1, dt: float = 0.01, solver="dopri45", x0=None) -> DepthMeasurement:
    """Adaptive steps per input sample, one value per parameter draw.

    The whole input span is integrated in one adaptive pass, with the input
    interpolated linearly between samples, so a slowly varying system may
    need fewer than one step per sample. ``params`` is a CellParams, a
    sequence of them, or a callable ``trial_index -> CellParams``.
    """
    solver = as_solver(solver)
    if not solver.adaptive:
        raise ContractError(
            f"computational depth is defined for adaptive solvers only, got {solver.kind!r}"
        )
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    inputs = np.asarray(inputs, dtype=np.float64)
    n_samples = inputs.shape[0]
    if n_samples < 2:
        raise ParameterError("need at least two input samples")
    span = (n_samples - 1) * dt
    input_at = sample_hold_input(inputs, dt)
    deriv = derivative_fn(cell_kind)

    depths, failures, messages = [], 0, []
    for trial in range(trials):
        if callable(params):
            p = params(trial)
        elif isinstance(params, CellParams):
            p = params
        else:
            p = params[trial]
        start = np.zeros(p.n) if x0 is None else np.asarray(x0, dtype=np.float64)
        state = AdaptiveState()
        try:
            _dopri45(lambda x, u: deriv(x, u, p), start, input_at, 0.0, span, rtol, atol,
                     state, _MIN_STEP_FRACTION * span)
        except (StiffnessError, OverflowStateError) as exc:
            failures += 1
            messages.append(f"trial {trial}: {exc}")
            continue
        depths.append(state.accepted / (n_samples - 1))
    return DepthMeasurement(np.array(depths), failures, messages)


def computational_depth(cell_kind: str, params, inputs, rtol: float = 1e-3, atol: float = 1e-6,
                        trials: int = 1, dt: float = 0.01, solver="dopri45") -> tuple[float, float]:
    """Mean and standard deviation of adaptive steps per input sample."""
    m = measure_depth(cell_kind, params, inputs, rtol, atol, trials, dt, solver)
    return m.mean, m.std

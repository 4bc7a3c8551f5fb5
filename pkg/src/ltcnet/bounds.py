"""Empirical checks of the LTC time-constant and state bounds.

For a sigmoid LTC every neuron satisfies

    tau / (1 + tau * W) <= tau_sys <= tau        (W = 1 per neuron)
    min(0, A) <= x(t) <= max(0, A)

``fuzz_verify`` drives random sigmoid LTCs with very large inputs and
records every visited value that leaves these intervals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ltcnet.cells import CellParams, instantaneous_time_constant, neural_net_f
from ltcnet.errors import ContractError, LtcError, ParameterError
from ltcnet.numcore import RNG_ALGORITHM, make_rng
from ltcnet.solvers import as_solver, simulate

SLACK = 1e-9
MAX_RECORDED = 1000


def _require_sigmoid(params: CellParams):
    if params.activation != "sigmoid":
        raise ContractError(
            f"the bounds hold for sigmoid activations only (f in (0, 1)); got {params.activation!r}"
        )


def tau_bounds(params: CellParams, w: float = 1.0) -> np.ndarray:
    """Per-neuron ``(lo, hi)`` interval of the instantaneous time constant, shape ``(n, 2)``.

    ``w`` is the per-neuron upper bound of ``f``; ``w = 0`` collapses the
    interval to ``(tau, tau)``.
    """
    _require_sigmoid(params)
    tau = params.tau
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = tau / (1.0 + tau * w)
    return np.stack([lo, tau], axis=1)


def state_bounds(params: CellParams) -> np.ndarray:
    """Per-neuron ``(min(0, A), max(0, A))`` box, shape ``(n, 2)``."""
    _require_sigmoid(params)
    a = params.a_vec
    return np.stack([np.minimum(0.0, a), np.maximum(0.0, a)], axis=1)


@dataclass
class Violation:
    check: str  # "state" or "tau"
    trial: int
    neuron: int
    time: int
    value: float
    margin: float


@dataclass
class BoundsReport:
    samples_tested: int = 0
    trials: int = 0
    violation_count: int = 0
    violations: list = field(default_factory=list)
    max_input_magnitude: float = 0.0
    solver_failures: list = field(default_factory=list)
    outside_hypotheses_trials: int = 0
    tau_intervals: list = field(default_factory=list)
    state_intervals: list = field(default_factory=list)
    rng_algorithm: str = RNG_ALGORITHM

    @property
    def passed(self) -> bool:
        return self.violation_count == 0

    def merge(self, other: "BoundsReport") -> "BoundsReport":
        room = MAX_RECORDED - len(self.violations)
        return BoundsReport(
            samples_tested=self.samples_tested + other.samples_tested,
            trials=self.trials + other.trials,
            violation_count=self.violation_count + other.violation_count,
            violations=self.violations + other.violations[:max(room, 0)],
            max_input_magnitude=max(self.max_input_magnitude, other.max_input_magnitude),
            solver_failures=self.solver_failures + other.solver_failures,
            outside_hypotheses_trials=self.outside_hypotheses_trials + other.outside_hypotheses_trials,
            tau_intervals=self.tau_intervals + other.tau_intervals,
            state_intervals=self.state_intervals + other.state_intervals,
        )

    def to_dict(self, include_intervals: bool = False) -> dict:
        d = {
            "passed": self.passed,
            "trials": self.trials,
            "samples_tested": self.samples_tested,
            "violation_count": self.violation_count,
            "violations": [v.__dict__ for v in self.violations],
            "max_input_magnitude": self.max_input_magnitude,
            "solver_failures": self.solver_failures,
            "outside_hypotheses_trials": self.outside_hypotheses_trials,
            "w_convention": 1.0,
            "rng_algorithm": self.rng_algorithm,
        }
        if include_intervals:
            d["tau_intervals"] = [np.asarray(t).tolist() for t in self.tau_intervals]
            d["state_intervals"] = [np.asarray(s).tolist() for s in self.state_intervals]
        return d


def random_sigmoid_ltc(rng: np.random.Generator, max_neurons: int = 16, input_dim: int = 2,
                       weight_scale: float = 1.0) -> CellParams:
    """Random sigmoid LTC with 1..max_neurons neurons and signed weights."""
    n = int(rng.integers(1, max_neurons + 1))
    return CellParams(
        tau=rng.uniform(0.05, 5.0, n),
        gamma=rng.normal(0.0, weight_scale, (input_dim, n)),
        gamma_r=rng.normal(0.0, weight_scale, (n, n)),
        mu=rng.normal(0.0, 1.0, n),
        a_vec=rng.normal(0.0, 2.0, n),
        activation="sigmoid",
    )


def random_inputs(rng: np.random.Generator, steps: int, dim: int, amplitude: float) -> np.ndarray:
    """Inputs mixing uniform noise, sign flips and bursts at full ``amplitude``."""
    u = rng.uniform(-amplitude, amplitude, (steps, dim))
    bursts = rng.random((steps, dim)) < 0.1
    u[bursts] = amplitude * np.sign(u[bursts])
    return u


def check_trajectory(params: CellParams, states: np.ndarray, inputs: np.ndarray, L: int,
                     trial: int = 0, slack: float = SLACK) -> BoundsReport:
    """Check visited states and their instantaneous time constants against the bounds.

    ``states[j]`` for ``j >= 1`` is the state after sub-step ``j``; the time
    constant is evaluated at the state entering each sub-step with the input
    of its sample.
    """
    report = BoundsReport(trials=1, samples_tested=states.shape[0])
    sbox = state_bounds(params)
    tbox = tau_bounds(params)
    recorded = report.violations

    def record(check, mask, values, lo, hi):
        report.violation_count += int(np.count_nonzero(mask))
        for t, i in zip(*np.nonzero(mask)):
            if len(recorded) >= MAX_RECORDED:
                break
            v = values[t, i]
            margin = (lo[i] - v) if v < lo[i] else (v - hi[i])
            if not np.isfinite(margin):
                margin = float("inf")
            recorded.append(Violation(check, trial, int(i), int(t), float(v), float(margin)))

    with np.errstate(invalid="ignore", over="ignore"):
        lo, hi = sbox[:, 0], sbox[:, 1]
        bad = ~((states >= lo - slack) & (states <= hi + slack))
        record("state", bad, states, lo, hi)

        entering = states[:-1]
        per_sub = np.repeat(inputs, L, axis=0)[: entering.shape[0]]
        tau_sys = _tau_sys_unsafe(entering, per_sub, params)
        lo, hi = tbox[:, 0], tbox[:, 1]
        bad = ~((tau_sys >= lo - slack) & (tau_sys <= hi + slack))
        record("tau", bad, tau_sys, lo, hi)
    if np.any(params.gamma < 0) or np.any(params.gamma_r < 0):
        report.outside_hypotheses_trials = 1
    report.max_input_magnitude = float(np.max(np.abs(inputs))) if inputs.size else 0.0
    return report


def _tau_sys_unsafe(states, inputs, params):
    try:
        return instantaneous_time_constant(states, inputs, params)
    except LtcError:
        # singular coordinates become NaN and are reported as violations
        f = neural_net_f(states, inputs, params)
        denom = 1.0 + params.tau * f
        return np.where(denom > 0, params.tau / np.where(denom > 0, denom, 1.0), np.nan)


def fuzz_verify(param_sampler=None, input_sampler=None, n_trials: int = 1000, solver="fused",
                steps: int = 200, dt: float = 0.1, amplitude: float = 1e6, seed: int = 0,
                L: int = 1, keep_intervals: bool = False) -> BoundsReport:
    """Simulate random sigmoid LTCs under huge inputs and collect bound violations.

    ``param_sampler(rng) -> CellParams`` and ``input_sampler(rng, steps, dim)
    -> inputs`` default to :func:`random_sigmoid_ltc` and
    :func:`random_inputs` at ``amplitude``. Each trial starts from a state
    drawn uniformly inside the state box. Violations are recorded, never
    raised; solver failures are logged in the report.
    """
    solver = as_solver(solver)
    if solver.kind not in ("fused", "dopri45"):
        raise ContractError("fuzzing uses the fused or dopri45 solver; explicit Euler can overshoot")
    if n_trials < 1 or steps < 1:
        raise ParameterError("n_trials and steps must be at least 1")
    rng = make_rng(seed)
    param_sampler = param_sampler or random_sigmoid_ltc
    input_sampler = input_sampler or (lambda r, s, d: random_inputs(r, s, d, amplitude))

    total = BoundsReport()
    for trial in range(n_trials):
        params = param_sampler(rng)
        _require_sigmoid(params)
        box = np.stack([np.minimum(0.0, params.a_vec), np.maximum(0.0, params.a_vec)], axis=1)
        x0 = rng.uniform(box[:, 0], box[:, 1])
        inputs = input_sampler(rng, steps, params.m)
        try:
            traj = simulate("ltc", params, solver, x0, inputs, dt, L)
        except LtcError as exc:
            part = BoundsReport(trials=1, solver_failures=[f"trial {trial}: {exc}"])
            total = total.merge(part)
            continue
        part = check_trajectory(params, traj.states, inputs, L, trial)
        if keep_intervals:
            part.tau_intervals = [tau_bounds(params)]
            part.state_intervals = [state_bounds(params)]
        total = total.merge(part)
    return total

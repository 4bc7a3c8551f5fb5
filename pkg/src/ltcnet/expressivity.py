"""Trajectory-length laboratory.

A circle ``(sin t, cos t)`` is fed to randomly initialised continuous-time
networks; the hidden states of one layer are projected onto their top two
principal components and the arc length of that 2-D path is the
expressivity measure. Lower-bound expressions for the expected length are
evaluated with a unit big-O constant and are only meaningful relative to
each other ("relative bounds").

Random networks use weights ``N(0, sw2 / k)`` for both input and recurrent
matrices, biases ``mu ~ N(0, sb2)``, the LTC bias vector ``A ~ N(0, sb2)``
and time constants ``tau ~ U(0.5, 2)``. Layer ``d + 1`` receives the state
of layer ``d`` as its input.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ltcnet.cells import CELL_KINDS, CellParams, derivative_fn
from ltcnet.errors import LtcError, ParameterError
from ltcnet.numcore import RNG_ALGORITHM, arc_length, child_seed, gaussian_matrix, make_rng, pca_top2
from ltcnet.solvers import (
    AdaptiveState,
    Solver,
    _MIN_STEP_FRACTION,
    _dopri45,
    as_solver,
    euler_step,
    fused_step,
    measure_depth,
    rk4_step,
)

TWO_PI = 2.0 * math.pi

# name -> (number of samples, description)
PRESETS = {
    "full-circle": (629, "t in [0, 2pi] at dt = 0.01"),
    "short": (100, "100 samples at dt = 0.01, t in [0, 1)"),
}


def circular_input(num_points: int, t_end: float = TWO_PI) -> np.ndarray:
    """``num_points`` points ``(sin t, cos t)`` for ``t`` evenly spaced on ``[0, t_end]``."""
    if num_points < 2:
        raise ParameterError("num_points must be at least 2")
    t = np.linspace(0.0, t_end, num_points)
    return np.stack([np.sin(t), np.cos(t)], axis=1)


def sampled_circle(num_points: int, dt: float = 0.01, phase: float = 0.0) -> np.ndarray:
    """Circle sampled every ``dt`` starting at angle ``phase``."""
    t = phase + dt * np.arange(num_points)
    return np.stack([np.sin(t), np.cos(t)], axis=1)


def random_layer(n: int, m: int, sw2: float, sb2: float, activation: str, seed: int,
                 tau_range=(0.5, 2.0)) -> CellParams:
    """Random cell with the initialisation described in the module docstring."""
    if n < 1 or m < 1:
        raise ParameterError("layer sizes must be positive")
    rng = make_rng(child_seed(seed, 4))
    return CellParams(
        tau=rng.uniform(tau_range[0], tau_range[1], n),
        gamma=gaussian_matrix(m, n, 0.0, sw2 / n, child_seed(seed, 0)),
        gamma_r=gaussian_matrix(n, n, 0.0, sw2 / n, child_seed(seed, 1)),
        mu=gaussian_matrix(1, n, 0.0, sb2, child_seed(seed, 2))[0],
        a_vec=gaussian_matrix(1, n, 0.0, sb2, child_seed(seed, 3))[0],
        activation=activation,
    )


def random_stack(width: int, layers: int, sw2: float, sb2: float, activation: str, seed: int,
                 input_dim: int = 2) -> list[CellParams]:
    stack = []
    m = input_dim
    for d in range(layers):
        stack.append(random_layer(width, m, sw2, sb2, activation, child_seed(seed, 100 + d)))
        m = width
    return stack


def _stack_derivative(kind, stack):
    deriv = derivative_fn(kind)
    sizes = np.cumsum([0] + [p.n for p in stack])

    def fn(x, u):
        out = np.empty_like(x)
        below = u
        for p, lo, hi in zip(stack, sizes[:-1], sizes[1:]):
            out[lo:hi] = deriv(x[lo:hi], below, p)
            below = x[lo:hi]
        return out

    return fn, sizes


def run_stack(kind: str, stack: list[CellParams], inputs, dt: float, solver,
              L: int | None = None) -> tuple[list[np.ndarray], int]:
    """Simulate a layer stack; return per-layer states at every sample and the step count.

    ``states[d][i]`` is layer ``d`` after input sample ``i`` (so the first row
    already reflects the first sample). Fixed-step solvers take ``L``
    sub-steps per sample (default 6); dopri45 integrates the coupled stack
    adaptively across sample boundaries with a zero-order-hold input.
    """
    solver = as_solver(solver)
    inputs = np.asarray(inputs, dtype=np.float64)
    n_samples = inputs.shape[0]
    total = sum(p.n for p in stack)
    fn, sizes = _stack_derivative(kind, stack)
    out = np.empty((n_samples, total))
    x = np.zeros(total)
    steps = 0
    if solver.adaptive:
        st = AdaptiveState()
        for i in range(n_samples):
            u = inputs[i]
            x = _dopri45(fn, x, lambda t, u=u: u, i * dt, (i + 1) * dt, solver.rtol, solver.atol,
                         st, _MIN_STEP_FRACTION * dt)
            out[i] = x
        steps = st.accepted
    else:
        L = 6 if L is None else L
        h = dt / L
        if solver.kind == "fused" and kind != "ltc":
            raise ParameterError("the fused solver only applies to LTC cells")
        for i in range(n_samples):
            u = inputs[i]
            for _ in range(L):
                if solver.kind == "fused":
                    # every layer reads the lower layer's state from the start of the sub-step
                    new = np.empty_like(x)
                    below = u
                    for p, lo, hi in zip(stack, sizes[:-1], sizes[1:]):
                        new[lo:hi] = fused_step(x[lo:hi], below, h, p)
                        below = x[lo:hi]
                    x = new
                elif solver.kind == "euler":
                    x = euler_step(fn, x, u, h)
                else:
                    x = rk4_step(fn, x, u, h)
            out[i] = x
        steps = n_samples * L
    if not np.all(np.isfinite(out)):
        raise LtcError("network states overflowed")
    return [out[:, lo:hi] for lo, hi in zip(sizes[:-1], sizes[1:])], steps


def latent_trajectory(kind: str, stack, inputs, dt: float = 0.01, solver="dopri45",
                      layer: int = -1, L: int | None = None):
    """PCA projection of one layer's states.

    Returns ``(polyline, variance_explained, degenerate)``; ``degenerate`` is
    True when the layer never moves, in which case the polyline is all zeros.
    """
    if isinstance(stack, CellParams):
        stack = [stack]
    states, _ = run_stack(kind, stack, inputs, dt, solver, L)
    z, ve = pca_top2(states[layer])
    degenerate = bool(ve.sum() == 0.0)
    if degenerate:
        warnings.warn("layer states are constant in time; latent trajectory has zero length",
                      RuntimeWarning, stacklevel=2)
    return z, ve, degenerate


# ---------------------------------------------------------------------------
# lower-bound expressions (unit big-O constant)


def _bound_base(sw, sb, k):
    s2 = sw * sw + sb * sb
    return math.sqrt(k) / math.sqrt(s2 + k * math.sqrt(s2))


def _check_bound_args(sw, k, d, L):
    if sw < 0 or k < 1 or d < 1 or L <= 0:
        raise ParameterError("need sigma_w >= 0, k >= 1, d >= 1 and L > 0")


def bound_node(sw: float, sb: float, k: float, d: int, L: float, input_length: float) -> float:
    """Relative lower bound on neural-ODE latent trajectory length."""
    _check_bound_args(sw, k, d, L)
    return (sw * _bound_base(sw, sb, k)) ** (d * L) * input_length


def bound_ctrnn(sw: float, sb: float, k: float, d: int, L: float, input_length: float) -> float:
    """Relative lower bound for CT-RNNs; clamped to 0 when ``sw <= sb``.

    Use :func:`ctrnn_bound_clamped` to detect the clamped case.
    """
    _check_bound_args(sw, k, d, L)
    if sw - sb <= 0:
        return 0.0
    return ((sw - sb) * _bound_base(sw, sb, k)) ** (d * L) * input_length


def ctrnn_bound_clamped(sw: float, sb: float) -> bool:
    return sw - sb <= 0


def bound_ltc(sw: float, sb: float, k: float, d: int, L: float, z_norm: float, delta_t: float,
              input_length: float) -> float:
    """Relative lower bound for LTCs: the neural-ODE base times ``sw + |z| / min(dt, L)``."""
    _check_bound_args(sw, k, d, L)
    if z_norm < 0 or delta_t <= 0:
        raise ParameterError("need z_norm >= 0 and delta_t > 0")
    base = (sw * _bound_base(sw, sb, k)) ** (d * L)
    return base * (sw + z_norm / min(delta_t, L)) * input_length


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class ExpressivityConfig:
    kinds: tuple = CELL_KINDS
    activation: str = "hard-tanh"
    width: int = 100
    layers: int = 1
    sw2: float = 2.0
    sb2: float = 1.0
    trials: int = 100
    dt: float = 0.01
    preset: str = "full-circle"
    num_points: int | None = None
    solver: Solver = field(default_factory=lambda: Solver("dopri45"))
    ltc_solver: Solver | None = None
    layer: int = -1
    measure_depth: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.layers < 1 or self.trials < 1:
            raise ParameterError("width, layers and trials must be at least 1")
        if self.sw2 < 0 or self.sb2 < 0:
            raise ParameterError("variances must be non-negative")
        if self.preset not in PRESETS:
            raise ParameterError(f"unknown preset {self.preset!r}; expected one of {sorted(PRESETS)}")
        for k in self.kinds:
            if k not in CELL_KINDS:
                raise ParameterError(f"unknown cell kind {k!r}")
        self.solver = as_solver(self.solver)
        if self.ltc_solver is not None:
            self.ltc_solver = as_solver(self.ltc_solver)

    @property
    def samples(self) -> int:
        return self.num_points if self.num_points is not None else PRESETS[self.preset][0]

    def solver_for(self, kind: str) -> Solver:
        if kind == "ltc" and self.ltc_solver is not None:
            return self.ltc_solver
        return self.solver

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kinds"] = list(self.kinds)
        d["samples"] = self.samples
        return d


@dataclass
class TrialRecord:
    trial: int
    model: str
    length: float
    ve1: float
    ve2: float
    depth: float
    z_norm: float
    degenerate: bool
    low_variance_explained: bool


@dataclass
class ExpressivityReport:
    config: dict
    rows: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    polylines: dict = field(default_factory=dict)
    rng_algorithm: str = RNG_ALGORITHM

    def model_rows(self, model: str) -> list:
        return [r for r in self.rows if r.model == model]

    def mean_length(self, model: str) -> float:
        return self.summary[model]["length_mean"]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "rng_algorithm": self.rng_algorithm,
            "bound_note": "relative bound: big-O constants taken as 1",
            "failures": self.failures,
            "summary": self.summary,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(TrialRecord.__dataclass_fields__)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for r in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, n) for n in names)])
        return buf.getvalue()


def trajectory_sweep(config: ExpressivityConfig, keep_polylines: bool = False) -> ExpressivityReport:
    """Measure latent trajectory length for every model over ``config.trials`` random draws.

    All models in one trial share the same weights. Trials that fail
    (overflow, stiffness) are excluded and counted per model.
    """
    inputs = sampled_circle(config.samples, config.dt)
    input_length = arc_length(inputs)
    report = ExpressivityReport(config=config.to_dict())
    report.failures = {k: 0 for k in config.kinds}
    for trial in range(config.trials):
        seed = child_seed(config.seed, trial)
        stack = random_stack(config.width, config.layers, config.sw2, config.sb2,
                             config.activation, seed)
        for kind in config.kinds:
            try:
                states, _ = run_stack(kind, stack, inputs, config.dt, config.solver_for(kind))
            except LtcError:
                report.failures[kind] += 1
                continue
            z, ve = pca_top2(states[config.layer])
            depth = float("nan")
            if config.measure_depth:
                layer_p = stack[0] if config.layers == 1 else None
                if layer_p is not None:
                    m = measure_depth(kind, layer_p, inputs, config.solver.rtol, config.solver.atol,
                                      1, config.dt)
                    depth = m.mean
            report.rows.append(TrialRecord(
                trial=trial, model=kind, length=arc_length(z), ve1=float(ve[0]), ve2=float(ve[1]),
                depth=depth, z_norm=float(np.mean(np.linalg.norm(z, axis=1))),
                degenerate=bool(ve.sum() == 0.0), low_variance_explained=bool(ve.sum() < 0.5),
            ))
            if keep_polylines:
                report.polylines[(trial, kind)] = z
    report.summary = summarize(report.rows, config, input_length)
    return report


def depth_sweep(config: ExpressivityConfig) -> dict:
    """Computational depth of a single random layer per model, one value per trial.

    Trials draw the same first-layer weights as :func:`trajectory_sweep`
    with the same config, so the two reports describe the same networks.
    Returns ``{model: DepthMeasurement}``.
    """
    solver = config.solver
    inputs = sampled_circle(config.samples, config.dt)
    draw = lambda t: random_stack(config.width, 1, config.sw2, config.sb2,  # noqa: E731
                                  config.activation, child_seed(config.seed, t))[0]
    return {
        kind: measure_depth(kind, draw, inputs, solver.rtol, solver.atol, config.trials,
                            config.dt, solver)
        for kind in config.kinds
    }


def summarize(rows, config: ExpressivityConfig, input_length: float) -> dict:
    sw, sb = math.sqrt(config.sw2), math.sqrt(config.sb2)
    summary = {}
    for kind in config.kinds:
        rs = [r for r in rows if r.model == kind]
        if not rs:
            continue
        lengths = np.array([r.length for r in rs])
        depths = np.array([r.depth for r in rs])
        depth_mean = float(np.nanmean(depths)) if np.any(np.isfinite(depths)) else float("nan")
        entry = {
            "trials": len(rs),
            "length_mean": float(lengths.mean()),
            "length_std": float(lengths.std()),
            "ve_sum_mean": float(np.mean([r.ve1 + r.ve2 for r in rs])),
            "ve1_mean": float(np.mean([r.ve1 for r in rs])),
            "ve2_mean": float(np.mean([r.ve2 for r in rs])),
            "depth_mean": depth_mean,
            "depth_std": float(np.nanstd(depths)) if np.isfinite(depth_mean) else float("nan"),
            "z_norm_mean": float(np.mean([r.z_norm for r in rs])),
            "low_variance_explained_trials": int(sum(r.low_variance_explained for r in rs)),
        }
        if np.isfinite(depth_mean) and depth_mean > 0:
            L = depth_mean
            if kind == "neural-ode":
                b = bound_node(sw, sb, config.width, config.layers, L, input_length)
            elif kind == "ct-rnn":
                b = bound_ctrnn(sw, sb, config.width, config.layers, L, input_length)
                entry["bound_clamped"] = ctrnn_bound_clamped(sw, sb)
            else:
                b = bound_ltc(sw, sb, config.width, config.layers, L, entry["z_norm_mean"],
                              config.dt, input_length)
            entry["relative_bound"] = b
        summary[kind] = entry
    return summary

"""Forward unrolling, losses and exact reverse-mode gradients through the solver.

Every sub-step's entering state is cached during the forward pass, so the
backward pass replays the exact computational graph (memory grows as
``T * L``). Gradients are hand-derived vector-Jacobian products of the
cell derivative, the Euler/RK4 steps and the fused LTC step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ltcnet.cells import ACTIVATIONS, PARAM_NAMES, CellParams, derivative_fn
from ltcnet.errors import ContractError, ParameterError, SingularityError, UsageError
from ltcnet.solvers import as_solver

TRAINABLE_SOLVERS = ("euler", "rk4", "fused")
LOSSES = ("mse", "cross-entropy", "weighted-cross-entropy")


@dataclass(eq=False)
class OutputHead:
    """Linear readout ``y = x @ w_out + b_out``; ``w_out`` is ``(n, outputs)``."""

    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        self.w_out = np.array(self.w_out, dtype=np.float64)
        self.b_out = np.array(self.b_out, dtype=np.float64)
        if self.w_out.ndim != 2 or self.b_out.shape != (self.w_out.shape[1],):
            raise ParameterError("w_out must be (n, outputs) and b_out (outputs,)")
        if not (np.all(np.isfinite(self.w_out)) and np.all(np.isfinite(self.b_out))):
            raise ParameterError("output head contains non-finite entries")

    @classmethod
    def zeros(cls, n: int, outputs: int) -> "OutputHead":
        return cls(np.zeros((n, outputs)), np.zeros(outputs))

    def __call__(self, x):
        return x @ self.w_out + self.b_out

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w_out": self.w_out, "b_out": self.b_out}


@dataclass
class ForwardCache:
    cell_kind: str
    params: CellParams
    head: OutputHead
    solver: str
    dt: float
    L: int
    inputs: np.ndarray  # (B, T, m)
    pre_states: list  # T * L arrays of shape (B, n), the state entering each sub-step
    sample_states: np.ndarray  # (B, T, n), state after each sample
    predictions: np.ndarray  # (B, T, outputs)

    @property
    def cached_state_count(self) -> int:
        return len(self.pre_states)


def forward_unroll(cell_kind: str, params: CellParams, head: OutputHead, solver, inputs, L: int,
                   dt: float, x0=None):
    """Run a batch of sequences and read out after every sample.

    ``inputs`` is ``(batch, T, m)``. Returns ``(predictions, cache)``.
    """
    solver = as_solver(solver).kind
    if solver not in TRAINABLE_SOLVERS:
        raise ContractError(f"training supports fixed-step solvers {TRAINABLE_SOLVERS}, not {solver!r}")
    if solver == "fused" and cell_kind != "ltc":
        raise ContractError("the fused solver only applies to LTC cells")
    if L < 1 or not dt > 0:
        raise ParameterError("need L >= 1 and dt > 0")
    u_seq = np.asarray(inputs, dtype=np.float64)
    if u_seq.ndim != 3 or u_seq.shape[2] != params.m:
        raise ParameterError(f"inputs must be (batch, T, {params.m}), got {u_seq.shape}")
    B, T, _ = u_seq.shape
    x = np.zeros((B, params.n)) if x0 is None else np.broadcast_to(x0, (B, params.n)).astype(np.float64)
    deriv = derivative_fn(cell_kind)
    tau, a_vec = params.tau, params.a_vec
    act = ACTIVATIONS[params.activation][0]
    pre_states = []
    sample_states = np.empty((B, T, params.n))
    for t in range(T):
        u = u_seq[:, t]
        drive = u @ params.gamma + params.mu
        for _ in range(L):
            pre_states.append(x)
            if solver == "fused":
                f = act(x @ params.gamma_r + drive)
                denom = 1.0 + dt * (1.0 / tau + f)
                if np.any(denom <= 1e-9):
                    raise SingularityError(f"fused-step denominator <= 1e-9 at sample {t}")
                x = (x + dt * f * a_vec) / denom
            elif solver == "euler":
                x = x + dt * deriv(x, u, params)
            else:
                k1 = deriv(x, u, params)
                k2 = deriv(x + 0.5 * dt * k1, u, params)
                k3 = deriv(x + 0.5 * dt * k2, u, params)
                k4 = deriv(x + dt * k3, u, params)
                x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        sample_states[:, t] = x
    preds = head(sample_states)
    cache = ForwardCache(cell_kind, params, head, solver, dt, L, u_seq, pre_states, sample_states, preds)
    return preds, cache


# ---------------------------------------------------------------------------
# losses


def _log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _labels(targets, classes):
    y = np.asarray(targets)
    if not np.issubdtype(y.dtype, np.integer):
        if np.any(y != np.round(y)):
            raise ParameterError("classification targets must be integer labels")
        y = y.astype(np.int64)
    if np.any(y < 0) or np.any(y >= classes):
        raise ParameterError(f"label out of range [0, {classes})")
    return y


def loss_and_grad(kind: str, predictions, targets, class_weights=None, mask=None):
    """Loss summed over time and averaged over the batch, plus d loss / d predictions.

    ``mse`` averages squared errors over output dimensions at each step.
    The cross-entropy variants take logits and integer labels; the weighted
    form scales each step by the weight of its true class.
    """
    p = np.asarray(predictions, dtype=np.float64)
    if p.ndim != 3:
        raise ParameterError("predictions must be (batch, T, outputs)")
    B, T, K = p.shape
    m = np.ones((B, T)) if mask is None else np.asarray(mask, dtype=np.float64)
    if m.shape != (B, T):
        raise ParameterError("mask must be (batch, T)")
    if kind == "mse":
        y = np.asarray(targets, dtype=np.float64)
        if y.shape != p.shape:
            raise ParameterError(f"targets shape {y.shape} does not match predictions {p.shape}")
        err = p - y
        loss = float(np.sum(m * np.mean(err * err, axis=-1)) / B)
        return loss, (2.0 / (B * K)) * err * m[..., None]
    if kind in ("cross-entropy", "weighted-cross-entropy"):
        y = _labels(targets, K)
        if y.shape != (B, T):
            raise ParameterError(f"labels must be (batch, T) = {(B, T)}, got {y.shape}")
        if kind == "weighted-cross-entropy" or class_weights is not None:
            if class_weights is None:
                raise ParameterError("weighted cross-entropy needs class_weights")
            w_cls = np.asarray(class_weights, dtype=np.float64)
            if w_cls.shape != (K,) or np.any(w_cls <= 0):
                raise ParameterError("class_weights must be positive, one per class")
            w = w_cls[y] * m
        else:
            w = m
        logp = _log_softmax(p)
        picked = np.take_along_axis(logp, y[..., None], axis=-1)[..., 0]
        loss = float(-np.sum(w * picked) / B)
        grad = np.exp(logp)
        np.put_along_axis(grad, y[..., None], np.take_along_axis(grad, y[..., None], -1) - 1.0, -1)
        return loss, grad * (w / B)[..., None]
    raise ParameterError(f"unknown loss {kind!r}; expected one of {LOSSES}")


def loss_eval(kind: str, predictions, targets, class_weights=None, mask=None) -> float:
    return loss_and_grad(kind, predictions, targets, class_weights, mask)[0]


# ---------------------------------------------------------------------------
# vector-Jacobian products


def _zero_grads(params: CellParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.arrays().items()}


def _through_f(gz, x, u, params, grads):
    """Accumulate parameter grads of the pre-activation; return its state cotangent."""
    grads["gamma_r"] += x.T @ gz
    grads["gamma"] += u.T @ gz
    grads["mu"] += gz.sum(axis=0)
    return gz @ params.gamma_r.T


def _f_and_slope(x, u, params):
    act, dact = ACTIVATIONS[params.activation]
    z = x @ params.gamma_r + u @ params.gamma + params.mu
    f = act(z)
    return f, dact(z, f)


def cell_vjp(kind: str, x, u, params: CellParams, g, grads) -> np.ndarray:
    """Pull ``g`` back through ``F(x, u)``; parameter grads are added to ``grads``."""
    f, s = _f_and_slope(x, u, params)
    tau = params.tau
    if kind == "neural-ode":
        g_f, gx = g, 0.0
    elif kind == "ct-rnn":
        g_f = g
        gx = -g / tau
        grads["tau"] += np.sum(g * x, axis=0) / tau**2
    elif kind == "ltc":
        g_f = g * (params.a_vec - x)
        gx = -g * (1.0 / tau + f)
        grads["tau"] += np.sum(g * x, axis=0) / tau**2
        grads["a_vec"] += np.sum(g * f, axis=0)
    else:
        raise ParameterError(f"unknown cell kind {kind!r}")
    return gx + _through_f(g_f * s, x, u, params, grads)


def fused_vjp(x, u, dt, params: CellParams, g, grads) -> np.ndarray:
    f, s = _f_and_slope(x, u, params)
    tau, a = params.tau, params.a_vec
    denom = 1.0 + dt * (1.0 / tau + f)
    x_new = (x + dt * f * a) / denom
    g_num = g / denom
    g_den = -g * x_new / denom
    grads["a_vec"] += np.sum(g_num * dt * f, axis=0)
    grads["tau"] += np.sum(g_den * (-dt / tau**2), axis=0)
    g_f = g_num * dt * a + g_den * dt
    return g_num + _through_f(g_f * s, x, u, params, grads)


def step_vjp(kind: str, solver: str, x, u, dt, params, g, grads) -> np.ndarray:
    if solver == "fused":
        return fused_vjp(x, u, dt, params, g, grads)
    if solver == "euler":
        return g + cell_vjp(kind, x, u, params, dt * g, grads)
    deriv = derivative_fn(kind)
    k1 = deriv(x, u, params)
    y2 = x + 0.5 * dt * k1
    k2 = deriv(y2, u, params)
    y3 = x + 0.5 * dt * k2
    k3 = deriv(y3, u, params)
    y4 = x + dt * k3
    gx = g.copy()
    gk3 = (dt / 3.0) * g
    gk2 = (dt / 3.0) * g
    gk1 = (dt / 6.0) * g
    gy4 = cell_vjp(kind, y4, u, params, (dt / 6.0) * g, grads)
    gx += gy4
    gk3 = gk3 + dt * gy4
    gy3 = cell_vjp(kind, y3, u, params, gk3, grads)
    gx += gy3
    gk2 = gk2 + 0.5 * dt * gy3
    gy2 = cell_vjp(kind, y2, u, params, gk2, grads)
    gx += gy2
    gk1 = gk1 + 0.5 * dt * gy2
    gx += cell_vjp(kind, x, u, params, gk1, grads)
    return gx


def bptt_gradients(cache: ForwardCache, targets, loss_kind: str = "mse", class_weights=None,
                   mask=None, params: CellParams | None = None) -> tuple[float, dict]:
    """Loss and exact gradients for every cell and head parameter.

    Returns ``(loss, grads)`` with keys ``tau, gamma, gamma_r, mu, a_vec,
    w_out, b_out``. Passing ``params`` checks that the cache was built from
    those parameters.
    """
    if params is not None and params is not cache.params:
        raise UsageError("cache was produced with different cell parameters")
    if cache.cached_state_count != cache.inputs.shape[1] * cache.L:
        raise UsageError("cache is inconsistent with its own unroll length")
    loss, gy = loss_and_grad(loss_kind, cache.predictions, targets, class_weights, mask)
    p, head = cache.params, cache.head
    grads = _zero_grads(p)
    grads["w_out"] = np.einsum("btn,bto->no", cache.sample_states, gy)
    grads["b_out"] = gy.sum(axis=(0, 1))
    B, T, _ = cache.inputs.shape
    g = np.zeros((B, p.n))
    for t in range(T - 1, -1, -1):
        g = g + gy[:, t] @ head.w_out.T
        u = cache.inputs[:, t]
        for j in range(cache.L - 1, -1, -1):
            x = cache.pre_states[t * cache.L + j]
            g = step_vjp(cache.cell_kind, cache.solver, x, u, cache.dt, p, g, grads)
    if cache.cell_kind == "neural-ode":
        grads["tau"][:] = 0.0
    return loss, grads


GRAD_KEYS = PARAM_NAMES + ("w_out", "b_out")

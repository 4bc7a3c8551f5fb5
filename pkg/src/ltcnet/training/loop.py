"""Minibatch training with Adam and best-validation checkpointing."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ltcnet.cells import CELL_KINDS, CellParams
from ltcnet.errors import LtcError, ParameterError
from ltcnet.numcore import child_seed, make_rng
from ltcnet.training.bptt import LOSSES, OutputHead, bptt_gradients, forward_unroll, loss_eval
from ltcnet.training.checkpoint import Checkpoint
from ltcnet.training.optim import AdamConfig, AdamState, adam_update, clip_global_norm

log = logging.getLogger(__name__)

EVAL_CHUNK = 256


@dataclass
class TrainingConfig:
    hidden_units: int = 32
    minibatch: int = 16
    learning_rate: float = 0.005
    solver_substeps: int = 6
    bptt_length: int = 32
    epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss: str = "mse"
    class_weights: tuple | None = None
    activation: str = "sigmoid"
    solver: str = "auto"  # fused for LTC, rk4 otherwise
    sampling_period: float = 1.0
    grad_clip: float = 10.0
    seed: int = 0

    def __post_init__(self):
        for name in ("hidden_units", "minibatch", "solver_substeps", "bptt_length"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be at least 1")
        if self.epochs < 0:
            raise ParameterError("epochs must be non-negative")
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")
        if self.loss not in LOSSES:
            raise ParameterError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        if self.loss == "weighted-cross-entropy" and not self.class_weights:
            raise ParameterError("weighted-cross-entropy needs class_weights")
        if self.class_weights is not None:
            self.class_weights = tuple(float(w) for w in self.class_weights)

    @property
    def dt(self) -> float:
        return self.sampling_period / self.solver_substeps

    @property
    def classification(self) -> bool:
        return self.loss != "mse"

    def solver_for(self, cell_kind: str) -> str:
        if self.solver != "auto":
            return self.solver
        return "fused" if cell_kind == "ltc" else "rk4"

    def adam(self) -> AdamConfig:
        return AdamConfig(self.learning_rate, self.beta1, self.beta2, self.eps)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["class_weights"] is not None:
            d["class_weights"] = list(d["class_weights"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def init_params(cell_kind: str, input_dim: int, outputs: int, config: TrainingConfig,
                seed: int | None = None) -> tuple[CellParams, OutputHead]:
    """Fan-in scaled Gaussian weights, zero biases, ``tau ~ U(0.5, 2)``, ``A ~ N(0, 1)``, zero head."""
    if cell_kind not in CELL_KINDS:
        raise ParameterError(f"unknown cell kind {cell_kind!r}")
    rng = make_rng(child_seed(config.seed if seed is None else seed, 7))
    n = config.hidden_units
    params = CellParams(
        tau=rng.uniform(0.5, 2.0, n),
        gamma=rng.normal(0.0, 1.0 / np.sqrt(input_dim), (input_dim, n)),
        gamma_r=rng.normal(0.0, 1.0 / np.sqrt(n), (n, n)),
        mu=np.zeros(n),
        a_vec=rng.normal(0.0, 1.0, n),
        activation=config.activation,
    )
    return params, OutputHead.zeros(n, outputs)


def _metric(config, preds, targets):
    """Mean squared error per output entry, or classification accuracy."""
    if config.classification:
        return float(np.mean(np.argmax(preds, axis=-1) == targets))
    return float(np.mean((preds - targets) ** 2))


def predict(cell_kind, params, head, config: TrainingConfig, inputs) -> np.ndarray:
    """Predictions for ``(N, T, m)`` inputs, computed in fixed-size chunks."""
    out = []
    for lo in range(0, len(inputs), EVAL_CHUNK):
        p, _ = forward_unroll(cell_kind, params, head, config.solver_for(cell_kind),
                              inputs[lo:lo + EVAL_CHUNK], config.solver_substeps, config.dt)
        out.append(p)
    return np.concatenate(out) if out else np.zeros((0,) + inputs.shape[1:2] + (head.b_out.size,))


def evaluate(cell_kind, params, head, config: TrainingConfig, data) -> tuple[float, float]:
    """``(loss per sequence, metric)`` on ``(inputs, targets)``."""
    inputs, targets = data
    preds = predict(cell_kind, params, head, config, inputs)
    loss = loss_eval(config.loss, preds, targets, config.class_weights)
    return loss, _metric(config, preds, targets)


def _better(config, new, best):
    if best is None:
        return True
    return new > best if config.classification else new < best


def _output_dim(config, targets):
    if config.classification:
        if config.class_weights:
            return len(config.class_weights)
        return int(np.max(targets)) + 1
    return targets.shape[-1]


def train_loop(split, cell_kind: str, config: TrainingConfig, extra: dict | None = None):
    """Train on ``split.train``, select on ``split.validation``.

    Returns ``(checkpoint, log)``. ``log`` holds one dict per epoch, epoch 0
    being the untrained model. The checkpoint carries the parameters with
    the best validation metric (lowest mse or highest accuracy).
    """
    x_train, y_train = split.train
    x_val, y_val = split.validation
    if len(x_train) == 0 or len(x_val) == 0:
        raise ParameterError("training and validation splits must be non-empty")
    if x_train.shape[1] > config.bptt_length:
        raise ParameterError(f"window length {x_train.shape[1]} exceeds bptt_length {config.bptt_length}")
    outputs = _output_dim(config, np.concatenate([np.ravel(y_train), np.ravel(y_val)])
                          if config.classification else y_train)
    params, head = init_params(cell_kind, x_train.shape[-1], outputs, config)
    solver = config.solver_for(cell_kind)
    adam_cfg = config.adam()
    rng = make_rng(child_seed(config.seed, 11))

    def record(epoch, params, head, note=""):
        tr_loss, tr_metric = evaluate(cell_kind, params, head, config, split.train)
        va_loss, va_metric = evaluate(cell_kind, params, head, config, split.validation)
        row = {"epoch": epoch, "train_loss": tr_loss, "train_metric": tr_metric,
               "val_loss": va_loss, "val_metric": va_metric, "note": note}
        history.append(row)
        return row

    history: list[dict] = []
    row = record(0, params, head)
    best = (row["val_metric"], 0, params.copy(), OutputHead(head.w_out, head.b_out))
    state = AdamState()
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(x_train))
        diverged = ""
        for lo in range(0, len(order), config.minibatch):
            idx = order[lo:lo + config.minibatch]
            try:
                _, cache = forward_unroll(cell_kind, params, head, solver, x_train[idx],
                                          config.solver_substeps, config.dt)
                loss, grads = bptt_gradients(cache, y_train[idx], config.loss, config.class_weights)
            except LtcError as exc:
                diverged = f"solver failure: {exc}"
                break
            if not np.isfinite(loss):
                diverged = "non-finite training loss"
                break
            grads, _ = clip_global_norm(grads, config.grad_clip)
            step += 1
            values = {**params.arrays(), **head.arrays()}
            values, state, _ = adam_update(values, grads, step, state, adam_cfg)
            params = params.with_arrays({k: values[k] for k in params.arrays()})
            head = OutputHead(values["w_out"], values["b_out"])
        if diverged:
            log.warning("epoch %d: %s; stopping early", epoch, diverged)
            history.append({"epoch": epoch, "train_loss": float("nan"), "train_metric": float("nan"),
                            "val_loss": float("nan"), "val_metric": float("nan"),
                            "note": f"diverged: {diverged}"})
            break
        row = record(epoch, params, head)
        if not np.isfinite(row["val_loss"]):
            row["note"] = "diverged: non-finite validation loss"
            break
        if _better(config, row["val_metric"], best[0]):
            best = (row["val_metric"], epoch, params.copy(), OutputHead(head.w_out, head.b_out))

    metric, epoch, best_params, best_head = best
    ckpt = Checkpoint(cell_kind=cell_kind, params=best_params, head=best_head,
                      config=config.to_dict(), best_validation_metric=metric, best_epoch=epoch,
                      solver=solver, extra=dict(extra or {}))
    return ckpt, history


def f1_score(predicted, actual, positive: int = 1) -> float:
    """Binary F1 of integer label arrays; 0 when there are no true positives."""
    p = np.ravel(predicted) == positive
    a = np.ravel(actual) == positive
    tp = int(np.sum(p & a))
    fp = int(np.sum(p & ~a))
    fn = int(np.sum(~p & a))
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)

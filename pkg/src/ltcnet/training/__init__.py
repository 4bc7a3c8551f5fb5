"""Backpropagation through time, optimisers, training loop and checkpoints."""

from ltcnet.training.bptt import (
    ForwardCache,
    OutputHead,
    bptt_gradients,
    forward_unroll,
    loss_and_grad,
    loss_eval,
)
from ltcnet.training.checkpoint import Checkpoint, checkpoint_load, checkpoint_save
from ltcnet.training.loop import TrainingConfig, evaluate, f1_score, init_params, predict, train_loop
from ltcnet.training.optim import AdamConfig, AdamState, adam_update, clip_global_norm, sgd_update

__all__ = [
    "AdamConfig",
    "AdamState",
    "Checkpoint",
    "ForwardCache",
    "OutputHead",
    "TrainingConfig",
    "adam_update",
    "bptt_gradients",
    "checkpoint_load",
    "checkpoint_save",
    "clip_global_norm",
    "evaluate",
    "f1_score",
    "forward_unroll",
    "init_params",
    "loss_and_grad",
    "loss_eval",
    "predict",
    "sgd_update",
    "train_loop",
]

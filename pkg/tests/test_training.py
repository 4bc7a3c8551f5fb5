import json
import math
import zlib

import numpy as np
import pytest

from gradcheck import analytic_gradients, max_relative_error, numeric_gradients, random_problem
from ltcnet.cells import CellParams
from ltcnet.data import window_and_split, Dataset
from ltcnet.errors import ContractError, ParameterError, UsageError
from ltcnet.training import (
    AdamConfig,
    AdamState,
    Checkpoint,
    OutputHead,
    TrainingConfig,
    adam_update,
    bptt_gradients,
    checkpoint_load,
    checkpoint_save,
    clip_global_norm,
    f1_score,
    forward_unroll,
    init_params,
    loss_eval,
    train_loop,
)
from ltcnet.training.checkpoint import CheckpointVersionError, dumps, loads


@pytest.mark.parametrize("kind,solver", [
    ("ltc", "fused"), ("ltc", "euler"), ("ltc", "rk4"),
    ("ct-rnn", "rk4"), ("ct-rnn", "euler"), ("neural-ode", "rk4"),
])
@pytest.mark.parametrize("loss", ["mse", "cross-entropy"])
def test_gradients_match_finite_differences(kind, solver, loss):
    rng = np.random.default_rng(zlib.crc32(f"{kind}{solver}{loss}".encode()))
    arrays, inputs, targets = random_problem(rng, kind, n=4, m=2, K=3, B=2, T=3, loss=loss)
    args = (kind, solver, loss, arrays, "sigmoid", inputs, targets, 2, 0.3)
    assert max_relative_error(analytic_gradients(*args), numeric_gradients(*args)) < 1e-4


def test_weighted_cross_entropy_gradients():
    rng = np.random.default_rng(5)
    arrays, inputs, targets = random_problem(rng, "ltc", 3, 2, 2, 3, 3, "weighted-cross-entropy")
    args = ("ltc", "fused", "weighted-cross-entropy", arrays, "tanh", inputs, targets, 1, 0.5)
    w = np.array([1.0, 15.0])
    assert max_relative_error(analytic_gradients(*args, w), numeric_gradients(*args, w)) < 1e-4


def test_gradients_vanish_at_zero_loss(rng):
    arrays, inputs, _ = random_problem(rng, "ltc", 3, 2, 2, 2, 4, "mse")
    params = CellParams(**{k: arrays[k] for k in ("tau", "gamma", "gamma_r", "mu", "a_vec")},
                        activation="sigmoid")
    head = OutputHead(arrays["w_out"], arrays["b_out"])
    preds, cache = forward_unroll("ltc", params, head, "fused", inputs, 3, 0.2)
    loss, grads = bptt_gradients(cache, preds.copy(), "mse")
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grads.values())


def test_linear_network_least_squares_gradient():
    # hard-tanh in its identity region, one Euler step per sample, one step in time:
    # x1 = dt (gamma^T u + mu), y = w^T x1 + b, loss = mean_k (y - t)^2 averaged over batch
    rng = np.random.default_rng(8)
    n, m, K, B, dt = 3, 2, 2, 4, 0.1
    params = CellParams(np.ones(n), rng.normal(0, 0.2, (m, n)), rng.normal(0, 0.2, (n, n)),
                        rng.normal(0, 0.1, n), np.zeros(n), "hard-tanh")
    head = OutputHead(rng.normal(size=(n, K)), rng.normal(size=K))
    u = rng.uniform(-1, 1, (B, 1, m))
    t = rng.normal(size=(B, 1, K))
    _, cache = forward_unroll("neural-ode", params, head, "euler", u, 1, dt)
    _, grads = bptt_gradients(cache, t, "mse")

    x1 = dt * (u[:, 0] @ params.gamma + params.mu)
    resid = x1 @ head.w_out + head.b_out - t[:, 0]
    dy = 2.0 * resid / (K * B)
    dx = dy @ head.w_out.T
    assert np.allclose(grads["w_out"], x1.T @ dy, atol=1e-8)
    assert np.allclose(grads["b_out"], dy.sum(0), atol=1e-8)
    assert np.allclose(grads["gamma"], dt * u[:, 0].T @ dx, atol=1e-8)
    assert np.allclose(grads["mu"], dt * dx.sum(0), atol=1e-8)
    assert np.allclose(grads["gamma_r"], 0.0, atol=1e-8)  # x0 = 0


def test_cache_holds_every_substep(rng):
    arrays, inputs, _ = random_problem(rng, "ltc", 3, 2, 1, 2, 5, "mse")
    params = CellParams(**{k: arrays[k] for k in ("tau", "gamma", "gamma_r", "mu", "a_vec")},
                        activation="sigmoid")
    _, cache = forward_unroll("ltc", params, OutputHead.zeros(3, 1), "fused", inputs, 4, 0.1)
    assert cache.cached_state_count == 5 * 4


def test_cache_params_mismatch(rng):
    arrays, inputs, targets = random_problem(rng, "ltc", 3, 2, 1, 2, 2, "mse")
    params = CellParams(**{k: arrays[k] for k in ("tau", "gamma", "gamma_r", "mu", "a_vec")})
    _, cache = forward_unroll("ltc", params, OutputHead.zeros(3, 1), "fused", inputs, 1, 0.1)
    with pytest.raises(UsageError):
        bptt_gradients(cache, targets, "mse", params=params.copy())


def test_zero_head_predicts_bias(rng):
    arrays, inputs, _ = random_problem(rng, "ltc", 3, 2, 2, 2, 4, "mse")
    params = CellParams(**{k: arrays[k] for k in ("tau", "gamma", "gamma_r", "mu", "a_vec")})
    head = OutputHead(np.zeros((3, 2)), np.array([0.25, -1.0]))
    preds, _ = forward_unroll("ltc", params, head, "fused", inputs, 2, 0.1)
    assert np.all(preds == head.b_out)


def test_dopri45_not_trainable(rng):
    arrays, inputs, _ = random_problem(rng, "ltc", 3, 2, 1, 1, 2, "mse")
    params = CellParams(**{k: arrays[k] for k in ("tau", "gamma", "gamma_r", "mu", "a_vec")})
    with pytest.raises(ContractError):
        forward_unroll("ltc", params, OutputHead.zeros(3, 1), "dopri45", inputs, 1, 0.1)


def test_loss_examples():
    p = np.random.default_rng(0).normal(size=(2, 3, 4))
    assert loss_eval("mse", p, p) == 0.0
    uniform = np.zeros((2, 5, 3))
    labels = np.zeros((2, 5), dtype=int)
    assert loss_eval("cross-entropy", uniform, labels) == pytest.approx(5 * math.log(3))


def test_weighted_loss_scales_minority():
    logits = np.tile([3.0, -3.0], (4, 6, 1))  # always predicts class 0
    labels = np.ones((4, 6), dtype=int)  # every step is minority class 1
    plain = loss_eval("cross-entropy", logits, labels)
    weighted = loss_eval("weighted-cross-entropy", logits, labels, class_weights=(1.0, 15.0))
    assert weighted == pytest.approx(15 * plain)


def test_label_out_of_range():
    with pytest.raises(ParameterError):
        loss_eval("cross-entropy", np.zeros((1, 2, 2)), np.array([[0, 2]]))


def _adam_oracle(p, grads, lr=0.01, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return p


def test_adam_three_steps_match_oracle():
    grads = [0.3, -1.2, 0.05]
    params, state = {"w": np.array([1.5])}, AdamState()
    for t, g in enumerate(grads, start=1):
        params, state, applied = adam_update(params, {"w": np.array([g])}, t, state, AdamConfig())
        assert applied
    assert params["w"][0] == pytest.approx(_adam_oracle(1.5, grads), abs=1e-15)


def test_adam_zero_gradient_is_noop():
    params = {"w": np.array([0.4, -2.0])}
    out, _, _ = adam_update(params, {"w": np.zeros(2)}, 1, AdamState())
    assert np.array_equal(out["w"], params["w"])


def test_adam_first_step_is_learning_rate():
    g = np.array([3.0, -0.02, 1e3])
    out, _, _ = adam_update({"w": np.zeros(3)}, {"w": g}, 1, AdamState(), AdamConfig(0.01))
    assert np.allclose(np.abs(out["w"]), 0.01, rtol=1e-5)


def test_adam_skips_nonfinite_gradients():
    params = {"w": np.ones(2)}
    out, state, applied = adam_update(params, {"w": np.array([np.nan, 1.0])}, 1, AdamState())
    assert not applied and state.skipped == 1
    assert np.array_equal(out["w"], params["w"]) and not state.m


def test_adam_clamps_tau():
    out, _, _ = adam_update({"tau": np.array([1e-7])}, {"tau": np.array([1.0])}, 1, AdamState())
    assert out["tau"][0] == 1e-6


def test_clip_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    clipped, norm = clip_global_norm(grads, 1.0)
    assert norm == 5.0
    assert np.allclose([clipped["a"][0], clipped["b"][0]], [0.6, 0.8])


def _checkpoint(rng):
    config = TrainingConfig(hidden_units=3, epochs=0)
    params, head = init_params("ltc", 2, 1, config, seed=4)
    return Checkpoint("ltc", params, head, config.to_dict(), 0.1 + 0.2, best_epoch=3,
                      extra={"norm_mean": rng.normal(size=2), "note": "x"})


def test_checkpoint_round_trip(tmp_path, rng):
    ckpt = _checkpoint(rng)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    checkpoint_save(a, ckpt)
    loaded = checkpoint_load(a)
    checkpoint_save(b, loaded)
    assert a.read_bytes() == b.read_bytes()
    for k, v in ckpt.params.arrays().items():
        assert np.array_equal(loaded.params.arrays()[k], v)
    assert loaded.best_validation_metric == 0.1 + 0.2
    assert np.array_equal(loaded.extra["norm_mean"], ckpt.extra["norm_mean"])


def test_checkpoint_version_error(rng):
    doc = json.loads(dumps(_checkpoint(rng)))
    doc["format_version"] += 1
    with pytest.raises(CheckpointVersionError):
        loads(json.dumps(doc))


def _sine_split(n=160, window=16):
    t = np.arange(n + 1) * 0.3
    y = np.sin(t)
    ds = Dataset(y[:-1, None], y[1:, None], ["y"], ["next"])
    return window_and_split(ds, window=window, seed=1)


def test_train_loop_zero_epochs():
    split = _sine_split()
    config = TrainingConfig(hidden_units=4, epochs=0)
    ckpt, history = train_loop(split, "ltc", config)
    assert len(history) == 1 and history[0]["epoch"] == 0
    params, head = init_params("ltc", 1, 1, config)
    assert np.array_equal(ckpt.params.gamma, params.gamma)
    assert ckpt.best_validation_metric == history[0]["val_metric"]


def test_train_loop_deterministic_and_improves():
    split = _sine_split()
    config = TrainingConfig(hidden_units=6, epochs=4, learning_rate=0.02, seed=2)
    _, h1 = train_loop(split, "ltc", config)
    ckpt, h2 = train_loop(split, "ltc", config)
    assert h1 == h2
    assert ckpt.best_validation_metric < h1[0]["val_metric"]


@pytest.mark.parametrize("kind", ["ct-rnn", "neural-ode"])
def test_train_loop_baselines_run(kind):
    ckpt, history = train_loop(_sine_split(), kind, TrainingConfig(hidden_units=4, epochs=1))
    assert ckpt.solver == "rk4" and len(history) == 2


def test_f1_hand_counted():
    # 20 samples: 4 positives; predictions: 3 true positives, 2 false positives, 1 false negative
    actual = np.array([1, 1, 1, 1] + [0] * 16)
    predicted = np.array([1, 1, 1, 0] + [1, 1] + [0] * 14)
    # precision 3/5, recall 3/4 -> F1 = 2 * 0.6 * 0.75 / 1.35
    assert f1_score(predicted, actual) == pytest.approx(2 / 3)


def test_f1_all_positive_imbalanced():
    actual = np.array([1] + [0] * 15)
    assert f1_score(np.ones(16, dtype=int), actual) == pytest.approx(2 * (1 / 16) / (1 / 16 + 1))

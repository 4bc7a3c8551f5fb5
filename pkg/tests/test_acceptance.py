"""Acceptance criteria, one test each.

Each test records a PASS or FAIL line (shown in the terminal summary) and
then asserts, so a failing criterion is both reported and red.
"""

import math
import time

import numpy as np
import pytest

from conftest import record_criterion
from gradcheck import (
    analytic_gradients,
    error_summary,
    max_relative_error,
    numeric_gradients,
    random_problem,
)
from ltcnet.bounds import fuzz_verify, random_sigmoid_ltc, tau_bounds
from ltcnet.cells import instantaneous_time_constant, neural_net_f
from ltcnet.data import Dataset, denormalize, fit_stats, normalize, window_and_split
from ltcnet.expressivity import ExpressivityConfig, depth_sweep, trajectory_sweep
from ltcnet.solvers import Solver, dopri45_integrate, euler_step, fused_step, rk4_step, simulate
from ltcnet.training import TrainingConfig, checkpoint_load, checkpoint_save, train_loop

pytestmark = pytest.mark.slow

MODEL_SOLVERS = [("ltc", "fused"), ("ltc", "euler"), ("ltc", "rk4"), ("ct-rnn", "euler"),
                 ("ct-rnn", "rk4"), ("neural-ode", "euler"), ("neural-ode", "rk4")]


def test_criterion_01_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(20240101)
    worst, worst_case, worst_abs, worst_big = 0.0, None, 0.0, 0.0
    for i in range(100):
        kind, solver = MODEL_SOLVERS[i % len(MODEL_SOLVERS)]
        loss = ("mse", "cross-entropy")[(i // len(MODEL_SOLVERS)) % 2]
        n, T, L = int(rng.integers(1, 9)), int(rng.integers(1, 6)), int(rng.integers(1, 4))
        m, K, B = int(rng.integers(1, 4)), int(rng.integers(2, 4)), int(rng.integers(1, 4))
        activation = ("sigmoid", "tanh")[i % 2]
        arrays, inputs, targets = random_problem(rng, kind, n, m, K, B, T, loss)
        dt = float(rng.uniform(0.05, 0.5))
        args = (kind, solver, loss, arrays, activation, inputs, targets, L, dt)
        analytic, numeric = analytic_gradients(*args), numeric_gradients(*args)
        err = max_relative_error(analytic, numeric)
        abs_err, big_err = error_summary(analytic, numeric)
        worst_abs, worst_big = max(worst_abs, abs_err), max(worst_big, big_err)
        if err > worst:
            worst, worst_case = err, (kind, solver, loss, n, T, L)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed <= 120
    record_criterion(1, "BPTT matches central differences", ok,
                     f"max rel err {worst:.2e} above the 1e-8 floor (limit 1e-4, worst case {worst_case}); "
                     f"max abs diff {worst_abs:.1e}, max rel err on entries > 1e-6 {worst_big:.1e}; "
                     f"{elapsed:.1f}s")
    assert ok


def test_criterion_02_state_stability():
    start = time.perf_counter()
    report = fuzz_verify(n_trials=1000, solver="fused", steps=200, amplitude=1e6, seed=2)
    elapsed = time.perf_counter() - start
    ok = report.violation_count == 0 and not report.solver_failures and elapsed <= 120
    record_criterion(2, "state box under inputs up to 1e6", ok,
                     f"{report.violation_count} violations over {report.samples_tested} states, "
                     f"max |input| {report.max_input_magnitude:.3g}, {elapsed:.1f}s")
    assert ok


def test_criterion_03_time_constant_bounds():
    rng = np.random.default_rng(3)
    outside, evaluations = 0, 0
    while evaluations < 10_000:
        p = random_sigmoid_ltc(rng, 16)
        for _ in range(10):
            x = rng.normal(0, 10 ** rng.uniform(-2, 3), p.n)
            u = rng.normal(0, 10 ** rng.uniform(-2, 6), p.m)
            ts = instantaneous_time_constant(x, u, p)
            lo, hi = tau_bounds(p).T
            outside += int(np.count_nonzero((ts < lo - 1e-9) | (ts > hi + 1e-9)))
            evaluations += 1
    ok = outside == 0
    record_criterion(3, "tau_sys within [tau/(1+tau), tau]", ok,
                     f"{outside} neuron values outside over {evaluations} evaluations")
    assert ok


def test_criterion_04_fused_fixed_point():
    rng = np.random.default_rng(4)
    worst_fixed, worst_sim = 0.0, 0.0
    for _ in range(20):
        p = random_sigmoid_ltc(rng, 8)
        p = p.with_arrays({"gamma_r": np.zeros((p.n, p.n))})
        u = rng.normal(0, 2, p.m)
        f = neural_net_f(np.zeros(p.n), u, p)
        x_star = f * p.a_vec / (1 / p.tau + f)
        dt = float(rng.uniform(0.01, 2.0))
        worst_fixed = max(worst_fixed, float(np.max(np.abs(fused_step(x_star, u, dt, p) - x_star))))
        x0 = rng.uniform(-5, 5, p.n)
        traj = simulate("ltc", p, "fused", x0, np.tile(u, (100, 1)), 1.0, L=600)
        worst_sim = max(worst_sim, float(np.max(np.abs(traj.final_state - x_star))))
    ok = worst_fixed <= 1e-12 and worst_sim <= 1e-6
    record_criterion(4, "fused step fixed point", ok,
                     f"fixed-point drift {worst_fixed:.1e} (limit 1e-12), "
                     f"simulate distance {worst_sim:.1e} (limit 1e-6)")
    assert ok


def _decay(x, u):
    return -x


def _slope(step):
    dts = np.array([0.1, 0.05, 0.025, 0.0125])
    errs = []
    for dt in dts:
        x = np.ones(1)
        for _ in range(round(1.0 / dt)):
            x = step(_decay, x, None, dt)
        errs.append(abs(x[0] - math.exp(-1.0)))
    return float(np.polyfit(np.log(dts), np.log(errs), 1)[0])


def test_criterion_05_solver_orders():
    euler, rk4 = _slope(euler_step), _slope(rk4_step)
    ratios = []
    for rtol in (1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10):
        x, _ = dopri45_integrate(_decay, np.ones(1), np.zeros((2, 1)), (0.0, 1.0), rtol, rtol)
        ratios.append(abs(x[0] - math.exp(-1.0)) / rtol)
    ok = abs(euler - 1.0) <= 0.2 and abs(rk4 - 4.0) <= 0.3 and max(ratios) <= 10
    record_criterion(5, "solver convergence orders", ok,
                     f"euler slope {euler:.3f}, rk4 slope {rk4:.3f}, "
                     f"dopri45 max error/rtol {max(ratios):.3f} (limit 10)")
    assert ok


def test_criterion_06_depth_ordering():
    start = time.perf_counter()
    config = ExpressivityConfig(activation="hard-tanh", width=100, sw2=2.0, sb2=1.0, trials=100,
                                solver=Solver("dopri45"), seed=6)
    m = depth_sweep(config)
    node, ctrnn, ltc = (m[k].mean for k in ("neural-ode", "ct-rnn", "ltc"))
    elapsed = time.perf_counter() - start
    ratio = ltc / node
    ordered = ltc > ctrnn > node
    ok = ordered and ratio > 5 and elapsed <= 600
    record_criterion(6, "computational depth LTC > CT-RNN > neural ODE, ratio > 5", ok,
                     f"depths ltc {ltc:.4f}, ct-rnn {ctrnn:.4f}, neural-ode {node:.4f}; "
                     f"ordering {'holds' if ordered else 'broken'}, ratio {ratio:.2f} (limit 5), "
                     f"{sum(v.failures for v in m.values())} stiff failures, {elapsed:.1f}s")
    assert ok


def _ltc_mean(**kw):
    config = ExpressivityConfig(kinds=("ltc",), trials=20, measure_depth=False, seed=7, **kw)
    return trajectory_sweep(config).mean_length("ltc")


def test_criterion_07_expressivity_orderings():
    start = time.perf_counter()
    base = trajectory_sweep(ExpressivityConfig(trials=20, measure_depth=False, seed=7))
    lengths = {k: v["length_mean"] for k, v in base.summary.items()}
    longest = lengths["ltc"] > lengths["ct-rnn"] and lengths["ltc"] > lengths["neural-ode"]
    ve = float(np.mean([r.ve1 + r.ve2 for r in base.rows]))

    by_var = [lengths["ltc"] if s == 2 else _ltc_mean(sw2=float(s)) for s in (1, 2, 4, 8)]
    monotone = all(b > a for a, b in zip(by_var, by_var[1:]))

    widths = [8, 16, 32, 64, 128]
    by_width = [lengths["ltc"] if k == 100 else _ltc_mean(width=k) for k in widths]
    slope = float(np.polyfit(np.log(widths), np.log(by_width), 1)[0])
    elapsed = time.perf_counter() - start

    parts = {
        "LTC longest": longest,
        "monotone in sw2": monotone,
        "width slope in [0.7, 1.3]": 0.7 <= slope <= 1.3,
        "variance explained >= 0.8": ve >= 0.8,
        "runtime <= 15 min": elapsed <= 900,
    }
    ok = all(parts.values())
    failed = [k for k, v in parts.items() if not v]
    record_criterion(7, "expressivity orderings", ok,
                     "lengths " + ", ".join(f"{k} {v:.1f}" for k, v in lengths.items())
                     + f"; LTC vs sw2 1,2,4,8: {', '.join(f'{v:.1f}' for v in by_var)}"
                     + f"; LTC vs width {widths}: {', '.join(f'{v:.1f}' for v in by_width)}"
                     + f" (slope {slope:.3f}); mean VE {ve:.3f}; {elapsed:.0f}s"
                     + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok


def test_criterion_08_solver_indifference():
    adaptive = _ltc_mean()
    fused = _ltc_mean(ltc_solver=Solver("fused"))
    rel = abs(adaptive - fused) / adaptive
    ok = rel < 0.2
    record_criterion(8, "LTC length dopri45 vs fused", ok,
                     f"dopri45 {adaptive:.3f}, fused {fused:.3f}, relative difference {rel:.2%} (limit 20%)")
    assert ok


def _sine_mixture_split():
    t = np.arange(400) * 0.25
    signal = np.sin(t) + 0.5 * np.cos(2.3 * t)
    ds = Dataset(signal[:-1, None], signal[1:, None], ["s"], ["next"])
    return window_and_split(ds, window=32, stride=1, seed=0)


def test_criterion_09_learning_sanity():
    split = _sine_mixture_split()
    # library defaults: 32 units, batch 16, L = 6, Adam(0.005, 0.9, 0.999), seed 0
    config = TrainingConfig(epochs=50)
    start = time.perf_counter()
    ckpt, log = train_loop(split, "ltc", config)
    elapsed = time.perf_counter() - start
    _, log2 = train_loop(split, "ltc", config)
    initial, final = log[0]["val_metric"], log[-1]["val_metric"]
    reduction = initial / final
    same = log == log2
    ok = reduction >= 10 and same and elapsed <= 300
    record_criterion(9, "LTC learns a sin/cos mixture", ok,
                     f"validation mse {initial:.4f} -> {final:.5f} ({reduction:.1f}x, limit 10x), "
                     f"best {ckpt.best_validation_metric:.5f}; repeat run identical: {same}; "
                     f"{elapsed:.1f}s per run")
    assert ok


def test_criterion_10_data_pipeline(tmp_path):
    checks = {}
    counts_ok = True
    for n in (131, 200, 457, 1000):
        t = np.arange(n, dtype=float)
        split = window_and_split(Dataset(t[:, None], t[:, None], ["t"], ["y"]), window=32, seed=n)
        total = n - 31
        counts_ok &= sum(split.counts()) == total
        counts_ok &= all(abs(c - r * total) <= 1 for c, r in zip(split.counts(), (0.75, 0.10, 0.15)))
        counts_ok &= all(part[0].shape[1] == 32 for part in (split.train, split.validation, split.test))
    checks["75:10:15 counts within 1, 32-step windows"] = counts_ok

    x = np.random.default_rng(10).normal(5.0, 3.0, (300, 4))
    stats = fit_stats(x)
    back = denormalize(normalize(Dataset(x, np.zeros((300, 1)), list("abcd"), ["y"]), stats).features, stats)
    checks["normalisation round trip 1e-12"] = float(np.max(np.abs(back - x))) <= 1e-12

    ckpt, _ = train_loop(split_small(), "ltc", TrainingConfig(hidden_units=4, epochs=1))
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    checkpoint_save(a, ckpt)
    checkpoint_save(b, checkpoint_load(a))
    checks["checkpoint byte-identical"] = a.read_bytes() == b.read_bytes()
    ok = all(checks.values())
    record_criterion(10, "data pipeline conformance", ok,
                     "; ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok


def split_small():
    t = np.arange(80) * 0.3
    return window_and_split(Dataset(np.sin(t)[:, None], np.cos(t)[:, None], ["s"], ["c"]), window=16)

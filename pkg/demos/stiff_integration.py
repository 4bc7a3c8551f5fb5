"""Why LTCs get their own solver.

LTC neurons with short time constants, driven by a large input, have
an even shorter instantaneous time constant, so the ODE becomes stiff. Explicit Euler with a modest step
overshoots and leaves the reachable state box; the fused step treats the
linear part implicitly and stays inside for any step size.

    python demos/stiff_integration.py
"""

import numpy as np

from ltcnet import CellParams, simulate
from ltcnet.bounds import state_bounds
from ltcnet.cells import instantaneous_time_constant
from ltcnet.errors import OverflowStateError

rng = np.random.default_rng(0)
n = 4
params = CellParams(
    tau=np.full(n, 0.05),
    gamma=rng.normal(0, 1, (1, n)),
    gamma_r=rng.normal(0, 0.5, (n, n)),
    mu=np.zeros(n),
    a_vec=np.array([1.0, -1.0, 2.0, -0.5]),
    activation="sigmoid",
)

# a square wave that jumps between -50 and +50
inputs = np.where(np.arange(200) % 40 < 20, 50.0, -50.0)[:, None]
lo, hi = state_bounds(params).T
print("state box per neuron:", ", ".join(f"[{a:g}, {b:g}]" for a, b in zip(lo, hi)))

tau_sys = instantaneous_time_constant(np.zeros(n), inputs[0], params)
print("instantaneous time constants at the first sample:", np.round(tau_sys, 4))

# one input sample per time unit, four solver sub-steps per sample
period, L = 1.0, 4
for solver in ("euler", "fused"):
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            traj = simulate("ltc", params, solver, np.zeros(n), inputs, dt=period / L, L=L)
    except OverflowStateError as exc:  # euler blows up outright
        print(f"{solver:>6}: failed ({exc})")
        continue
    states = traj.states
    outside = np.count_nonzero((states < lo - 1e-9) | (states > hi + 1e-9))
    print(f"{solver:>6}: state range [{states.min():.3g}, {states.max():.3g}], "
          f"{outside} of {states.size} values outside the box")

# With a much smaller step explicit Euler behaves, at 25x the cost.
fine = simulate("ltc", params, "euler", np.zeros(n), inputs, dt=period / 100, L=100)
coarse = simulate("ltc", params, "fused", np.zeros(n), inputs, dt=period / L, L=L)
print(f"fused (L={L}) vs fine euler (L=100), max gap at sample ends:",
      f"{np.max(np.abs(fine.sample_states - coarse.sample_states)):.3g}")

"""Computational depth and the relative trajectory-length bounds.

Computational depth counts how many adaptive Dormand-Prince steps a model
needs per input sample. The relative bounds plug that depth into the
growth-rate expressions (big-O constants set to 1), so only their ordering
is meaningful.
"""

from ltcnet.expressivity import ExpressivityConfig, depth_sweep, trajectory_sweep
from ltcnet.solvers import Solver

config = ExpressivityConfig(activation="hard-tanh", width=100, trials=10, seed=3)
report = trajectory_sweep(config)

for model, entry in report.summary.items():
    clamped = " (numerator clamped to 0)" if entry.get("bound_clamped") else ""
    print(f"{model:>11}: depth {entry['depth_mean']:.4f} +- {entry['depth_std']:.4f} steps/sample, "
          f"length {entry['length_mean']:7.2f}, relative bound {entry['relative_bound']:.4g}{clamped}")

print("\nTightening the tolerance makes every model work harder:")
for rtol in (1e-3, 1e-5, 1e-7):
    cfg = ExpressivityConfig(width=100, trials=5, solver=Solver("dopri45", rtol, rtol * 1e-3), seed=3)
    depths = depth_sweep(cfg)
    print(f"  rtol {rtol:.0e}: " + ", ".join(f"{k} {m.mean:.3f}" for k, m in depths.items()))

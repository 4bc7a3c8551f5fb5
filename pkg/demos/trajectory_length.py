"""Trajectory length of random networks on a circular input.

Feeds (sin t, cos t) into randomly initialised single-layer networks,
projects the hidden states onto their top two principal components and
measures the arc length of the resulting curve. The LTC deforms the circle
into a much longer curve than the neural ODE or the CT-RNN with the same
weights. Pass an output path to dump the 2-D polylines for plotting.

    python demos/trajectory_length.py [polylines.csv]
"""

import csv
import sys

from ltcnet.expressivity import ExpressivityConfig, trajectory_sweep

config = ExpressivityConfig(activation="hard-tanh", width=100, sw2=2.0, sb2=1.0, trials=5,
                            measure_depth=False, seed=1)
report = trajectory_sweep(config, keep_polylines=True)

print(f"{'model':>11}  {'length':>8}  {'std':>6}  variance explained (top 2)")
for model, entry in report.summary.items():
    print(f"{model:>11}  {entry['length_mean']:8.2f}  {entry['length_std']:6.2f}  "
          f"{entry['ve1_mean']:.3f} + {entry['ve2_mean']:.3f}")

# Width matters too: the LTC curve grows with the number of neurons.
for width in (10, 40, 160):
    r = trajectory_sweep(ExpressivityConfig(kinds=("ltc",), width=width, trials=5,
                                            measure_depth=False, seed=1))
    print(f"LTC width {width:>3}: mean length {r.mean_length('ltc'):.2f}")

if len(sys.argv) > 1:
    with open(sys.argv[1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "model", "index", "pc1", "pc2"])
        for (trial, model), z in report.polylines.items():
            for i, (a, b) in enumerate(z):
                w.writerow([trial, model, i, repr(float(a)), repr(float(b))])
    print("polylines written to", sys.argv[1])

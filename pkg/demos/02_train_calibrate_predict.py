"""
Training, calibrating and predicting
====================================

Fit the MC-dropout quantile network on synthetic heteroscedastic data,
calibrate it on a held-out split, and compare the learned quantiles with the
known truth.
"""

import os
import tempfile

import numpy as np

from cqrkit import CQRModel, NetConfig, picp_curve, synth_heteroscedastic
from cqrkit.scoring import gap, mad, point_estimate

train_ds, task = synth_heteroscedastic(20_000, seed=0)
print(task.describe())

# default hyperparameters: 32 hidden units, dropout 0.2, 10 epochs.
# Fewer MC passes keep the demo quick; 1000 is the default.
model = CQRModel.fit(train_ds, NetConfig(mc_samples=200), cal_size=1000, seed=0)
print("calibrated on", model.table.n, "rows")

test = task.sample(5000, seed=99)
raw = model.predict_quantiles(test, mc_seed=1)
cq = model.predict(test, mc_seed=1)

curve = picp_curve(raw, model.table, test.targets)
for level in (0.8, 0.9):
    i = int(np.argmin(np.abs(curve.nominal - level)))
    print(f"{level:.0%} intervals: raw PICP {curve.raw[i]:.3f}, conformal {curve.conformal[i]:.3f}")

print("MAD of the point estimate:", round(mad(point_estimate(cq), test.targets), 3))

# learned vs. true quantiles on a few inputs
probe = task.sample(5, seed=7)
est = model.predict_quantiles(probe, mc_seed=2).values
print("\n    x     q0.1 (true)      q0.5 (true)      q0.9 (true)")
for j, x in enumerate(probe.features[:, 0]):
    cells = [f"{est[j, k]:6.2f} ({task.true_quantile(x, k / 100):6.2f})" for k in (10, 50, 90)]
    print(f"  {x:.3f}  " + "  ".join(cells))

print("\ngap (predicted minus true) for the first rows:",
      np.round(gap(model.predict(probe, mc_seed=2), probe.targets), 2))

# the model round-trips through JSON
with tempfile.TemporaryDirectory() as d:
    path = os.path.join(d, "model.json")
    model.save(path)
    back = CQRModel.load(path)
    same = np.array_equal(back.predict(probe, mc_seed=3).values,
                          model.predict(probe, mc_seed=3).values)
    print("reloaded model predicts identically:", same)

"""
Split-conformal calibration on its own
======================================

No network here. We take a deliberately overconfident quantile model (the
true conditional quantiles with the spread halved) and watch calibration
widen its intervals until they cover as advertised.
"""

import numpy as np

from cqrkit import build_table, conformalize, coverage_bound, picp_curve
from cqrkit.data import SyntheticTask, norm_ppf

task = SyntheticTask()

# standard normal quantiles at the 101 grid levels; the two endpoints
# would be infinite, so push them far out instead
z = norm_ppf(np.linspace(0, 1, 101)[1:-1])
z = np.r_[z[0] - 10, z, z[-1] + 10]


def narrow(ds):
    x = ds.features[:, 0]
    return task.mu(x)[:, None] + 0.5 * task.sigma(x)[:, None] * z


cal = task.sample(1000, seed=1)
test = task.sample(20_000, seed=2)

# the calibration table stores one constant per symmetric quantile pair
table = build_table(narrow(cal), cal.targets)
print("qhat for the 80% and 90% pairs:", table.qhat[table.pair_for_alpha(0.2)],
      table.qhat[table.pair_for_alpha(0.1)])

curve = picp_curve(narrow(test), table, test.targets)
print("\nnominal   raw    conformal   guaranteed range")
for level in (0.5, 0.8, 0.9, 0.98):
    i = int(np.argmin(np.abs(curve.nominal - level)))
    lo, hi = coverage_bound(table.n, 1 - curve.nominal[i])
    print(f"  {curve.nominal[i]:.2f}   {curve.raw[i]:.3f}    {curve.conformal[i]:.3f}      "
          f"({lo:.3f}, {hi:.3f}]")

# calibrated quantiles for a single input, showing how much the 90% band widened
one = test.subset(np.arange(1))
cq = conformalize(narrow(one), table)
lo, hi = cq.intervals()
i = table.pair_for_alpha(0.1)
print(f"\nx = {one.features[0, 0]:.3f}: raw 90% band "
      f"[{narrow(one)[0, table.lower[i]]:.2f}, {narrow(one)[0, table.upper[i]]:.2f}], "
      f"calibrated [{lo[0, i]:.2f}, {hi[0, i]:.2f}]")

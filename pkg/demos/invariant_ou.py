import numpy as np

from rsjd.ergodic import CycleConfig, estimate_invariant, positivity_check, run_cycles
from rsjd.model import builtin_model, linear_switching_model
from rsjd.simulate import SimConfig
from rsjd.stopping import Ball
from rsjd.testfunctions import quadratic

ou = builtin_model("ou-benchmark")
cc = CycleConfig(Ball([0.0], 0.5), Ball([0.0], 2.0), 1, 200, cfg=SimConfig(dt=2e-3, seed=3))
est = estimate_invariant(run_cycles(ou, cc))
m2, se = est.integrate(quadratic())
print(f"OU second moment {m2:.4f} +- {se:.4f} (exact 1)")
for rep in positivity_check(est, [Ball([0.0], 0.5), Ball([-1.5], 0.5)], [1]):
    print("   ", rep["domain"], rep["status"], f"{rep['mass']:.4f}")

# two regimes with constant rates lam = 1, mu = 2: marginal (2/3, 1/3)
two = linear_switching_model([1.0, 1.0], [np.sqrt(2), np.sqrt(2)], [[-1.0, 1.0], [2.0, -2.0]])
cc = CycleConfig(Ball([0.0], 0.5), Ball([0.0], 2.0), 1, 200, cfg=SimConfig(dt=1e-2, seed=4))
marg, mse = estimate_invariant(run_cycles(two, cc)).regime_marginal()
print("regime marginal", np.round(marg, 4), "+-", np.round(mse, 4))

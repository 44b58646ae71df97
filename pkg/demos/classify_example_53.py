import numpy as np

from rsjd.model import builtin_model
from rsjd.simulate import SimConfig
from rsjd.stopping import Ball, classify

# the two variants differ only by the jump part; expect transience vs positive recurrence
cfg = SimConfig(dt=0.02, seed=1)
domains = [Ball([0.0], 1.0), Ball([0.5], 1.5)]
for fam in ("example-5.3-diffusion", "example-5.3-stabilized"):
    spec = builtin_model(fam)
    starts = [(np.array([3.0]), 1), (np.array([-3.0]), spec.num_regimes)]
    res = classify(spec, starts, domains, 500, cfg)
    print(f"{fam:26s} {res.verdict}")
    for key, verdict in list(res.pair_verdicts.items())[:3]:
        print("   ", key, verdict)

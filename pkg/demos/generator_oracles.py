import numpy as np

from rsjd.generator import apply_generator
from rsjd.jumps import PowerLawProfile, RadialEnvelope, TiltedRadialKernel
from rsjd.model import ModelSpec, builtin_model
from rsjd.testfunctions import constant, quadratic

ou = builtin_model("ou-benchmark")
for x in (-2.0, 0.0, 1.0, 3.5):
    print(f"OU, f = x^2, x = {x:5.1f}: {apply_generator(ou, quadratic(), np.array([x]), 1): .6f}"
          f"  closed form {-2 * x * x + 2: .6f}")

for fam in ("example-5.1", "example-5.2", "example-5.3-stabilized"):
    spec = builtin_model(fam)
    x = np.full(spec.dim, 0.7)
    print(f"{fam}: constant -> {apply_generator(spec, constant(2.5), x, 1):.2e}")

# pure truncated alpha-stable kernel with f = |x|^2 gives 2 / (2 - alpha)
alpha = 1.0
prof = PowerLawProfile(1, 1.0, alpha, r_max=1.0)
kern = TiltedRadialKernel(prof, lambda x, i: np.ones(np.shape(x)[:-1]))
pure = ModelSpec(1, 1, lambda x, i: 0.0 * np.asarray(x),
                 lambda x, i: np.zeros(np.shape(x)[:-1] + (1, 1)),
                 lambda x: np.zeros(np.shape(x)[:-1] + (1, 1)), 1.0, kern,
                 RadialEnvelope(prof, 1.0))
print(f"stable kernel: {apply_generator(pure, quadratic(), np.array([0.7]), 1):.10f}"
      f"  vs {2 / (2 - alpha):.10f}")

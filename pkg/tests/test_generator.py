import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsjd.generator import (IntegrabilityError, QuadratureConfig, apply_generator,
                            apply_generator_grid, local_term, nonlocal_result, switching_term)
from rsjd.jumps import PowerLawProfile, RadialEnvelope, ShellProfile, TiltedRadialKernel
from rsjd.model import BUILTIN_FAMILIES, ModelSpec, builtin_model
from rsjd.testfunctions import (Growth, TestFunction, constant, gaussian_bump,
                                linear_combination, power_radial, quadratic)

# high-precision quadrature of the compensated alpha = 1.2 integral of the
# smoothed |x|^0.5 at x = 3 (mpmath, 50 digits, Taylor series near z = 0)
STABLE_12_AT_3 = 0.34799957284283835


def _zero(x, i):
    return np.zeros(np.shape(x)[:-1] + (1, 1))


def _pure_jump(kern, env):
    return ModelSpec(1, 1, lambda x, i: 0.0 * np.asarray(x), _zero,
                     lambda x: np.zeros(np.shape(x)[:-1] + (1, 1)), 1.0, kern, env)


def _ones(x, i):
    return np.ones(np.shape(x)[:-1])


def _identity():
    return TestFunction(lambda x, i: np.asarray(x)[..., 0],
                        lambda x, i: np.ones(np.shape(x)),
                        lambda x, i: np.zeros(np.shape(x) + (1,)),
                        Growth.polynomial(1.0), "x")


def test_one_sided_shell_kernel():
    prof = ShellProfile(1, 1.0, 1.0, 2.0)
    kern = TiltedRadialKernel(prof, lambda x, i: np.full(np.shape(x)[:-1], 0.5),
                              lambda x, i: np.full(np.shape(x), 0.5))
    spec = _pure_jump(kern, RadialEnvelope(prof, 1.0))
    assert abs(apply_generator(spec, _identity(), np.array([0.3]), 1) - 1.5) < 1e-8


def test_truncated_stable_quadratic():
    prof = PowerLawProfile(1, 1.0, 0.5, r_max=1.0)
    spec = _pure_jump(TiltedRadialKernel(prof, _ones), RadialEnvelope(prof, 1.0))
    assert abs(apply_generator(spec, quadratic(), np.array([-2.0]), 1) - 4.0 / 3.0) < 1e-8


def test_stable_power_function_against_oracle():
    prof = PowerLawProfile(1, 1.0, 1.2)
    spec = _pure_jump(TiltedRadialKernel(prof, _ones), RadialEnvelope(prof, 1.0))
    res = nonlocal_result(spec, power_radial(0.5), np.array([3.0]), 1)
    assert abs(res.value / STABLE_12_AT_3 - 1) < 1e-6
    assert res.error < 1e-6


@pytest.mark.parametrize("fam", BUILTIN_FAMILIES)
def test_constants_annihilated(fam):
    spec = builtin_model(fam)
    x = np.full(spec.dim, -1.7)
    for i in spec.regimes:
        assert abs(apply_generator(spec, constant(-3.0), x, i)) <= 1e-10


@given(a=st.floats(-2, 2), b=st.floats(-2, 2))
@settings(max_examples=8, deadline=None)
def test_linearity(a, b):
    spec = builtin_model("example-5.2")
    f, g = gaussian_bump(1.0), power_radial(0.8)
    x = np.array([1.3])
    h = linear_combination([(a, f), (b, g)])
    cfg = QuadratureConfig()
    lhs = apply_generator(spec, h, x, 2, cfg)
    rf = nonlocal_result(spec, f, x, 2, cfg)
    rg = nonlocal_result(spec, g, x, 2, cfg)
    rhs = a * apply_generator(spec, f, x, 2, cfg) + b * apply_generator(spec, g, x, 2, cfg)
    slack = abs(a) * rf.error + abs(b) * rg.error + cfg.rel_tol * (abs(lhs) + 1) + 1e-12
    assert abs(lhs - rhs) <= 2 * slack


@pytest.mark.parametrize("fam", ["example-5.1", "example-5.2"])
def test_quadrature_convergence(fam):
    spec = builtin_model(fam)
    x = np.full(spec.dim, 2.5)
    f = power_radial(0.9)
    coarse = nonlocal_result(spec, f, x, 1, QuadratureConfig(rel_tol=1e-6))
    fine = nonlocal_result(spec, f, x, 1, QuadratureConfig(rel_tol=5e-7))
    assert abs(coarse.value - fine.value) <= coarse.error + fine.error


def test_no_jump_degeneration_exact():
    spec = builtin_model("example-5.3-diffusion")
    f = gaussian_bump(1.0, weights=[1.0, 2.0])
    x = np.array([0.7])
    for i in (1, 2):
        assert apply_generator(spec, f, x, i) == local_term(spec, f, x, i) + switching_term(spec, f, x, i)


def test_ou_quadratic_closed_form_on_grid():
    spec = builtin_model("ou-benchmark")
    xs = np.linspace(-4, 4, 17)[:, None]
    vals = apply_generator_grid(spec, quadratic(), xs, [1])[:, 0]
    assert np.allclose(vals, -2 * xs[:, 0] ** 2 + 2, atol=1e-12, rtol=0)


def test_switching_term_two_state():
    spec = builtin_model("example-5.3-diffusion")
    f = TestFunction(lambda x, i: np.asarray(i, dtype=float) + 0.0 * np.asarray(x)[..., 0],
                     lambda x, i: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(i) + (1,))),
                     lambda x, i: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(i) + (1,)) + (1,)),
                     Growth.bounded(2.0))
    x = np.array([[0.0]])
    q = spec.q_matrix(x)[0]
    assert switching_term(spec, f, x[0], 1) == pytest.approx(q[0, 1])
    assert switching_term(spec, f, x[0], 2) == pytest.approx(-q[1, 0])


def test_example_51_power_function_decreasing():
    spec = builtin_model("example-5.1")
    f = power_radial(1.0)
    for i in (1, 2):
        vals = [apply_generator(spec, f, np.array([r, 0.0]), i) for r in (5.0, 10.0, 20.0)]
        assert vals[0] > vals[1] > vals[2]


def test_growth_beyond_tail_is_an_integrability_error():
    spec = builtin_model("example-5.2")
    with pytest.raises(IntegrabilityError, match="integrability violation"):
        nonlocal_result(spec, quadratic(), np.array([0.5]), 1)


def test_dimension_four_rejected():
    prof = PowerLawProfile(4, 1.0, 0.5)
    spec = ModelSpec(4, 1, lambda x, i: 0.0 * np.asarray(x),
                     lambda x, i: np.broadcast_to(np.eye(4), np.shape(x)[:-1] + (4, 4)),
                     lambda x: np.zeros(np.shape(x)[:-1] + (1, 1)), 1.0,
                     TiltedRadialKernel(prof, _ones), RadialEnvelope(prof, 1.0))
    with pytest.raises(NotImplementedError):
        apply_generator(spec, gaussian_bump(), np.zeros(4), 1)


def test_quadrature_config_invariants():
    with pytest.raises(ValueError):
        QuadratureConfig(small_jump_radius=1.5)
    with pytest.raises(ValueError):
        QuadratureConfig(rel_tol=0.0)


def test_small_jump_radius_only_moves_bookkeeping_for_symmetric_kernels():
    spec = builtin_model("example-5.1")
    f = gaussian_bump(1.5)
    x = np.array([0.5, -0.2])
    a = apply_generator(spec, f, x, 1, QuadratureConfig(small_jump_radius=1.0))
    b = apply_generator(spec, f, x, 1, QuadratureConfig(small_jump_radius=0.5))
    assert abs(a - b) < 1e-6 * max(1.0, abs(a))
    assert math.isfinite(a)

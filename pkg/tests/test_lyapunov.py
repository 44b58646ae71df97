import json
import math

import numpy as np
import pytest

from rsjd.generator import IntegrabilityError
from rsjd.jumps import PowerLawProfile, RadialEnvelope, TiltedRadialKernel
from rsjd.lyapunov import (check_c1, check_c2, drift_jump_criterion_1d, drift_jump_terms,
                           exit_witness, power_criterion)
from rsjd.model import ModelSpec, builtin_model
from rsjd.testfunctions import power_radial, quadratic


def test_c1_ou_report_invariants():
    rep = check_c1(builtin_model("ou-benchmark"), quadratic(), 0.5, 4.0, radii=32)
    assert rep.holds and rep.failures == []
    assert rep.witness_radius in rep.grid["radii"]
    assert rep.margin <= -1.0
    assert rep.details["violations_inside_r_star"] > 0
    json.dumps(rep.to_dict())


def test_c1_scaling_remark():
    # G V = (2 - 2 x^2) / 20 stays above -1 on [2, 3] for V = x^2 / 20
    rep = check_c1(builtin_model("ou-benchmark"), quadratic(0.05), 2.0, 3.0, radii=8)
    assert rep.status == "fails"
    assert rep.details["required_scale"] == pytest.approx(1 / 0.3)


def test_c2_ou_holds_with_growth():
    rep = check_c2(builtin_model("ou-benchmark"), quadratic(), 0.5, 20.0, radii=16)
    assert rep.holds
    assert rep.details["growth_evidence"]


def test_c1_fails_for_transient_diffusion():
    rep = check_c1(builtin_model("example-5.3-diffusion"), power_radial(1.0), 2.0, 50.0, radii=8)
    assert rep.status == "fails"
    assert math.isnan(rep.witness_radius)
    assert rep.failures


def test_c1_on_jump_model():
    rep = check_c1(builtin_model("example-5.1"), power_radial(1.0), 2.0, 40.0, radii=6,
                   directions=8)
    assert rep.holds


def test_power_criterion_example_51():
    rep = power_criterion(builtin_model("example-5.1"), 1.0, r_min=2.0, r_max=1e5, radii=12,
                          directions=4)
    assert rep.status == "holds-on-grid"
    with pytest.raises(ValueError):
        power_criterion(builtin_model("example-5.1"), 2.5)


def test_drift_jump_criterion_example_52():
    rep = drift_jump_criterion_1d(builtin_model("example-5.2"), np.geomspace(2.0, 200.0, 10))
    assert rep.status == "holds-on-grid"
    assert rep.witness_radius in rep.grid["radii"]


def test_drift_jump_terms_no_jumps():
    a, b = drift_jump_terms(builtin_model("example-5.3-diffusion"), 5.0, 1)
    assert (a, b) == (1.0, 0.0)


def test_drift_jump_criterion_needs_first_moment():
    prof = PowerLawProfile(1, 1.0, 0.5, 0.8)
    spec = ModelSpec(1, 1, lambda x, i: -np.asarray(x), lambda x, i: np.ones(np.shape(x)[:-1] + (1, 1)),
                     lambda x: np.zeros(np.shape(x)[:-1] + (1, 1)), 1.0,
                     TiltedRadialKernel(prof, lambda x, i: np.ones(np.shape(x)[:-1])),
                     RadialEnvelope(prof, 1.0))
    with pytest.raises(IntegrabilityError):
        drift_jump_criterion_1d(spec, [2.0, 4.0])
    with pytest.raises(ValueError):
        drift_jump_criterion_1d(builtin_model("example-5.1"), [2.0])


@pytest.mark.parametrize("fam", ["ou-benchmark", "example-5.3-diffusion", "example-5.2"])
def test_exit_witness(fam):
    w = exit_witness(builtin_model(fam), D_radius=1.5)
    assert w.check.holds
    assert w.gamma > 2
    assert w.check.margin >= w.gamma
    with pytest.raises(ValueError):
        exit_witness(builtin_model(fam), D_radius=0.0)

import warnings

import numpy as np
import pytest

from rsjd.ergodic import (BinGrid, CycleConfig, default_grid, estimate_invariant,
                          lag1_autocorrelation, positivity_check, run_cycles, time_average)
from rsjd.model import builtin_model
from rsjd.simulate import SimConfig
from rsjd.stopping import Ball
from rsjd.testfunctions import quadratic


@pytest.fixture(scope="module")
def ou_cycles():
    cc = CycleConfig(Ball([0.0], 0.5), Ball([0.0], 2.0), 1, 96, cfg=SimConfig(dt=2e-3, seed=7))
    return run_cycles(builtin_model("ou-benchmark"), cc)


def test_bin_grid_indexing():
    g = BinGrid(-2.0, 2.0, 4, 2, 2)
    assert g.cells == 16 and g.size == 34
    idx = g.index(np.array([[-1.5, -1.5], [1.5, -1.5], [0.1, 0.1], [5.0, 0.0]]), np.array([1, 1, 2, 2]))
    assert list(idx) == [0, 12, 16 + 10, 33]
    c = g.centers()
    assert c.shape == (16, 2) and np.allclose(c[0], [-1.5, -1.5])
    assert g.subpoints(2).shape == (16, 4, 2)
    assert g.covers(Ball([1.0, 1.0], 0.5)) and not g.covers(Ball([1.8, 0.0], 0.5))


def test_default_grid():
    g = default_grid(builtin_model("example-5.1"), Ball([0.0, 0.0], 2.0))
    assert (g.lower, g.upper, g.bins) == (-8.0, 8.0, 64)


def test_cycle_config_checks():
    with pytest.raises(ValueError, match="strictly inside"):
        CycleConfig(Ball([0.0], 2.0), Ball([0.0], 2.0), 1, 10)
    cc = CycleConfig(Ball([0.0], 1.9), Ball([0.0], 2.0), 1, 10, cfg=SimConfig(dt=0.01))
    with pytest.raises(ValueError, match="margin"):
        run_cycles(builtin_model("ou-benchmark"), cc)
    cc = CycleConfig(Ball([0.0], 0.5), Ball([0.0], 2.0), 3, 10)
    with pytest.raises(ValueError, match="anchor regime"):
        run_cycles(builtin_model("ou-benchmark"), cc)


def test_cycles_accounting(ou_cycles):
    cy = ou_cycles
    assert cy.n_cycles == 96 and not cy.aborted
    assert np.all(np.abs(cy.occupation.sum(axis=1) - cy.lengths) <= cy.dt)
    assert np.all(np.abs(cy.starts[:, 0]) <= 0.5)
    assert np.all(cy.anchor_occupation <= cy.lengths)
    order = cy.chain_order()
    assert np.all(np.diff(cy.chain[order]) >= 0)


def test_cycle_starts_nearly_uncorrelated(ou_cycles):
    order = ou_cycles.chain_order()
    assert abs(lag1_autocorrelation(ou_cycles.lengths[order])) < 0.3


def test_estimate_properties(ou_cycles):
    est = estimate_invariant(ou_cycles)
    assert est.total_mass == pytest.approx(1.0)
    assert np.all(est.se >= 0)
    again = estimate_invariant(ou_cycles)
    assert np.array_equal(est.replicates, again.replicates)
    m, se = est.integrate(quadratic())
    assert abs(m - 1.0) < max(0.1, 3 * se)
    marg, mse = est.regime_marginal()
    assert marg == pytest.approx([1.0]) and mse[0] < 1e-12
    header = est.to_csv().split("\n")[0]
    assert header == "bin_center_1,regime,weight,se"
    assert est.to_dict()["n_cycles"] == 96


def test_estimate_needs_two_cycles(ou_cycles):
    import dataclasses
    one = dataclasses.replace(ou_cycles, lengths=ou_cycles.lengths[:1],
                              occupation=ou_cycles.occupation[:1])
    with pytest.raises(ValueError, match="at least 2"):
        estimate_invariant(one)


def test_positivity_statuses(ou_cycles):
    est = estimate_invariant(ou_cycles)
    rep = positivity_check(est, [Ball([0.0], 0.5), Ball([20.0], 1.0)], [1])
    assert rep[0]["status"] == "positive" and rep[0]["mass"] > 0
    assert rep[1]["status"] == "not-covered"


def test_overflow_warning():
    cc = CycleConfig(Ball([0.0], 0.5), Ball([0.0], 2.0), 1, 8, cfg=SimConfig(dt=2e-3, seed=1),
                     grid=BinGrid(-1.0, 1.0, 8, 1, 1))
    cy = run_cycles(builtin_model("ou-benchmark"), cc)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = estimate_invariant(cy)
    assert any("overflow" in str(w.message) for w in caught)
    assert est.overflow[0] > 0.01


def test_time_average_checks():
    spec = builtin_model("ou-benchmark")
    with pytest.raises(ValueError, match="bounded"):
        time_average(spec, quadratic(), (np.zeros(1), 1), 1.0, 10)
    m, se = time_average(spec, lambda x, i: np.tanh(x[..., 0]) ** 2, (np.zeros(1), 1), 20.0, 200,
                         SimConfig(dt=0.01))
    assert 0 < m < 1 and se > 0

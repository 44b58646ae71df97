import io
import math

import numpy as np
import pytest
from scipy import stats

from rsjd.jumps import PowerLawProfile, RadialEnvelope, TiltedRadialKernel
from rsjd.model import ModelSpec, builtin_model, linear_switching_model
from rsjd.simulate import (EnvelopeViolation, SimConfig, SimulationError, simulate_ensemble,
                           simulate_path, terminal_values)


def _pure_jump(level, env_level, alpha=0.8):
    prof = PowerLawProfile(1, 1.0, alpha, 1.5)
    kern = TiltedRadialKernel(prof, lambda x, i: np.full(np.shape(x)[:-1], level))
    return ModelSpec(1, 1, lambda x, i: 0.0 * np.asarray(x),
                     lambda x, i: np.zeros(np.shape(x)[:-1] + (1, 1)),
                     lambda x: np.zeros(np.shape(x)[:-1] + (1, 1)), 1.0, kern,
                     RadialEnvelope(prof, env_level))


def test_config_invariants():
    with pytest.raises(ValueError, match="ε ≤ 1"):
        SimConfig(small_jump_cutoff=1.5)
    with pytest.raises(ValueError, match="dt > 0"):
        SimConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(small_jump_mode="drop")


def test_uniformization_bound_enforced():
    spec = builtin_model("example-5.2")
    with pytest.raises(ValueError, match="qbar"):
        simulate_path(spec, np.zeros(1), 1, 1.0, SimConfig(dt=0.6))


def test_replay_is_bit_exact_and_batch_free():
    spec = builtin_model("example-5.1")
    cfg = SimConfig(dt=0.01, seed=4)
    a = simulate_path(spec, np.array([0.5, 0.5]), 1, 1.0, cfg, path_index=7)
    b = simulate_path(spec, np.array([0.5, 0.5]), 1, 1.0, cfg, path_index=7)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.regimes, b.regimes)
    ens = simulate_ensemble(spec, np.array([0.5, 0.5]), 1, 1.0, cfg, 9, lambda r: r.states[-1],
                            batch_size=4)
    assert np.array_equal(ens.values[7], a.states[-1])
    other = simulate_path(spec, np.array([0.5, 0.5]), 1, 1.0, SimConfig(dt=0.01, seed=5), 7)
    assert not np.array_equal(a.states, other.states)


def test_ou_weak_order():
    # exact second moment of the Euler chain for OU from 0 at t = 1
    def euler_m2(h):
        n = round(1 / h)
        return 2 * h * (1 - (1 - h) ** (2 * n)) / (1 - (1 - h) ** 2)

    exact = 1 - math.exp(-2)
    spec = builtin_model("ou-benchmark")
    biases = []
    for h in (1e-2, 5e-3, 2.5e-3):
        x, _, _ = terminal_values(spec, np.zeros(1), 1, 1.0, SimConfig(dt=h, seed=1), 40_000)
        m2 = x[:, 0] ** 2
        se = m2.std(ddof=1) / math.sqrt(len(m2))
        assert abs(m2.mean() - euler_m2(h)) < 3 * se
        biases.append(abs(euler_m2(h) - exact))
    assert biases[0] > biases[1] > biases[2]
    assert biases[0] / biases[1] == pytest.approx(2.0, rel=0.05)


def test_thinning_exact_poisson_counts():
    spec = _pure_jump(1.0, 1.0)
    cfg = SimConfig(dt=0.05, seed=3, small_jump_cutoff=0.2)
    horizon = 2.0
    counts = simulate_ensemble(spec, np.zeros(1), 1, horizon, cfg, 3000,
                               lambda r: len(r.jump_events)).values
    lam = spec.jump_envelope.mass_beyond(0.2) * horizon
    counts = np.asarray(counts)
    top = int(stats.poisson.ppf(0.995, lam))
    observed = np.array([np.sum(counts == k) for k in range(top)] + [np.sum(counts >= top)])
    probs = np.array([stats.poisson.pmf(k, lam) for k in range(top)]
                     + [stats.poisson.sf(top - 1, lam)])
    assert stats.chisquare(observed, probs * len(counts)).pvalue > 1e-3


def test_thinning_halves_rate():
    spec = _pure_jump(0.5, 1.0)
    cfg = SimConfig(dt=0.05, seed=3, small_jump_cutoff=0.2)
    counts = np.asarray(simulate_ensemble(spec, np.zeros(1), 1, 2.0, cfg, 3000,
                                          lambda r: len(r.jump_events)).values)
    lam = 0.5 * spec.jump_envelope.mass_beyond(0.2) * 2.0
    assert abs(counts.mean() - lam) < 4 * math.sqrt(lam / len(counts))


def test_envelope_violation_has_witness():
    spec = _pure_jump(2.0, 1.0)
    with pytest.raises(EnvelopeViolation) as exc:
        simulate_path(spec, np.zeros(1), 1, 5.0, SimConfig(dt=0.05, small_jump_cutoff=0.2))
    assert exc.value.witness["ratio"] > 1


def test_non_finite_state_error():
    spec = ModelSpec(1, 1, lambda x, i: np.full(np.shape(x), np.inf),
                     lambda x, i: np.ones(np.shape(x)[:-1] + (1, 1)),
                     lambda x: np.zeros(np.shape(x)[:-1] + (1, 1)), 1.0)
    with pytest.raises(SimulationError, match="non-finite"):
        simulate_path(spec, np.zeros(1), 1, 0.1, SimConfig(dt=0.01))


def test_switching_rate_constant_q():
    spec = linear_switching_model([1.0, 1.0], [1.0, 1.0], [[-2.0, 2.0], [2.0, -2.0]])
    cfg = SimConfig(dt=0.01, seed=8)
    n = simulate_ensemble(spec, np.zeros(1), 1, 5.0, cfg, 400,
                          lambda r: len(r.switch_events)).values
    # symmetric rate 2 switches: 2 per unit time in either regime
    assert abs(np.mean(n) - 10.0) < 4 * math.sqrt(10.0 / 400)


def test_path_csv_schema():
    spec = builtin_model("example-5.2")
    rec = simulate_path(spec, np.zeros(1), 1, 0.5, SimConfig(dt=0.05, seed=2))
    text = rec.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "t,x_1,regime,event_flag"
    assert len(lines) == len(rec.times) + 1
    flags = rec.event_flags()
    assert set(np.unique(flags)) <= {0, 1, 2, 3}
    buf = io.StringIO()
    rec.to_csv(buf)
    assert buf.getvalue() == text


@pytest.mark.parametrize("mode", ["truncate", "gaussian-correct"])
def test_small_jump_modes_run(mode):
    spec = builtin_model("example-5.3-stabilized")
    x, i, alive = terminal_values(spec, np.zeros(1), 1, 1.0, SimConfig(dt=0.01, small_jump_mode=mode),
                                  200)
    assert alive.all() and np.isfinite(x).all()

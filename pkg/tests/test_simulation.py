import numpy as np
import pytest

from fdibench.network import load_bundled_network
from fdibench.simulation import (OMEGA_S, GridEvent, SimConfig,
                                 SimulationDiverged, SimulationError,
                                 simulate, steady_state)


@pytest.fixture(scope="module")
def net():
    return load_bundled_network()


def test_steady_state_residual(net):
    op = steady_state(net)
    assert op.residual <= 1e-9
    B = net.susceptance_matrix
    P = net.injections
    assert np.abs(B @ op.angles - P).max() <= 1e-9


def test_steady_state_absorbs_imbalance(net):
    P = net.injections.copy()
    P[0] += 0.05  # unbalanced
    op = steady_state(net, P)
    assert op.residual <= 1e-9


def test_equilibrium_invariance(net):
    """No events, no noise: the simulated angles must not drift."""
    cfg = SimConfig(duration=5.0, noise_std=0.0)
    trace = simulate(net, [], cfg)
    drift = np.abs(trace.angles - trace.angles[0]).max()
    assert drift < 1e-9


def test_agc_restores_frequency(net):
    """After a 0.1 pu load change the horizon frequency error is < 1e-3 pu."""
    cfg = SimConfig(duration=30.0, noise_std=0.0)
    events = [GridEvent("load-change", 7, -0.10, 1.0)]
    trace = simulate(net, events, cfg)
    final_freq = np.abs(trace.freq[-1]).max()
    assert final_freq < 1e-3


def test_frequency_estimate_is_backward_difference(net):
    cfg = SimConfig(duration=2.0, noise_std=0.0)
    trace = simulate(net, [GridEvent("load-change", 7, -0.1, 0.5)], cfg)
    T_s = 1.0 / cfg.sample_rate
    expected = (trace.angles[10] - trace.angles[9]) / (T_s * OMEGA_S)
    np.testing.assert_allclose(trace.freq[10], expected, rtol=0, atol=1e-15)


def test_noise_is_seeded(net):
    cfg = SimConfig(duration=1.0, noise_std=1e-5, seed=7)
    a = simulate(net, [], cfg)
    b = simulate(net, [], cfg)
    np.testing.assert_array_equal(a.angles, b.angles)
    c = simulate(net, [], SimConfig(duration=1.0, noise_std=1e-5, seed=8))
    assert not np.array_equal(a.angles, c.angles)


def test_event_on_unknown_bus_rejected(net):
    with pytest.raises(Exception, match="999"):
        simulate(net, [GridEvent("load-change", 999, -0.1, 1.0)], SimConfig(duration=1.0))


def test_unsupported_event_kind_rejected():
    with pytest.raises(ValueError, match="kind"):
        GridEvent("trip", 1, 0.0, 1.0)


def test_divergence_carries_partial_trace(net):
    cfg = SimConfig(duration=30.0, angle_bound=0.5)
    events = [GridEvent("load-change", 7, -80.0, 0.5)]  # absurd load step
    with pytest.raises(SimulationDiverged) as exc:
        simulate(net, events, cfg)
    partial = exc.value.partial_trace
    assert partial.n_samples >= 1
    assert "diverged_at" in partial.aux


def test_dt_must_divide_sample_period():
    with pytest.raises(ValueError):
        SimConfig(dt=0.015)  # 0.02 s sample period not an integer multiple


def test_measurement_tap_feeds_agc(net):
    """A constant additive distortion on all buses biases the AGC estimate."""
    cfg = SimConfig(duration=4.0, noise_std=0.0)

    def tap(k, t, angles):
        return angles + (0.0005 * t if t >= 1.0 else 0.0)

    clean = simulate(net, [], cfg)
    tapped = simulate(net, [], cfg, measurement_tap=tap)
    # the tap distorts the record
    assert np.abs(tapped.angles[-1] - clean.angles[-1]).max() > 1e-4
    # and drives the AGC integral away from zero (attack propagates to control)
    assert np.abs(tapped.aux["agc"][-1]).max() > 1e-6
    assert np.abs(clean.aux["agc"][-1]).max() < 1e-12


def test_trace_grid_and_labels(net):
    cfg = SimConfig(duration=2.0)
    trace = simulate(net, [], cfg)
    assert trace.n_samples == 101
    assert trace.bus_ids == net.bus_ids
    assert trace.t[0] == 0.0
    np.testing.assert_allclose(np.diff(trace.t), 0.02, rtol=0, atol=1e-12)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdibench.attacks import (AttackError, AttackSpec, MeasurementTap,
                              apply_attack, attack_label_mask)
from fdibench.trace import MeasurementTrace


def make_trace(n=1501, buses=(1, 2, 3, 4), rate=50.0, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate
    base = 0.1 + 0.05 * np.arange(len(buses))
    angles = base + 0.01 * rng.standard_normal((n, len(buses)))
    return MeasurementTrace(t=t, angles=angles, bus_ids=tuple(buses), sample_rate=rate)


def in_window(trace, spec):
    return (trace.t >= spec.t1 - 1e-9) & (trace.t <= spec.t2 + 1e-9)


def test_step_closed_form():
    trace = make_trace()
    spec = AttackSpec(kind="step", targets=(2,), t1=2.0, t2=22.0, c=1.03)
    out = apply_attack(trace, spec)
    w = in_window(trace, spec)
    np.testing.assert_array_equal(out.angles[w, 1], 1.03 * trace.angles[w, 1])
    # bit-exact outside the window and on non-targets
    np.testing.assert_array_equal(out.angles[~w], trace.angles[~w])
    np.testing.assert_array_equal(out.angles[:, [0, 2, 3]], trace.angles[:, [0, 2, 3]])


def test_step_small_constant():
    trace = make_trace()
    spec = AttackSpec(kind="step", targets=(3,), t1=2.0, t2=22.0, c=1.006)
    out = apply_attack(trace, spec)
    w = in_window(trace, spec)
    np.testing.assert_array_equal(out.angles[w, 2], 1.006 * trace.angles[w, 2])


def test_ramp_closed_form():
    trace = make_trace()
    for m in (0.000007, 0.00007):
        spec = AttackSpec(kind="ramp", targets=(2, 4), t1=2.0, t2=22.0, m=m)
        out = apply_attack(trace, spec)
        w = in_window(trace, spec)
        factor = 1.0 + m * (trace.t[w] - 2.0)
        for j in (1, 3):
            np.testing.assert_array_equal(out.angles[w, j],
                                          factor * trace.angles[w, j])
        np.testing.assert_array_equal(out.angles[~w], trace.angles[~w])


def test_rtw_closed_form():
    trace = make_trace()
    nom = {2: 0.15}
    for beta in (0.000325, 0.0015):
        spec = AttackSpec(kind="rtw", targets=(2,), t1=2.0, t2=22.0,
                          beta=beta, phi_nom=nom)
        out = apply_attack(trace, spec)
        w = in_window(trace, spec)
        phi = trace.angles[w, 1]
        ct = beta * (trace.t[w] - 2.0) * (phi - 0.15)
        np.testing.assert_array_equal(out.angles[w, 1], (1.0 + ct) * phi)
        np.testing.assert_array_equal(out.angles[~w], trace.angles[~w])


def test_rtw_literal_variant_collapses():
    trace = make_trace()
    spec = AttackSpec(kind="rtw", targets=(2,), t1=2.0, t2=22.0,
                      beta=0.0015, phi_nom={2: 0.15}, literal_rtw=True)
    out = apply_attack(trace, spec)
    w = in_window(trace, spec)
    phi = trace.angles[w, 1]
    ct = 0.0015 * (trace.t[w] - 2.0) * (phi - 0.15)
    np.testing.assert_array_equal(out.angles[w, 1], ct * phi)


def test_rtw_default_phi_nom_is_pre_event_mean():
    trace = make_trace()
    spec = AttackSpec(kind="rtw", targets=(2,), t1=2.0, t2=22.0, beta=0.0015)
    out = apply_attack(trace, spec)
    pre = trace.t < 1.0 - 1e-9
    nom = trace.angles[pre, 1].mean()
    w = in_window(trace, spec)
    phi = trace.angles[w, 1]
    ct = 0.0015 * (trace.t[w] - 2.0) * (phi - nom)
    np.testing.assert_allclose(out.angles[w, 1], (1.0 + ct) * phi, rtol=0, atol=0)


def test_poison_statistics_and_support():
    trace = make_trace()
    spec = AttackSpec(kind="poison", targets=(1, 3), t1=2.0, t2=22.0,
                      mu=0.0, sigma=0.08, seed=42)
    out = apply_attack(trace, spec)
    w = in_window(trace, spec)
    delta = out.angles[w][:, [0, 2]] - trace.angles[w][:, [0, 2]]
    # additive, zero-mean, published spread
    assert abs(delta.mean()) < 0.01
    assert abs(delta.std() - 0.08) < 0.01
    np.testing.assert_array_equal(out.angles[~w], trace.angles[~w])


def test_poison_is_reproducible_per_sample():
    trace = make_trace()
    spec = AttackSpec(kind="poison", targets=(2,), t1=2.0, t2=22.0,
                      mu=0.0, sigma=0.08, seed=7)
    a = apply_attack(trace, spec)
    b = apply_attack(trace, spec)
    np.testing.assert_array_equal(a.angles, b.angles)
    other = apply_attack(trace, AttackSpec(kind="poison", targets=(2,), t1=2.0,
                                           t2=22.0, mu=0.0, sigma=0.08, seed=8))
    assert not np.array_equal(a.angles, other.angles)


def test_online_tap_matches_posthoc_application():
    """The per-sample tap and the whole-trace transform agree bit-exactly."""
    trace = make_trace()
    specs = [
        AttackSpec(kind="step", targets=(2, 4), t1=2.0, t2=22.0, c=1.03),
        AttackSpec(kind="ramp", targets=(2,), t1=2.0, t2=22.0, m=7e-5),
        AttackSpec(kind="poison", targets=(2, 3), t1=2.0, t2=22.0, sigma=0.08, seed=3),
        AttackSpec(kind="rtw", targets=(2,), t1=2.0, t2=22.0, beta=0.0015,
                   phi_nom={2: 0.15}),
    ]
    for spec in specs:
        tap = MeasurementTap(spec, trace.bus_ids)
        online = np.stack([tap(k, trace.t[k], trace.angles[k])
                           for k in range(trace.n_samples)])
        posthoc = apply_attack(trace, spec)
        np.testing.assert_array_equal(online, posthoc.angles, err_msg=spec.kind)


def test_online_rtw_requires_phi_nom():
    spec = AttackSpec(kind="rtw", targets=(2,), t1=2.0, t2=22.0, beta=0.0015)
    with pytest.raises(AttackError, match="phi_nom"):
        MeasurementTap(spec, (1, 2, 3, 4))


def test_attack_window_is_inclusive():
    trace = make_trace(n=301)
    spec = AttackSpec(kind="step", targets=(2,), t1=1.0, t2=5.0, c=2.0)
    out = apply_attack(trace, spec)
    i1, i2 = 50, 250  # t = 1.0 and t = 5.0 at 50 Hz
    assert out.angles[i1, 1] == 2.0 * trace.angles[i1, 1]
    assert out.angles[i2, 1] == 2.0 * trace.angles[i2, 1]
    assert out.angles[i1 - 1, 1] == trace.angles[i1 - 1, 1]
    assert out.angles[i2 + 1, 1] == trace.angles[i2 + 1, 1]


def test_label_mask_matches_support():
    trace = make_trace(n=301)
    spec = AttackSpec(kind="step", targets=(2, 4), t1=1.0, t2=5.0, c=2.0)
    mask = attack_label_mask(spec, trace.t, trace.bus_ids)
    out = apply_attack(trace, spec)
    changed = out.angles != trace.angles
    # every changed cell is labeled; every label is on a target in the window
    assert not (changed & ~mask.mask).any()
    assert mask.mask[:, [0, 2]].sum() == 0
    assert np.array_equal(mask.any_bus, mask.mask.any(axis=1))


def test_validation_errors():
    with pytest.raises(AttackError, match="kind"):
        AttackSpec(kind="pulse", targets=(1,), t1=1.0, t2=2.0)
    with pytest.raises(AttackError, match="targets"):
        AttackSpec(kind="step", targets=(), t1=1.0, t2=2.0)
    with pytest.raises(AttackError, match="duplicate"):
        AttackSpec(kind="step", targets=(1, 1), t1=1.0, t2=2.0)
    with pytest.raises(AttackError):
        AttackSpec(kind="step", targets=(1,), t1=5.0, t2=2.0)
    trace = make_trace(n=101)
    with pytest.raises(AttackError, match="outside"):
        apply_attack(trace, AttackSpec(kind="step", targets=(2,), t1=1.0, t2=99.0))
    with pytest.raises(AttackError, match="not present"):
        apply_attack(trace, AttackSpec(kind="step", targets=(9,), t1=0.5, t2=1.0))


@settings(max_examples=30, deadline=None)
@given(
    kind=st.sampled_from(["step", "ramp", "rtw", "poison"]),
    t1=st.floats(min_value=0.1, max_value=2.0),
    span=st.floats(min_value=0.1, max_value=3.0),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_property_bit_exact_outside_support(kind, t1, span, seed):
    trace = make_trace(n=301)
    t2 = min(t1 + span, 5.9)
    spec = AttackSpec(kind=kind, targets=(2,), t1=t1, t2=t2, c=1.1, m=1e-4,
                      beta=1e-3, sigma=0.05, seed=seed, phi_nom={2: 0.1})
    out = apply_attack(trace, spec)
    outside = ~in_window(trace, spec)
    np.testing.assert_array_equal(out.angles[outside], trace.angles[outside])
    np.testing.assert_array_equal(out.angles[:, [0, 2, 3]], trace.angles[:, [0, 2, 3]])
    assert out.provenance == "attacked"

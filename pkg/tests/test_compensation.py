import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ebpcal.afe_model import ImpairmentSet
from ebpcal.compensation import (ActuatorState, OffsetEstimate, PeriodicFir, actuator_apply, ce_apply,
                                 dump_state, offset_subtract, pin_constraint)
from ebpcal.oracle import direct_ce_apply


@given(st.integers(1, 4), st.sampled_from([1, 3, 5]), st.integers(0, 11), st.integers(0, 2**16))
def test_ce_apply_matches_direct_form(m, length, phase0, seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(2, 24))
    ce = PeriodicFir(rng.normal(size=(2, m, length)))
    np.testing.assert_allclose(ce_apply(w, ce, phase0), direct_ce_apply(w, ce.taps, phase0), atol=1e-12)


@given(arrays(float, (4, 32), elements=st.floats(-1, 1)), st.integers(1, 8))
def test_identity_ce_is_pure_delay(w, m):
    ce = PeriodicFir.identity(m, 5)
    x = ce_apply(w, ce)
    np.testing.assert_array_equal(x[:, 2:], w[:, :-2])


def test_ce_is_periodic_in_phase():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(4, 40))
    ce = PeriodicFir(rng.normal(size=(4, 4, 3)))
    np.testing.assert_array_equal(ce_apply(w, ce, 1), ce_apply(w, ce, 5))


def test_pin_constraint_sets_impulse_and_mask():
    ce = pin_constraint(PeriodicFir(np.ones((4, 4, 5))), 1, 2)
    np.testing.assert_array_equal(ce.taps[1, 2], [0, 0, 1, 0, 0])
    mask = ce.adaptable_mask()
    assert not mask[1, 2] and mask.sum() == 15
    with pytest.raises(ValueError):
        pin_constraint(ce, 5, 0)


def test_periodic_fir_validation():
    with pytest.raises(ValueError):
        PeriodicFir(np.ones((4, 4, 4)))
    with pytest.raises(ValueError):
        PeriodicFir(np.ones((4, 4)))
    with pytest.raises(ValueError):
        OffsetEstimate(np.array([[np.inf]]))


def test_offset_subtract_periodic():
    est = OffsetEstimate(np.array([[0.1, 0.2]] * 4))
    y = offset_subtract(np.zeros((4, 6)), est, phase0=1)
    np.testing.assert_allclose(y[0], [-0.2, -0.1] * 3)


def test_actuator_quantizes_and_saturates():
    act = ActuatorState.initial(8, 4, 96e9)
    assert act.step == pytest.approx(260e-15 * 96e9)
    act.tau[0, 1] = 2.6 * act.step
    act.tau[0, 2] = 1e3 * act.step
    act.quantize()
    assert act.codes[0, 1] == 3
    assert act.codes[0, 2] == act.max_code == 192
    assert act.saturated


def test_actuator_apply_subtracts_delay_and_trims():
    imp = ImpairmentSet.zeros(4)
    act = ActuatorState.initial(4, 4, 96e9)
    act.tau[:, 1] = act.step
    act.gain_trim[:] = 0.5
    act.offset_trim[:] = 0.01
    act.quantize()
    eff = actuator_apply(imp, act)
    np.testing.assert_allclose(eff.phase_error[:, 1], -act.step)
    np.testing.assert_allclose(eff.gain_error, -0.5)
    np.testing.assert_allclose(eff.offset, -0.01)


def test_dump_state(tmp_path):
    ce = pin_constraint(PeriodicFir.identity(4, 3), 0, 0)
    dump_state(tmp_path / "s.json", ce, OffsetEstimate.zeros(4), ActuatorState.initial(4, 4, 96e9))
    data = json.loads((tmp_path / "s.json").read_text())
    assert data["pinned"] == [0, 0, 1]
    assert np.array(data["ce_taps"]).shape == (4, 4, 3)
    assert data["actuator"]["max_code"] == 192

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ebpcal.oracle import direct_ffe_forward
from ebpcal.rx_dsp import (DivergenceError, MimoFir, ffe_adapt, ffe_forward, slice, slice_indices,
                           total_squared_error)
from ebpcal.txchain import pam_levels


@given(st.integers(1, 9), st.integers(0, 2**16))
def test_ffe_matches_direct_form(length, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 30))
    g = MimoFir(rng.normal(size=(4, 4, length)))
    np.testing.assert_allclose(ffe_forward(x, g), direct_ffe_forward(x, g.taps), atol=1e-12)


@given(st.integers(0, 2**16), st.floats(-3, 3))
def test_ffe_linear(seed, a):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 4, 20))
    g = MimoFir(rng.normal(size=(4, 4, 5)))
    np.testing.assert_allclose(ffe_forward(x + a * y, g), ffe_forward(x, g) + a * ffe_forward(y, g), atol=1e-9)


def test_ffe_two_sample_shift_delays_one_symbol():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, 40))
    g = MimoFir(rng.normal(size=(4, 4, 5)))
    shifted = np.concatenate([np.zeros((4, 2)), x[:, :-2]], axis=1)
    np.testing.assert_allclose(ffe_forward(shifted, g)[:, 1:], ffe_forward(x, g)[:, :-1], atol=1e-12)


def test_identity_ffe_decimates():
    x = np.arange(40, dtype=float).reshape(4, 10)
    np.testing.assert_array_equal(ffe_forward(x, MimoFir.identity(1)), x[:, ::2])


@pytest.mark.parametrize("mod", [4, 16, 64, 256])
def test_slicer_maps_levels_to_themselves(mod):
    lv = pam_levels(mod)
    a, e = slice(lv, mod)
    np.testing.assert_array_equal(a, lv)
    np.testing.assert_array_equal(e, 0)
    np.testing.assert_array_equal(slice_indices([-10, 10], mod), [0, len(lv) - 1])


def test_lms_reduces_error_and_detects_divergence():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 400))
    target = MimoFir(rng.normal(size=(4, 4, 3)))
    ref = ffe_forward(x, target)
    g = MimoFir(np.zeros((4, 4, 3)), step=0.2)
    for _ in range(300):
        g = ffe_adapt(g, x, ffe_forward(x, g) - ref)
    assert np.max(np.abs(g.taps - target.taps)) < 1e-3
    with pytest.raises(DivergenceError):
        bad = MimoFir(np.zeros((4, 4, 3)), step=1e9)
        for _ in range(10):
            bad = ffe_adapt(bad, x, ffe_forward(x, bad) - ref)


def test_total_squared_error():
    np.testing.assert_array_equal(total_squared_error(np.array([[1.0, 2.0], [1.0, 0.0]])), [2.0, 4.0])

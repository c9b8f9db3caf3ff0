import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ebpcal.metrics import (AlignmentError, ber, ber_confidence, dominant_spurs, histogram,
                            image_frequencies, log_bins, moving_average, sndr_sfdr)


def test_ber_trivial_cases():
    ref = np.random.default_rng(0).integers(0, 2, 1000)
    assert ber(ref, ref).overall == 0.0
    flipped = ref.copy()
    flipped[::10] ^= 1
    assert ber(flipped, ref, align=False).overall == pytest.approx(0.1)


def test_ber_alignment_finds_lag():
    ref = np.random.default_rng(1).integers(0, 2, 2000)
    det = np.concatenate([np.zeros(7, int), ref])
    t = ber(det, ref, block_bits=500)
    assert t.lag == 7 and t.errors == 0 and t.instantaneous.size == 4


def test_ber_alignment_failure():
    rng = np.random.default_rng(2)
    with pytest.raises(AlignmentError):
        ber(rng.integers(0, 2, 500), rng.integers(0, 2, 500), max_lag=4)


@given(arrays(float, st.integers(1, 50), elements=st.floats(0, 1)), st.integers(1, 12))
def test_moving_average_bounds(x, window):
    ma = moving_average(x, window)
    assert ma.shape == x.shape
    assert np.all(ma >= x.min() - 1e-12) and np.all(ma <= x.max() + 1e-12)
    assert ma[-1] == pytest.approx(np.mean(x[-window:]))


def test_ber_confidence_rules():
    assert ber_confidence(200, 10**5) == (2e-3, False)
    bound, is_bound = ber_confidence(0, 10**5)
    assert is_bound and bound == pytest.approx(3.0 / 10**5, rel=0.01)


@given(arrays(float, st.integers(1, 200), elements=st.floats(1e-8, 0.5)))
def test_histogram_counts_every_value(values):
    counts, edges = histogram(values)
    assert counts.sum() == values.size
    assert edges.size == counts.size + 1


def test_log_bins_decades():
    edges = log_bins(1e-5, 1e-1, 10)
    assert edges.size == 41 and edges[0] == pytest.approx(1e-5) and edges[-1] == pytest.approx(0.1)


@pytest.mark.parametrize("phase", np.linspace(0, 2 * np.pi, 16, endpoint=False))
def test_sndr_phase_invariant(phase):
    n, k = 8192, 1531
    x = np.sin(2 * np.pi * k * np.arange(n) / n + phase)
    q = (np.floor(x * 128) + 0.5) / 128
    r = sndr_sfdr(q, n, k)
    assert r.sndr_dbfs == pytest.approx(49.9, abs=0.5)
    assert r.sfdr_dbfs >= r.sndr_dbfs


def test_sndr_of_known_spur():
    n = 4096
    t = np.arange(n)
    x = np.sin(2 * np.pi * 101 * t / n) + 0.01 * np.sin(2 * np.pi * 500 * t / n)
    r = sndr_sfdr(x, n, 101)
    assert r.sfdr_dbfs == pytest.approx(40.0, abs=1e-6)
    assert r.sndr_dbfs == pytest.approx(40.0, abs=1e-6)
    assert r.spurs[0][0] == pytest.approx(500 / n)


def test_sndr_rejects_missing_tone():
    with pytest.raises(ValueError):
        sndr_sfdr(np.random.default_rng(0).normal(size=1024), 1024, 100)


def test_image_frequencies_m4():
    imgs = image_frequencies(0.1, 1.0, 4)
    np.testing.assert_allclose(imgs, [0.15, 0.35, 0.4])


def test_dominant_spurs_filter():
    n = 4096
    t = np.arange(n)
    rng = np.random.default_rng(0)
    x = np.sin(2 * np.pi * 101 * t / n) + 1e-3 * np.sin(2 * np.pi * 700 * t / n) + 1e-6 * rng.normal(size=n)
    spurs = dominant_spurs(sndr_sfdr(x, n, 101), 20.0)
    assert len(spurs) == 1 and spurs[0][0] == pytest.approx(700 / n)
